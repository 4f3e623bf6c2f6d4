#include "bspdot/ot.hpp"

#include "bspdot/error.hpp"
#include "bspdot/random.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <sstream>

namespace bspdot {

CostField::CostField(BlockMatrix blocks) : blocks_(std::move(blocks)) {
  for (int i = 0; i < blocks_.rows(); ++i) {
    for (int j = 0; j < blocks_.cols(); ++j) {
      Matrix& c = blocks_(i, j);
      if (!c.allFinite()) fail(ErrorCode::InvalidInput, "CostField: non-finite block");
      const Eig e = sym_eig(c);
      const double top = std::max(e.values.cwiseAbs().maxCoeff(), 0.0);
      if (e.values(0) < -1e-12 * top) {
        std::ostringstream os;
        os << "CostField: block (" << i << ", " << j << ") has eigenvalue " << e.values(0);
        fail(ErrorCode::InvalidInput, os.str());
      }
      const Vector clipped = e.values.cwiseMax(0.0);
      c = sym(e.vectors * clipped.asDiagonal() * e.vectors.transpose());
    }
  }
}

Matrix CostField::traces() const {
  Matrix t(rows(), cols());
  for (int i = 0; i < rows(); ++i)
    for (int j = 0; j < cols(); ++j) t(i, j) = blocks_(i, j).trace();
  return t;
}

const char* to_string(Regularizer r) {
  switch (r) {
    case Regularizer::None: return "none";
    case Regularizer::QuantumEntropy: return "quantum_entropy";
    case Regularizer::SquaredFrobenius: return "squared_frobenius";
  }
  return "unknown";
}

namespace {

Vector clipped_log(const Vector& values) {
  const double top = values.maxCoeff();
  const double floor = kDefaultSpdFloor * std::max(top, 1e-300);
  Vector out(values.size());
  for (Eigen::Index k = 0; k < values.size(); ++k) out(k) = std::log(std::max(values(k), floor));
  return out;
}

void require_cost_shape(const CostField& cost, const BlockMatrix& gamma) {
  if (!cost.blocks().same_shape(gamma))
    fail(ErrorCode::InvalidInput, "cost and coupling shapes differ");
}

}  // namespace

double regularizer_value(Regularizer r, const Matrix& gamma) {
  switch (r) {
    case Regularizer::None: return 0.0;
    case Regularizer::SquaredFrobenius: return 0.5 * gamma.squaredNorm();
    case Regularizer::QuantumEntropy: {
      const Eig e = sym_eig(gamma);
      double v = 0.0;
      for (Eigen::Index k = 0; k < e.values.size(); ++k) {
        const double x = std::max(e.values(k), 0.0);
        v += (x > 0.0 ? x * std::log(x) : 0.0) - x;
      }
      return v;
    }
  }
  return 0.0;
}

Matrix regularizer_gradient(Regularizer r, const Matrix& gamma) {
  switch (r) {
    case Regularizer::None: return Matrix::Zero(gamma.rows(), gamma.cols());
    case Regularizer::SquaredFrobenius: return sym(gamma);
    case Regularizer::QuantumEntropy: {
      const Eig e = sym_eig(gamma);
      return sym(e.vectors * clipped_log(e.values).asDiagonal() * e.vectors.transpose());
    }
  }
  return Matrix::Zero(gamma.rows(), gamma.cols());
}

Matrix regularizer_hessian(Regularizer r, const Matrix& gamma, const Matrix& u) {
  switch (r) {
    case Regularizer::None: return Matrix::Zero(gamma.rows(), gamma.cols());
    case Regularizer::SquaredFrobenius: return sym(u);
    case Regularizer::QuantumEntropy: {
      // Daleckii-Krein: first divided differences of log in the eigenbasis.
      const Eig e = sym_eig(gamma);
      const Vector logs = clipped_log(e.values);
      Matrix rotated = e.vectors.transpose() * sym(u) * e.vectors;
      const Eigen::Index n = rotated.rows();
      for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < n; ++b) {
          const double la = e.values(a);
          const double lb = e.values(b);
          const double diff = la - lb;
          const double dd = std::abs(diff) > 1e-12 * std::max(std::abs(la), std::abs(lb))
                                ? (logs(a) - logs(b)) / diff
                                : 2.0 / (la + lb);
          rotated(a, b) *= dd;
        }
      }
      return sym(e.vectors * rotated * e.vectors.transpose());
    }
  }
  return Matrix::Zero(gamma.rows(), gamma.cols());
}

double transport_cost(const CostField& cost, const BlockMatrix& gamma) {
  require_cost_shape(cost, gamma);
  return cost.blocks().dot(gamma);
}

double mw_objective(const RegularizedProblem& problem, const BlockMatrix& gamma) {
  double v = transport_cost(problem.cost, gamma);
  if (problem.epsilon != 0.0 && problem.regularizer != Regularizer::None) {
    double reg = 0.0;
    for (int i = 0; i < gamma.rows(); ++i)
      for (int j = 0; j < gamma.cols(); ++j)
        reg += regularizer_value(problem.regularizer, gamma(i, j));
    v += problem.epsilon * reg;
  }
  return v;
}

BlockMatrix mw_euclidean_gradient(const RegularizedProblem& problem, const BlockMatrix& gamma) {
  require_cost_shape(problem.cost, gamma);
  BlockMatrix g = problem.cost.blocks();
  if (problem.epsilon != 0.0 && problem.regularizer != Regularizer::None) {
    for (int i = 0; i < gamma.rows(); ++i)
      for (int j = 0; j < gamma.cols(); ++j)
        g(i, j) += problem.epsilon * regularizer_gradient(problem.regularizer, gamma(i, j));
  }
  return g;
}

BlockMatrix mw_euclidean_hessian(const RegularizedProblem& problem, const BlockMatrix& gamma,
                                 const BlockMatrix& u) {
  require_cost_shape(problem.cost, gamma);
  BlockMatrix h(gamma.rows(), gamma.cols(), gamma.dim());
  if (problem.epsilon != 0.0 && problem.regularizer != Regularizer::None) {
    for (int i = 0; i < gamma.rows(); ++i)
      for (int j = 0; j < gamma.cols(); ++j)
        h(i, j) = problem.epsilon * regularizer_hessian(problem.regularizer, gamma(i, j), u(i, j));
  }
  return h;
}

Problem mw_problem(const RegularizedProblem& problem) {
  Problem out;
  out.objective = [problem](const BlockMatrix& g) { return mw_objective(problem, g); };
  out.euclidean_gradient = [problem](const BlockMatrix& g) {
    return mw_euclidean_gradient(problem, g);
  };
  return out;
}

namespace {

void append_report(SolveReport& into, const SolveReport& stage) {
  into.objective.insert(into.objective.end(), stage.objective.begin(), stage.objective.end());
  into.grad_norm.insert(into.grad_norm.end(), stage.grad_norm.begin(), stage.grad_norm.end());
  into.iterations += stage.iterations;
  into.wall_time += stage.wall_time;
  into.objective_evals += stage.objective_evals;
  into.gradient_evals += stage.gradient_evals;
  into.inner_iterations += stage.inner_iterations;
  into.reason = stage.reason;
  into.constraint_residual = stage.constraint_residual;
}

}  // namespace

MwResult solve_mw(const BlockMarginal& p, const BlockMarginal& q,
                  const RegularizedProblem& problem, const MwOptions& options) {
  if (problem.cost.rows() != p.size() || problem.cost.cols() != q.size() ||
      problem.cost.dim() != p.dim())
    fail(ErrorCode::InvalidInput, "solve_mw: cost shape does not match the marginals");
  if (problem.epsilon < 0.0) fail(ErrorCode::InvalidInput, "solve_mw: epsilon < 0");

  const CouplingManifold manifold(p, q, options.balance);
  BlockMatrix x = options.warm_start ? *options.warm_start : manifold.initial_point();
  if (options.warm_start && manifold.residual(x) > options.solver.feas_tol)
    x = mbalance(x, p, q, options.balance).balanced;

  std::vector<double> path;
  if (options.continuation && problem.epsilon > 0.0) {
    for (double eps = std::max(options.continuation_start, problem.epsilon);
         eps > problem.epsilon; eps = std::max(0.5 * eps, problem.epsilon))
      path.push_back(eps);
  }
  path.push_back(problem.epsilon);

  MwResult out;
  for (double eps : path) {
    RegularizedProblem stage = problem;
    stage.epsilon = eps;
    auto solved = minimize(mw_problem(stage), manifold, std::move(x), options.solver);
    x = std::move(solved.x);
    append_report(out.report, solved.report);
  }
  out.value = mw_objective(problem, x);
  out.transport_cost = transport_cost(problem.cost, x);
  out.coupling = std::move(x);
  out.epsilon_path = std::move(path);
  return out;
}

CostField cost_scaled_identity(const Matrix& distances, int dim) {
  BlockMatrix c(static_cast<int>(distances.rows()), static_cast<int>(distances.cols()), dim);
  for (int i = 0; i < c.rows(); ++i)
    for (int j = 0; j < c.cols(); ++j)
      c(i, j) = distances(i, j) * distances(i, j) * Matrix::Identity(dim, dim);
  return CostField(std::move(c));
}

CostField cost_outer_difference(const std::vector<Matrix>& xs, const std::vector<Matrix>& ys) {
  if (xs.empty() || ys.empty()) fail(ErrorCode::InvalidInput, "cost_outer_difference: no samples");
  const int d = static_cast<int>(xs[0].rows());
  BlockMatrix c(static_cast<int>(xs.size()), static_cast<int>(ys.size()), d);
  for (int i = 0; i < c.rows(); ++i) {
    for (int j = 0; j < c.cols(); ++j) {
      const Matrix& x = xs[static_cast<std::size_t>(i)];
      const Matrix& y = ys[static_cast<std::size_t>(j)];
      if (x.rows() != d || y.rows() != d || x.cols() != y.cols())
        fail(ErrorCode::InvalidInput, "cost_outer_difference: sample shapes differ");
      const Matrix diff = x - y;
      c(i, j) = sym(diff * diff.transpose());
    }
  }
  return CostField(std::move(c));
}

CostField cost_grid_sq_euclidean(const std::vector<Vector>& xs, const std::vector<Vector>& ys,
                                 int dim) {
  Matrix dist(static_cast<Eigen::Index>(xs.size()), static_cast<Eigen::Index>(ys.size()));
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = 0; j < ys.size(); ++j)
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = (xs[i] - ys[j]).norm();
  return cost_scaled_identity(dist, dim);
}

double mw_distance(const std::vector<double>& p, const std::vector<double>& q,
                   const CostField& cost, double epsilon, const MwOptions& options) {
  const RegularizedProblem problem{cost, epsilon, Regularizer::QuantumEntropy};
  const auto result = solve_mw(BlockMarginal::lifted(p, cost.dim()),
                               BlockMarginal::lifted(q, cost.dim()), problem, options);
  return std::sqrt(std::max(0.0, result.transport_cost));
}

AxiomReport check_metric_axioms(const CostField& costs, const MetricCheckOptions& options) {
  if (costs.rows() != costs.cols())
    fail(ErrorCode::InvalidInput, "check_metric_axioms: costs must be n x n on a shared support");
  const int n = costs.rows();
  const int d = costs.dim();
  AxiomReport report;
  Rng rng(options.seed);

  report.cost_symmetric = true;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if ((costs(i, j) - costs(j, i)).norm() > 1e-12 * (1.0 + costs(i, j).norm()))
        report.cost_symmetric = false;
  if (!report.cost_symmetric) report.failures.push_back("cost symmetry C_ij = C_ji");

  report.cost_definite = true;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const bool ok = (i == j) ? costs(i, j).norm() == 0.0 : is_spd(costs(i, j));
      if (!ok) report.cost_definite = false;
    }
  }
  if (!report.cost_definite)
    report.failures.push_back("cost definiteness: C_ii = 0 and C_ij > 0 for i != j");

  report.trace_triangle = true;
  report.worst_trace_slack = std::numeric_limits<double>::infinity();
  for (int t = 0; t < options.trace_trials; ++t) {
    const Matrix g = rng.gaussian(d, d);
    const Matrix a = g * g.transpose();
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
          const double lhs = std::sqrt(std::max(0.0, frob_dot(costs(i, j), a)));
          const double rhs = std::sqrt(std::max(0.0, frob_dot(costs(i, k), a))) +
                             std::sqrt(std::max(0.0, frob_dot(costs(j, k), a)));
          const double slack = rhs - lhs;
          report.worst_trace_slack = std::min(report.worst_trace_slack, slack);
          if (slack < -1e-10 * (1.0 + lhs)) report.trace_triangle = false;
        }
  }
  if (!report.trace_triangle) report.failures.push_back("trace triangle inequality");

  if (!report.cost_conditions()) return report;

  report.empirical_run = true;
  report.min_triangle_slack = std::numeric_limits<double>::infinity();
  auto dist = [&](const std::vector<double>& a, const std::vector<double>& b) {
    return mw_distance(a, b, costs, options.epsilon, options.solve);
  };
  for (int t = 0; t < options.triples; ++t) {
    const auto p = rng.simplex(n, 0.2);
    const auto q = rng.simplex(n, 0.2);
    const auto r = rng.simplex(n, 0.2);
    const double pq = dist(p, q);
    const double qp = dist(q, p);
    const double qr = dist(q, r);
    const double pr = dist(p, r);
    const double pp = dist(p, p);
    report.max_symmetry_error =
        std::max(report.max_symmetry_error, std::abs(pq - qp) / std::max(pq, 1e-300));
    report.max_self_distance = std::max(report.max_self_distance, pp);
    report.min_triangle_slack = std::min(report.min_triangle_slack, pq + qr - pr);
  }
  return report;
}

namespace {

// Transportation simplex on a spanning-tree basis of m + n - 1 cells.
class TransportSimplex {
 public:
  TransportSimplex(const Vector& supply, const Vector& demand, const Matrix& cost)
      : m_(static_cast<int>(supply.size())),
        n_(static_cast<int>(demand.size())),
        cost_(cost),
        flow_(Matrix::Zero(m_, n_)),
        basic_(m_, std::vector<bool>(static_cast<std::size_t>(n_), false)) {
    northwest_corner(supply, demand);
  }

  int solve(int max_pivots) {
    int pivots = 0;
    const double tol = 1e-12 * std::max(1.0, cost_.cwiseAbs().maxCoeff());
    while (pivots < max_pivots) {
      compute_potentials();
      int ei = -1;
      int ej = -1;
      for (int i = 0; i < m_ && ei < 0; ++i)
        for (int j = 0; j < n_; ++j)
          if (!basic_[i][j] && cost_(i, j) - u_(i) - v_(j) < -tol) {
            ei = i;
            ej = j;
            break;
          }
      if (ei < 0) return pivots;
      pivot(ei, ej);
      ++pivots;
    }
    fail(ErrorCode::NotConverged, "scalar_ot_exact: pivot limit reached");
  }

  const Matrix& flow() const { return flow_; }

 private:
  void northwest_corner(Vector supply, Vector demand) {
    int i = 0;
    int j = 0;
    while (true) {
      const double amount = std::min(supply(i), demand(j));
      flow_(i, j) = amount;
      basic_[i][j] = true;
      supply(i) -= amount;
      demand(j) -= amount;
      if (i == m_ - 1 && j == n_ - 1) break;
      if (i < m_ - 1 && (supply(i) <= demand(j) || j == n_ - 1)) {
        ++i;
      } else {
        ++j;
      }
    }
  }

  // Nodes 0..m-1 are rows, m..m+n-1 columns; basic cells are tree edges.
  void compute_potentials() {
    u_ = Vector::Zero(m_);
    v_ = Vector::Zero(n_);
    std::vector<bool> seen(static_cast<std::size_t>(m_ + n_), false);
    std::deque<int> queue{0};
    seen[0] = true;
    while (!queue.empty()) {
      const int node = queue.front();
      queue.pop_front();
      if (node < m_) {
        for (int j = 0; j < n_; ++j)
          if (basic_[node][j] && !seen[m_ + j]) {
            v_(j) = cost_(node, j) - u_(node);
            seen[m_ + j] = true;
            queue.push_back(m_ + j);
          }
      } else {
        const int j = node - m_;
        for (int i = 0; i < m_; ++i)
          if (basic_[i][j] && !seen[i]) {
            u_(i) = cost_(i, j) - v_(j);
            seen[i] = true;
            queue.push_back(i);
          }
      }
    }
  }

  // Tree path from column node of `ej` to row node `ei`, as basic cells.
  std::vector<std::pair<int, int>> tree_path(int ei, int ej) const {
    const int total = m_ + n_;
    std::vector<int> parent(static_cast<std::size_t>(total), -2);
    std::deque<int> queue{m_ + ej};
    parent[m_ + ej] = -1;
    while (!queue.empty() && parent[ei] == -2) {
      const int node = queue.front();
      queue.pop_front();
      if (node < m_) {
        for (int j = 0; j < n_; ++j)
          if (basic_[node][j] && parent[m_ + j] == -2) {
            parent[m_ + j] = node;
            queue.push_back(m_ + j);
          }
      } else {
        const int j = node - m_;
        for (int i = 0; i < m_; ++i)
          if (basic_[i][j] && parent[i] == -2) {
            parent[i] = node;
            queue.push_back(i);
          }
      }
    }
    std::vector<std::pair<int, int>> cells;
    for (int node = ei; parent[node] != -1; node = parent[node]) {
      const int prev = parent[node];
      if (node < m_) {
        cells.emplace_back(node, prev - m_);
      } else {
        cells.emplace_back(prev, node - m_);
      }
    }
    // cells run from row ei back to column ej; reverse so they start at ej.
    std::reverse(cells.begin(), cells.end());
    return cells;
  }

  void pivot(int ei, int ej) {
    const auto path = tree_path(ei, ej);
    // Entering cell gains flow; path cells alternate -, +, -, ... starting at column ej.
    double theta = std::numeric_limits<double>::infinity();
    std::pair<int, int> leaving{-1, -1};
    for (std::size_t k = 0; k < path.size(); k += 2) {
      const auto [i, j] = path[k];
      const double f = flow_(i, j);
      if (f < theta || (f == theta && path[k] < leaving)) {
        theta = f;
        leaving = path[k];
      }
    }
    for (std::size_t k = 0; k < path.size(); ++k) {
      const auto [i, j] = path[k];
      flow_(i, j) += (k % 2 == 0) ? -theta : theta;
    }
    flow_(ei, ej) = theta;
    basic_[ei][ej] = true;
    basic_[leaving.first][leaving.second] = false;
    flow_(leaving.first, leaving.second) = 0.0;
  }

  int m_;
  int n_;
  Matrix cost_;
  Matrix flow_;
  std::vector<std::vector<bool>> basic_;
  Vector u_;
  Vector v_;
};

Vector to_vector(const std::vector<double>& w, const char* what) {
  Vector v(static_cast<Eigen::Index>(w.size()));
  for (std::size_t k = 0; k < w.size(); ++k) {
    if (!(w[k] >= 0.0) || !std::isfinite(w[k]))
      fail(ErrorCode::InvalidInput, std::string(what) + ": weights must be finite and >= 0");
    v(static_cast<Eigen::Index>(k)) = w[k];
  }
  if (v.size() == 0) fail(ErrorCode::InvalidInput, std::string(what) + ": empty weights");
  return v;
}

}  // namespace

ScalarPlan scalar_ot_exact(const std::vector<double>& p, const std::vector<double>& q,
                           const Matrix& cost) {
  const Vector supply = to_vector(p, "scalar_ot_exact");
  Vector demand = to_vector(q, "scalar_ot_exact");
  if (cost.rows() != supply.size() || cost.cols() != demand.size())
    fail(ErrorCode::InvalidInput, "scalar_ot_exact: cost shape mismatch");
  if (std::abs(supply.sum() - demand.sum()) > 1e-10 * supply.sum())
    fail(ErrorCode::InvalidInput, "scalar_ot_exact: marginals differ in mass");
  demand *= supply.sum() / demand.sum();
  TransportSimplex simplex(supply, demand, cost);
  ScalarPlan plan;
  plan.pivots = simplex.solve(100000);
  plan.coupling = simplex.flow();
  plan.value = plan.coupling.cwiseProduct(cost).sum();
  return plan;
}

Matrix scalar_sinkhorn(const std::vector<double>& p, const std::vector<double>& q,
                       const Matrix& cost, double epsilon, double tol, int max_iter) {
  const Vector a = to_vector(p, "scalar_sinkhorn");
  const Vector b = to_vector(q, "scalar_sinkhorn");
  if (cost.rows() != a.size() || cost.cols() != b.size())
    fail(ErrorCode::InvalidInput, "scalar_sinkhorn: cost shape mismatch");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidInput, "scalar_sinkhorn: epsilon must be > 0");
  const Eigen::Index m = a.size();
  const Eigen::Index n = b.size();
  Vector f = Vector::Zero(m);
  Vector g = Vector::Zero(n);
  auto plan = [&] {
    Matrix gamma(m, n);
    for (Eigen::Index i = 0; i < m; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        gamma(i, j) = std::exp((f(i) + g(j) - cost(i, j)) / epsilon);
    return gamma;
  };
  for (int it = 0; it < max_iter; ++it) {
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vector z = (g.transpose() - cost.row(i)) / epsilon;
      const double top = z.maxCoeff();
      f(i) = epsilon * std::log(a(i)) - epsilon * (top + std::log((z.array() - top).exp().sum()));
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      const Vector z = (f - cost.col(j)) / epsilon;
      const double top = z.maxCoeff();
      g(j) = epsilon * std::log(b(j)) - epsilon * (top + std::log((z.array() - top).exp().sum()));
    }
    const Matrix gamma = plan();
    if ((gamma.rowwise().sum() - a).cwiseAbs().maxCoeff() <= tol) return gamma;
  }
  fail(ErrorCode::NotConverged, "scalar_sinkhorn: marginal residual above tolerance");
}

}  // namespace bspdot
