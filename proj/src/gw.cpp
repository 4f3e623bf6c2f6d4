#include "bspdot/gw.hpp"

#include "bspdot/error.hpp"
#include "bspdot/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace bspdot {

DistanceMatrix::DistanceMatrix(Matrix values) : values_(std::move(values)) {
  if (values_.rows() != values_.cols() || values_.rows() == 0)
    fail(ErrorCode::InvalidInput, "DistanceMatrix: must be a non-empty square matrix");
  if (!values_.allFinite()) fail(ErrorCode::InvalidInput, "DistanceMatrix: non-finite entry");
  const double tol = 1e-12 * (1.0 + values_.cwiseAbs().maxCoeff());
  if ((values_ - values_.transpose()).cwiseAbs().maxCoeff() > tol)
    fail(ErrorCode::InvalidInput, "DistanceMatrix: not symmetric");
  if (values_.minCoeff() < 0.0) fail(ErrorCode::InvalidInput, "DistanceMatrix: negative entry");
  values_ = 0.5 * (values_ + values_.transpose()).eval();
}

DistanceMatrix DistanceMatrix::from_points(const Matrix& points) {
  const auto n = points.rows();
  Matrix d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i + 1; j < n; ++j)
      d(i, j) = d(j, i) = (points.row(i) - points.row(j)).norm();
  return DistanceMatrix(std::move(d));
}

const char* to_string(GwLossKind k) {
  switch (k) {
    case GwLossKind::Squared: return "squared";
    case GwLossKind::Kl: return "kl";
  }
  return "unknown";
}

double GwLoss::operator()(double a, double b) const { return f1(a) + f2(b) - h1(a) * h2(b); }

double GwLoss::f1(double a) const {
  if (kind == GwLossKind::Squared) return a * a;
  return a > 0.0 ? a * std::log(a) - a : 0.0;
}

double GwLoss::f2(double b) const { return kind == GwLossKind::Squared ? b * b : b; }

double GwLoss::h1(double a) const { return a; }

double GwLoss::h2(double b) const { return kind == GwLossKind::Squared ? 2.0 * b : std::log(b); }

double GwLoss::solve_first(double h) const {
  return kind == GwLossKind::Squared ? 0.5 * h : std::exp(h);
}

void GwLoss::check_second(const DistanceMatrix& d) const {
  if (kind == GwLossKind::Kl && !(d.values().minCoeff() > 0.0))
    fail(ErrorCode::InvalidInput, "kl loss: second distance matrix must be strictly positive");
}

namespace {

Matrix map_entries(const Matrix& a, const std::function<double(double)>& fn) {
  Matrix out(a.rows(), a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, j) = fn(a(i, j));
  return out;
}

void check_shapes(const DistanceMatrix& dx, const DistanceMatrix& dy, const GwLoss& loss,
                  const BlockMatrix& gamma, const char* who) {
  if (gamma.rows() != dx.size() || gamma.cols() != dy.size()) {
    std::ostringstream os;
    os << who << ": coupling is " << gamma.rows() << " x " << gamma.cols() << ", distances are "
       << dx.size() << " and " << dy.size();
    fail(ErrorCode::InvalidInput, os.str());
  }
  loss.check_second(dy);
}

// M_ij = sum_{i'j'} H1_ii' H2_jj' Gamma_i'j'.
BlockMatrix cross_term(const Matrix& h1, const Matrix& h2, const BlockMatrix& gamma) {
  const int m = gamma.rows();
  const int n = gamma.cols();
  const int d = gamma.dim();
  BlockMatrix t(m, n, d);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int j = 0; j < n; ++j)
      for (int jp = 0; jp < n; ++jp)
        if (h2(j, jp) != 0.0) t(i, j) += h2(j, jp) * gamma(i, jp);
  });
  BlockMatrix out(m, n, d);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    for (int ip = 0; ip < m; ++ip) {
      if (h1(i, ip) == 0.0) continue;
      for (int j = 0; j < n; ++j) out(i, j) += h1(i, ip) * t(ip, j);
    }
  });
  return out;
}

std::vector<Matrix> row_sums(const BlockMatrix& g) {
  std::vector<Matrix> out;
  for (int i = 0; i < g.rows(); ++i) out.push_back(g.row_sum(i));
  return out;
}

std::vector<Matrix> col_sums(const BlockMatrix& g) {
  std::vector<Matrix> out;
  for (int j = 0; j < g.cols(); ++j) out.push_back(g.col_sum(j));
  return out;
}

// sum_{kk'} F_kk' tr(S_k S_k').
double marginal_term(const Matrix& f, const std::vector<Matrix>& s) {
  double total = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k)
    for (std::size_t kp = 0; kp < s.size(); ++kp)
      total += f(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(kp)) *
               s[k].cwiseProduct(s[kp]).sum();
  return total;
}

}  // namespace

double mgw_objective(const DistanceMatrix& dx, const DistanceMatrix& dy, const GwLoss& loss,
                     const BlockMatrix& gamma) {
  check_shapes(dx, dy, loss, gamma, "mgw_objective");
  const Matrix f1 = map_entries(dx.values(), [&](double a) { return loss.f1(a); });
  const Matrix f2 = map_entries(dy.values(), [&](double b) { return loss.f2(b); });
  const Matrix h1 = map_entries(dx.values(), [&](double a) { return loss.h1(a); });
  const Matrix h2 = map_entries(dy.values(), [&](double b) { return loss.h2(b); });
  const BlockMatrix m = cross_term(h1, h2, gamma);
  return marginal_term(f1, row_sums(gamma)) + marginal_term(f2, col_sums(gamma)) -
         gamma.dot(m);
}

BlockMatrix mgw_euclidean_gradient(const DistanceMatrix& dx, const DistanceMatrix& dy,
                                   const GwLoss& loss, const BlockMatrix& gamma) {
  check_shapes(dx, dy, loss, gamma, "mgw_euclidean_gradient");
  const Matrix f1 = map_entries(dx.values(), [&](double a) { return loss.f1(a); });
  const Matrix f2 = map_entries(dy.values(), [&](double b) { return loss.f2(b); });
  const Matrix h1 = map_entries(dx.values(), [&](double a) { return loss.h1(a); });
  const Matrix h2 = map_entries(dy.values(), [&](double b) { return loss.h2(b); });
  const auto rows = row_sums(gamma);
  const auto cols = col_sums(gamma);
  const int d = gamma.dim();
  std::vector<Matrix> row_part(rows.size(), Matrix::Zero(d, d));
  std::vector<Matrix> col_part(cols.size(), Matrix::Zero(d, d));
  for (int i = 0; i < gamma.rows(); ++i)
    for (int ip = 0; ip < gamma.rows(); ++ip) row_part[i] += f1(i, ip) * rows[ip];
  for (int j = 0; j < gamma.cols(); ++j)
    for (int jp = 0; jp < gamma.cols(); ++jp) col_part[j] += f2(j, jp) * cols[jp];
  BlockMatrix g = cross_term(h1, h2, gamma);
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j) g(i, j) = 2.0 * sym(row_part[i] + col_part[j] - g(i, j));
  return g;
}

Problem mgw_problem(const DistanceMatrix& dx, const DistanceMatrix& dy, const GwLoss& loss) {
  Problem p;
  p.objective = [dx, dy, loss](const BlockMatrix& g) { return mgw_objective(dx, dy, loss, g); };
  p.euclidean_gradient = [dx, dy, loss](const BlockMatrix& g) {
    return mgw_euclidean_gradient(dx, dy, loss, g);
  };
  return p;
}

MgwResult solve_mgw(const DistanceMatrix& dx, const DistanceMatrix& dy, const BlockMarginal& p,
                    const BlockMarginal& q, const GwLoss& loss, const SolverConfig& config,
                    const BalanceOptions& balance, const BlockMatrix* warm_start) {
  if (p.size() != dx.size() || q.size() != dy.size() || p.dim() != q.dim())
    fail(ErrorCode::InvalidInput, "solve_mgw: marginals do not match the distance matrices");
  loss.check_second(dy);
  const CouplingManifold manifold(p, q, balance);
  BlockMatrix x = warm_start ? *warm_start : manifold.initial_point();
  if (warm_start && manifold.residual(x) > config.feas_tol) x = mbalance(x, p, q, balance).balanced;
  auto solved = minimize(mgw_problem(dx, dy, loss), manifold, std::move(x), config);
  MgwResult out;
  out.value = mgw_objective(dx, dy, loss, solved.x);
  out.coupling = std::move(solved.x);
  out.report = std::move(solved.report);
  return out;
}

namespace {

void check_average_inputs(const std::vector<GwInput>& inputs, const BlockMarginal& pbar,
                          const std::vector<double>& weights, const GwLoss& loss) {
  if (inputs.empty()) fail(ErrorCode::InvalidInput, "gw average: no inputs");
  if (weights.size() != inputs.size())
    fail(ErrorCode::InvalidInput, "gw average: weights and inputs differ in length");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      fail(ErrorCode::InvalidInput, "gw average: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidInput, "gw average: weights must sum to 1");
  for (const auto& in : inputs) {
    if (in.distances.size() != in.marginal.size() || in.marginal.dim() != pbar.dim())
      fail(ErrorCode::InvalidInput, "gw average: input marginal does not match its distances");
    loss.check_second(in.distances);
  }
}

}  // namespace

DistanceMatrix gw_closed_form(const std::vector<GwInput>& inputs,
                              const std::vector<BlockMatrix>& couplings,
                              const BlockMarginal& pbar, const std::vector<double>& weights,
                              const GwLoss& loss, bool clip_negative, bool* clipped) {
  check_average_inputs(inputs, pbar, weights, loss);
  if (couplings.size() != inputs.size())
    fail(ErrorCode::InvalidInput, "gw_closed_form: one coupling per input required");
  const int n = pbar.size();
  Matrix num = Matrix::Zero(n, n);
  Matrix den = Matrix::Zero(n, n);
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    const BlockMatrix& g = couplings[l];
    if (g.rows() != n || g.cols() != inputs[l].distances.size())
      fail(ErrorCode::InvalidInput, "gw_closed_form: coupling shape mismatch");
    if (weights[l] == 0.0) continue;
    const Matrix h2 =
        map_entries(inputs[l].distances.values(), [&](double b) { return loss.h2(b); });
    // T_i'j = sum_j' h2(D_jj') Gamma_i'j'
    const BlockMatrix t = cross_term(Matrix::Identity(n, n), h2, g);
    // The row sums of the coupling stand in for Pbar, making the update exact
    // for the objective at these couplings.
    const auto rows = row_sums(g);
    for (int i = 0; i < n; ++i)
      for (int ip = 0; ip < n; ++ip) {
        double s = 0.0;
        for (int j = 0; j < g.cols(); ++j) s += g(i, j).cwiseProduct(t(ip, j)).sum();
        num(i, ip) += weights[l] * s;
        den(i, ip) += weights[l] * rows[i].cwiseProduct(rows[ip]).sum();
      }
  }
  bool any_clipped = false;
  Matrix out(n, n);
  for (int i = 0; i < n; ++i)
    for (int ip = 0; ip < n; ++ip) {
      double v = loss.solve_first(num(i, ip) / den(i, ip));
      if (v < 0.0 && clip_negative) {
        v = 0.0;
        any_clipped = true;
      }
      out(i, ip) = v;
    }
  out = 0.5 * (out + out.transpose()).eval();
  if (loss.kind == GwLossKind::Squared) out.diagonal().setZero();
  if (clipped) *clipped = any_clipped;
  return DistanceMatrix(std::move(out));
}

double gw_total_objective(const std::vector<GwInput>& inputs,
                          const std::vector<BlockMatrix>& couplings, const DistanceMatrix& dbar,
                          const std::vector<double>& weights, const GwLoss& loss) {
  if (couplings.size() != inputs.size() || weights.size() != inputs.size())
    fail(ErrorCode::InvalidInput, "gw_total_objective: inputs, couplings and weights differ");
  double total = 0.0;
  for (std::size_t l = 0; l < inputs.size(); ++l)
    if (weights[l] != 0.0)
      total += weights[l] * mgw_objective(dbar, inputs[l].distances, loss, couplings[l]);
  return total;
}

GwAverageResult gw_average_distance(const std::vector<GwInput>& inputs,
                                    const BlockMarginal& pbar, const std::vector<double>& weights,
                                    const GwLoss& loss, const GwAverageOptions& options) {
  check_average_inputs(inputs, pbar, weights, loss);
  if (options.sweeps < 1) fail(ErrorCode::InvalidInput, "gw average: sweeps must be >= 1");
  const std::size_t k = inputs.size();

  GwAverageResult out;
  out.couplings.resize(k);
  for (std::size_t l = 0; l < k; ++l)
    out.couplings[l] = initial_coupling(pbar, inputs[l].marginal, options.balance);

  bool clipped = false;
  out.average = gw_closed_form(inputs, out.couplings, pbar, weights, loss,
                               options.clip_negative, &clipped);
  out.clipped = clipped;
  out.objective_trace.push_back(
      gw_total_objective(inputs, out.couplings, out.average, weights, loss));

  std::vector<long> iterations(k, 0);
  for (int sweep = 0; sweep < options.sweeps; ++sweep) {
    parallel_for(k, [&](std::size_t l) {
      if (weights[l] == 0.0) return;
      auto solved = solve_mgw(out.average, inputs[l].distances, pbar, inputs[l].marginal, loss,
                              options.solver, options.balance, &out.couplings[l]);
      if (solved.report.reason == Termination::StalledAtBoundary) {
        std::ostringstream os;
        os << "gw average: coupling solve " << l << " stalled at the SPD boundary";
        fail(ErrorCode::InnerSolveFailed, os.str());
      }
      iterations[l] += solved.report.iterations;
      out.couplings[l] = std::move(solved.coupling);
    });
    out.objective_trace.push_back(
        gw_total_objective(inputs, out.couplings, out.average, weights, loss));
    out.average = gw_closed_form(inputs, out.couplings, pbar, weights, loss,
                                 options.clip_negative, &clipped);
    out.clipped = out.clipped || clipped;
    out.objective_trace.push_back(
        gw_total_objective(inputs, out.couplings, out.average, weights, loss));
  }
  for (long it : iterations) out.inner_iterations += it;
  return out;
}

MdsResult classical_mds(const DistanceMatrix& d, int dim) {
  const int n = d.size();
  if (dim < 1 || dim > n) fail(ErrorCode::InvalidInput, "classical_mds: dim must be in [1, n]");
  const Matrix sq = d.values().cwiseProduct(d.values());
  const Matrix j = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / n);
  const Matrix b = sym(-0.5 * j * sq * j);
  Eigen::SelfAdjointEigenSolver<Matrix> es(b);
  MdsResult out;
  out.points = Matrix::Zero(n, dim);
  const double top = std::max(0.0, es.eigenvalues()(n - 1));
  for (int k = 0; k < dim; ++k) {
    const int idx = n - 1 - k;
    // Eigenvalues at round-off level are treated as zero.
    double lambda = es.eigenvalues()(idx);
    if (lambda <= 1e-12 * top) lambda = 0.0;
    out.points.col(k) = std::sqrt(lambda) * es.eigenvectors().col(idx);
  }
  const double scale = d.values().norm();
  const Matrix recon = DistanceMatrix::from_points(out.points).values();
  out.stress = scale > 0.0 ? (d.values() - recon).norm() / scale : recon.norm();
  return out;
}

}  // namespace bspdot
