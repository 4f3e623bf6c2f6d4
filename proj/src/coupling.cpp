#include "bspdot/coupling.hpp"

#include "bspdot/error.hpp"
#include "bspdot/parallel.hpp"
#include "linsolve.hpp"

#include <cmath>
#include <optional>
#include <sstream>

namespace bspdot {

namespace {

void require_shape(const BlockMatrix& a, const BlockMatrix& b, const char* what) {
  if (!a.same_shape(b)) fail(ErrorCode::InvalidInput, std::string(what) + ": shape mismatch");
}

void require_marginals(const BlockMatrix& a, const BlockMarginal& p, const BlockMarginal& q,
                       const char* what) {
  if (a.rows() != p.size() || a.cols() != q.size() || a.dim() != p.dim() ||
      a.dim() != q.dim()) {
    fail(ErrorCode::InvalidInput, std::string(what) + ": marginals do not match block shape");
  }
  if ((p.total_mass() - q.total_mass()).norm() > 1e-10 * p.total_mass().norm())
    fail(ErrorCode::InvalidInput, std::string(what) + ": marginals differ in total mass");
}

// Orthonormal basis of the gauge directions (Delta, ..., Delta, -Delta, ..., -Delta).
Matrix gauge_kernel(int m, int n, int k) {
  const int total = (m + n) * k;
  Matrix kernel = Matrix::Zero(total, k);
  const double scale = 1.0 / std::sqrt(static_cast<double>(m + n));
  for (int p = 0; p < k; ++p) {
    for (int i = 0; i < m; ++i) kernel(i * k + p, p) = scale;
    for (int j = 0; j < n; ++j) kernel((m + j) * k + p, p) = -scale;
  }
  return kernel;
}

}  // namespace

double Manifold::norm(const BlockMatrix& x, const BlockMatrix& u) const {
  return std::sqrt(std::max(0.0, inner(x, u, u)));
}

double constraint_gap(const BlockMatrix& gamma, const BlockMarginal& p, const BlockMarginal& q) {
  require_marginals(gamma, p, q, "constraint_gap");
  double gap = 0.0;
  for (int i = 0; i < gamma.rows(); ++i)
    gap = std::max(gap, (gamma.row_sum(i) - p[i]).norm() / p[i].norm());
  for (int j = 0; j < gamma.cols(); ++j)
    gap = std::max(gap, (gamma.col_sum(j) - q[j]).norm() / q[j].norm());
  return gap;
}

double metric(const BlockMatrix& gamma, const BlockMatrix& u, const BlockMatrix& v) {
  require_shape(gamma, u, "metric");
  require_shape(gamma, v, "metric");
  double total = 0.0;
  for (int i = 0; i < gamma.rows(); ++i) {
    for (int j = 0; j < gamma.cols(); ++j) {
      Eigen::LLT<Matrix> llt(gamma(i, j));
      if (llt.info() != Eigen::Success)
        fail(ErrorCode::NotPositiveDefinite, "metric: base block is not SPD");
      const Matrix gu = llt.solve(u(i, j));
      const Matrix gv = llt.solve(v(i, j));
      total += frob_dot(gu.transpose(), gv);
    }
  }
  return total;
}

Projection project_tangent(const BlockMatrix& gamma, const BlockMatrix& s,
                           ProjectionMethod method) {
  require_shape(gamma, s, "project_tangent");
  const int m = gamma.rows();
  const int n = gamma.cols();
  const int d = gamma.dim();
  const int k = svec_size(d);

  std::vector<Matrix> ops(static_cast<std::size_t>(m) * n);
  parallel_for(ops.size(), [&](std::size_t idx) {
    const int i = static_cast<int>(idx) / n;
    const int j = static_cast<int>(idx) % n;
    ops[idx] = detail::congruence_operator(gamma(i, j));
  });

  const int total = (m + n) * k;
  Matrix a = Matrix::Zero(total, total);
  Vector rhs(total);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const Matrix& op = ops[static_cast<std::size_t>(i) * n + j];
      a.block(i * k, i * k, k, k) += op;
      a.block((m + j) * k, (m + j) * k, k, k) += op;
      a.block(i * k, (m + j) * k, k, k) = op;
      a.block((m + j) * k, i * k, k, k) = op;
    }
  }
  for (int i = 0; i < m; ++i) rhs.segment(i * k, k) = -svec(s.row_sum(i));
  for (int j = 0; j < n; ++j) rhs.segment((m + j) * k, k) = -svec(s.col_sum(j));

  const auto solved = detail::solve_gauge_system(a, rhs, gauge_kernel(m, n, k), method);

  Projection out;
  out.condition = solved.condition;
  out.lambda.reserve(static_cast<std::size_t>(m));
  out.theta.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < m; ++i) out.lambda.push_back(smat(solved.x.segment(i * k, k), d));
  for (int j = 0; j < n; ++j) out.theta.push_back(smat(solved.x.segment((m + j) * k, k), d));
  out.tangent = BlockMatrix(m, n, d);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const Matrix& g = gamma(i, j);
      out.tangent(i, j) =
          sym(s(i, j)) + sym(g * (out.lambda[static_cast<std::size_t>(i)] +
                                  out.theta[static_cast<std::size_t>(j)]) * g);
    }
  }
  return out;
}

Projection riemannian_gradient(const BlockMatrix& gamma, const BlockMatrix& egrad) {
  require_shape(gamma, egrad, "riemannian_gradient");
  BlockMatrix lifted(gamma.rows(), gamma.cols(), gamma.dim());
  for (int i = 0; i < gamma.rows(); ++i)
    for (int j = 0; j < gamma.cols(); ++j)
      lifted(i, j) = sym(gamma(i, j) * sym(egrad(i, j)) * gamma(i, j));
  return project_tangent(gamma, lifted);
}

BlockMatrix riemannian_hessian(const BlockMatrix& gamma, const BlockMatrix& egrad,
                               const BlockMatrix& ehess_along_u, const BlockMatrix& u) {
  require_shape(gamma, egrad, "riemannian_hessian");
  require_shape(gamma, ehess_along_u, "riemannian_hessian");
  require_shape(gamma, u, "riemannian_hessian");
  // grad F = [Gamma (E + Lambda_i + Theta_j) Gamma] with E = {egrad}_S. Differentiating
  // along u, the multiplier derivatives only add normal components, which the
  // final projection removes; subtracting {U Gamma^-1 grad}_S leaves
  // {U (E + Lambda_i + Theta_j) Gamma}_S + Gamma {ehess}_S Gamma.
  const Projection grad = riemannian_gradient(gamma, egrad);
  BlockMatrix ambient(gamma.rows(), gamma.cols(), gamma.dim());
  for (int i = 0; i < gamma.rows(); ++i) {
    for (int j = 0; j < gamma.cols(); ++j) {
      const Matrix& g = gamma(i, j);
      const Matrix shifted = sym(egrad(i, j)) + grad.lambda[static_cast<std::size_t>(i)] +
                             grad.theta[static_cast<std::size_t>(j)];
      ambient(i, j) = sym(u(i, j) * shifted * g) + sym(g * sym(ehess_along_u(i, j)) * g);
    }
  }
  return project_tangent(gamma, ambient).tangent;
}

namespace {

// Newton step on the congruence scalings: Gamma_ij -> M Gamma_ij M with
// M = exp((X_i + Y_j) / 2), where (X, Y) solve the linearized marginal
// equations sum_j {X_i + Y_j, Gamma_ij} / 2 = P_i - R_i (and columns alike).
// For d = 1 this stays in the diagonal-scaling family, so the fixed point is
// the RAS one.
std::optional<BlockMatrix> newton_scaling_step(const BlockMatrix& g, const BlockMarginal& p,
                                               const BlockMarginal& q, double spd_floor) {
  const int m = g.rows();
  const int n = g.cols();
  const int d = g.dim();
  const int k = svec_size(d);
  const int total = (m + n) * k;
  Matrix a = Matrix::Zero(total, total);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      Matrix op(k, k);
      for (int c = 0; c < k; ++c) {
        const Matrix e = svec_basis(d, c);
        op.col(c) = svec(0.5 * (e * g(i, j) + g(i, j) * e));
      }
      a.block(i * k, i * k, k, k) += op;
      a.block((m + j) * k, (m + j) * k, k, k) += op;
      a.block(i * k, (m + j) * k, k, k) = op;
      a.block((m + j) * k, i * k, k, k) = op;
    }
  }
  Vector rhs(total);
  for (int i = 0; i < m; ++i) rhs.segment(i * k, k) = svec(p[i] - g.row_sum(i));
  for (int j = 0; j < n; ++j) rhs.segment((m + j) * k, k) = svec(q[j] - g.col_sum(j));
  Vector x;
  try {
    x = detail::solve_gauge_system(a, rhs, gauge_kernel(m, n, k), ProjectionMethod::Auto).x;
  } catch (const Error&) {
    return std::nullopt;
  }
  BlockMatrix out(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const Matrix s = smat(x.segment(i * k, k) + x.segment((m + j) * k, k), d);
      const Matrix half = spd_fn(Matrix(0.5 * s), MatFn::Exp);
      out(i, j) = sym(half * g(i, j) * half);
      if (!is_spd(out(i, j), spd_floor)) return std::nullopt;
    }
  return out;
}

}  // namespace

BalanceResult mbalance_run(const BlockMatrix& a, const BlockMarginal& p, const BlockMarginal& q,
                           const BalanceOptions& opts) {
  require_marginals(a, p, q, "mbalance");
  const int m = a.rows();
  const int n = a.cols();
  BalanceResult out{a, {}};
  auto& b = out.balanced;
  auto& report = out.report;
  int next_polish = 0;
  for (int it = 1; it <= opts.max_iter; ++it) {
    report.iterations = it;
    double gap = constraint_gap(b, p, q);
    if (std::isfinite(gap) && gap > opts.tol && gap <= opts.polish_below && it >= next_polish) {
      for (int step = 0; step < 5 && gap > opts.tol; ++step) {
        auto polished = newton_scaling_step(b, p, q, opts.spd_floor);
        if (!polished) break;
        const double polished_gap = constraint_gap(*polished, p, q);
        if (!(polished_gap < gap)) break;
        b = std::move(*polished);
        gap = polished_gap;
      }
      // Retry only after a few more sweeps if the correction did not finish.
      next_polish = it + 10;
    }
    report.gap_trace.push_back(gap);
    report.final_gap = gap;
    if (!std::isfinite(gap)) break;
    if (gap <= opts.tol) {
      report.converged = true;
      return out;
    }
    parallel_for(static_cast<std::size_t>(n), [&](std::size_t jj) {
      const int j = static_cast<int>(jj);
      const Matrix r = riccati_solve(b.col_sum(j), q[j]);
      for (int i = 0; i < m; ++i) b(i, j) = sym(r * b(i, j) * r);
    });
    parallel_for(static_cast<std::size_t>(m), [&](std::size_t ii) {
      const int i = static_cast<int>(ii);
      const Matrix l = riccati_solve(b.row_sum(i), p[i]);
      for (int j = 0; j < n; ++j) b(i, j) = sym(l * b(i, j) * l);
    });
  }
  return out;
}

BalanceResult mbalance(const BlockMatrix& a, const BlockMarginal& p, const BlockMarginal& q,
                       const BalanceOptions& opts) {
  auto result = mbalance_run(a, p, q, opts);
  if (!result.report.converged) {
    std::ostringstream os;
    os << "mbalance: gap " << result.report.final_gap << " after "
       << result.report.iterations << " iterations (tol " << opts.tol << ")";
    fail(ErrorCode::NotConverged, os.str());
  }
  return result;
}

BlockMatrix exp_step(const BlockMatrix& gamma, const BlockMatrix& u, double spd_floor) {
  require_shape(gamma, u, "exp_step");
  BlockMatrix out(gamma.rows(), gamma.cols(), gamma.dim());
  const std::size_t count = static_cast<std::size_t>(gamma.rows()) * gamma.cols();
  parallel_for(count, [&](std::size_t idx) {
    const int i = static_cast<int>(idx) / gamma.cols();
    const int j = static_cast<int>(idx) % gamma.cols();
    const Matrix& g = gamma(i, j);
    const Matrix& step = u(i, j);
    if ((step.array() == 0.0).all()) {
      out(i, j) = g;
      return;
    }
    const Eig e = sym_eig(g);
    const Matrix half = spd_fn(e, MatFn::Sqrt);
    const Matrix inv_half = spd_fn(e, MatFn::InvSqrt);
    const Matrix moved =
        sym(half * spd_fn(Matrix(inv_half * sym(step) * inv_half), MatFn::Exp) * half);
    if (!is_spd(moved, spd_floor))
      fail(ErrorCode::NotPositiveDefinite, "exp_step: block left the SPD cone");
    out(i, j) = moved;
  });
  return out;
}

BlockMatrix retract(const BlockMatrix& gamma, const BlockMatrix& u, const BlockMarginal& p,
                    const BlockMarginal& q, const BalanceOptions& opts, BalanceReport* report) {
  auto result = mbalance(exp_step(gamma, u, opts.spd_floor), p, q, opts);
  if (report != nullptr) *report = result.report;
  return std::move(result.balanced);
}

BlockMatrix initial_coupling(const BlockMarginal& p, const BlockMarginal& q,
                             const BalanceOptions& opts) {
  if (p.dim() != q.dim())
    fail(ErrorCode::InvalidInput, "initial_coupling: marginal dimensions differ");
  BlockMatrix seed(p.size(), q.size(), p.dim());
  for (int i = 0; i < p.size(); ++i) {
    const Matrix half = spd_fn(p[i], MatFn::Sqrt);
    for (int j = 0; j < q.size(); ++j) seed(i, j) = sym(half * q[j] * half);
  }
  auto result = mbalance_run(seed, p, q, opts);
  if (!result.report.converged) {
    std::ostringstream os;
    os << "initial_coupling: balancing stopped at gap " << result.report.final_gap
       << " after " << result.report.iterations << " iterations";
    fail(ErrorCode::FeasibilityUnknown, os.str());
  }
  return std::move(result.balanced);
}

TraceProjection project_tangent_trace(const BlockMatrix& gamma, const BlockMatrix& s) {
  require_shape(gamma, s, "project_tangent_trace");
  const int m = gamma.rows();
  const int n = gamma.cols();
  Matrix a = Matrix::Zero(m + n, m + n);
  Vector rhs(m + n);
  std::vector<Matrix> squares(static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const Matrix sq = sym(gamma(i, j) * gamma(i, j));
      const double t = sq.trace();
      squares[static_cast<std::size_t>(i) * n + j] = sq;
      a(i, i) += t;
      a(m + j, m + j) += t;
      a(i, m + j) = t;
      a(m + j, i) = t;
    }
  }
  for (int i = 0; i < m; ++i) rhs(i) = -s.row_sum(i).trace();
  for (int j = 0; j < n; ++j) rhs(m + j) = -s.col_sum(j).trace();
  const auto solved =
      detail::solve_gauge_system(a, rhs, gauge_kernel(m, n, 1), ProjectionMethod::Auto);

  TraceProjection out;
  out.lambda.assign(solved.x.data(), solved.x.data() + m);
  out.theta.assign(solved.x.data() + m, solved.x.data() + m + n);
  out.tangent = BlockMatrix(m, n, gamma.dim());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out.tangent(i, j) = sym(s(i, j)) + (out.lambda[static_cast<std::size_t>(i)] +
                                          out.theta[static_cast<std::size_t>(j)]) *
                                             squares[static_cast<std::size_t>(i) * n + j];
  return out;
}

double trace_constraint_gap(const BlockMatrix& gamma, const std::vector<double>& p_weights,
                            const std::vector<double>& q_weights) {
  double gap = 0.0;
  for (int i = 0; i < gamma.rows(); ++i) {
    const double pi = p_weights[static_cast<std::size_t>(i)];
    gap = std::max(gap, std::abs(gamma.row_sum(i).trace() - pi) / pi);
  }
  for (int j = 0; j < gamma.cols(); ++j) {
    const double qj = q_weights[static_cast<std::size_t>(j)];
    gap = std::max(gap, std::abs(gamma.col_sum(j).trace() - qj) / qj);
  }
  return gap;
}

BlockMatrix trbalance(const BlockMatrix& a, const std::vector<double>& p_weights,
                      const std::vector<double>& q_weights, double tol, int max_iter) {
  const int m = a.rows();
  const int n = a.cols();
  if (static_cast<int>(p_weights.size()) != m || static_cast<int>(q_weights.size()) != n)
    fail(ErrorCode::InvalidInput, "trbalance: weight vectors do not match block shape");
  Matrix traces(m, n);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      traces(i, j) = a(i, j).trace();
      if (!(traces(i, j) > 0.0)) fail(ErrorCode::NotPositiveDefinite, "trbalance: block trace <= 0");
    }
  }
  if (trace_constraint_gap(a, p_weights, q_weights) <= tol) return a;
  const Eigen::Map<const Vector> p(p_weights.data(), m);
  const Eigen::Map<const Vector> q(q_weights.data(), n);
  // Scalar RAS scaling of the trace matrix.
  Vector row_scale = Vector::Ones(m);
  Vector col_scale = Vector::Ones(n);
  bool converged = false;
  for (int it = 0; it < max_iter; ++it) {
    col_scale = q.cwiseQuotient(traces.transpose() * row_scale);
    row_scale = p.cwiseQuotient(traces * col_scale);
    const Vector cols = (row_scale.asDiagonal() * traces * col_scale.asDiagonal())
                            .colwise()
                            .sum()
                            .transpose();
    if ((cols - q).cwiseQuotient(q).cwiseAbs().maxCoeff() <= tol) {
      converged = true;
      break;
    }
  }
  if (!converged) fail(ErrorCode::NotConverged, "trbalance: trace scaling did not converge");
  BlockMatrix out(m, n, a.dim());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out(i, j) = (row_scale(i) * col_scale(j)) * a(i, j);
  return out;
}

CouplingManifold::CouplingManifold(BlockMarginal p, BlockMarginal q, BalanceOptions balance)
    : p_(std::move(p)), q_(std::move(q)), balance_(balance) {
  if (p_.dim() != q_.dim())
    fail(ErrorCode::InvalidInput, "CouplingManifold: marginal dimensions differ");
}

double CouplingManifold::inner(const BlockMatrix&x, const BlockMatrix& u,
                               const BlockMatrix& v) const {
  return metric(x, u, v);
}

BlockMatrix CouplingManifold::project(const BlockMatrix& x, const BlockMatrix& s) const {
  return project_tangent(x, s).tangent;
}

BlockMatrix CouplingManifold::rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const {
  return riemannian_gradient(x, egrad).tangent;
}

BlockMatrix CouplingManifold::retract(const BlockMatrix& x, const BlockMatrix& u) const {
  BalanceReport report;
  BlockMatrix out = bspdot::retract(x, u, p_, q_, balance_, &report);
  balance_iterations_ += report.iterations;
  return out;
}

double CouplingManifold::residual(const BlockMatrix& x) const {
  return constraint_gap(x, p_, q_);
}

BlockMatrix CouplingManifold::initial_point() const {
  return initial_coupling(p_, q_, balance_);
}

TraceCouplingManifold::TraceCouplingManifold(std::vector<double> p_weights,
                                             std::vector<double> q_weights, int dim)
    : p_(std::move(p_weights)), q_(std::move(q_weights)), dim_(dim) {
  double sp = 0.0;
  double sq = 0.0;
  for (double v : p_) {
    if (!(v > 0.0)) fail(ErrorCode::InvalidInput, "TraceCouplingManifold: weights must be > 0");
    sp += v;
  }
  for (double v : q_) {
    if (!(v > 0.0)) fail(ErrorCode::InvalidInput, "TraceCouplingManifold: weights must be > 0");
    sq += v;
  }
  if (std::abs(sp - sq) > 1e-10 * sp)
    fail(ErrorCode::InvalidInput, "TraceCouplingManifold: weights differ in total mass");
}

double TraceCouplingManifold::inner(const BlockMatrix& x, const BlockMatrix& u,
                                    const BlockMatrix& v) const {
  return metric(x, u, v);
}

BlockMatrix TraceCouplingManifold::project(const BlockMatrix& x, const BlockMatrix& s) const {
  return project_tangent_trace(x, s).tangent;
}

BlockMatrix TraceCouplingManifold::rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const {
  BlockMatrix lifted(x.rows(), x.cols(), x.dim());
  for (int i = 0; i < x.rows(); ++i)
    for (int j = 0; j < x.cols(); ++j) lifted(i, j) = sym(x(i, j) * sym(egrad(i, j)) * x(i, j));
  return project_tangent_trace(x, lifted).tangent;
}

BlockMatrix TraceCouplingManifold::retract(const BlockMatrix& x, const BlockMatrix& u) const {
  return trbalance(exp_step(x, u), p_, q_);
}

double TraceCouplingManifold::residual(const BlockMatrix& x) const {
  return trace_constraint_gap(x, p_, q_);
}

BlockMatrix TraceCouplingManifold::initial_point() const {
  const int m = static_cast<int>(p_.size());
  const int n = static_cast<int>(q_.size());
  double total = 0.0;
  for (double v : p_) total += v;
  BlockMatrix out(m, n, dim_);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out(i, j) = (p_[static_cast<std::size_t>(i)] * q_[static_cast<std::size_t>(j)] /
                   (total * dim_)) *
                  Matrix::Identity(dim_, dim_);
  return out;
}

}  // namespace bspdot
