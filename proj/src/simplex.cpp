#include "bspdot/simplex.hpp"

#include "bspdot/coupling.hpp"
#include "bspdot/error.hpp"
#include "linsolve.hpp"

namespace bspdot {

namespace {

void require_column(const BlockMatrix& p, const BlockMatrix& s, const char* what) {
  if (p.cols() != 1 || !p.same_shape(s))
    fail(ErrorCode::InvalidInput, std::string(what) + ": expected matching n x 1 block columns");
}

}  // namespace

double simplex_metric(const BlockMatrix& p, const BlockMatrix& u, const BlockMatrix& v) {
  require_column(p, u, "simplex_metric");
  return metric(p, u, v);
}

SimplexProjection simplex_project(const BlockMatrix& p, const BlockMatrix& s) {
  require_column(p, s, "simplex_project");
  const int d = p.dim();
  const int k = svec_size(d);
  Matrix a = Matrix::Zero(k, k);
  for (int i = 0; i < p.rows(); ++i) a += detail::congruence_operator(p(i, 0));
  const Vector rhs = -svec(s.col_sum(0));
  const auto solved =
      detail::solve_gauge_system(a, rhs, Matrix(k, 0), ProjectionMethod::Auto);
  SimplexProjection out{BlockMatrix(p.rows(), 1, d), smat(solved.x, d)};
  for (int i = 0; i < p.rows(); ++i)
    out.tangent(i, 0) = sym(s(i, 0)) + sym(p(i, 0) * out.lambda * p(i, 0));
  return out;
}

BlockMatrix simplex_retract(const BlockMatrix& p, const BlockMatrix& u, double spd_floor) {
  require_column(p, u, "simplex_retract");
  if (u.max_abs() == 0.0) return p;
  BlockMatrix moved = exp_step(p, u, spd_floor);
  const Matrix total = moved.col_sum(0);
  const Matrix inv_half = spd_fn(total, MatFn::InvSqrt);
  for (int i = 0; i < p.rows(); ++i) {
    moved(i, 0) = sym(inv_half * moved(i, 0) * inv_half);
    if (!is_spd(moved(i, 0), spd_floor))
      fail(ErrorCode::NotPositiveDefinite, "simplex_retract: block degenerated");
  }
  return moved;
}

BlockMatrix simplex_gradient(const BlockMatrix& p, const BlockMatrix& egrad) {
  require_column(p, egrad, "simplex_gradient");
  BlockMatrix lifted(p.rows(), 1, p.dim());
  for (int i = 0; i < p.rows(); ++i) lifted(i, 0) = sym(p(i, 0) * sym(egrad(i, 0)) * p(i, 0));
  return simplex_project(p, lifted).tangent;
}

BlockMatrix simplex_uniform(int n, int dim) {
  BlockMatrix p(n, 1, dim);
  for (int i = 0; i < n; ++i) p(i, 0) = Matrix::Identity(dim, dim) / n;
  return p;
}

double SpdSimplexManifold::inner(const BlockMatrix& x, const BlockMatrix& u,
                                 const BlockMatrix& v) const {
  return simplex_metric(x, u, v);
}

BlockMatrix SpdSimplexManifold::project(const BlockMatrix& x, const BlockMatrix& s) const {
  return simplex_project(x, s).tangent;
}

BlockMatrix SpdSimplexManifold::rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const {
  return simplex_gradient(x, egrad);
}

BlockMatrix SpdSimplexManifold::retract(const BlockMatrix& x, const BlockMatrix& u) const {
  return simplex_retract(x, u);
}

double SpdSimplexManifold::residual(const BlockMatrix& x) const {
  const Matrix id = Matrix::Identity(x.dim(), x.dim());
  return (x.col_sum(0) - id).norm() / id.norm();
}

}  // namespace bspdot
