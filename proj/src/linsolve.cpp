#include "linsolve.hpp"

#include "bspdot/error.hpp"

#include <cmath>
#include <sstream>

namespace bspdot::detail {

namespace {

GaugeSolve solve_eigen(const Matrix& a, const Vector& b, Eigen::Index kernel_dim) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  if (es.info() != Eigen::Success)
    fail(ErrorCode::ProjectionFailed, "eigensolver failed on the multiplier system");
  const Vector& values = es.eigenvalues();
  const double top = values.cwiseAbs().maxCoeff();
  if (!(top > 0.0)) return {Vector::Zero(b.size()), 1.0};
  const double cutoff = top * 1e-13;
  Vector coeffs = es.eigenvectors().transpose() * b;
  Eigen::Index dropped = 0;
  double smallest = top;
  for (Eigen::Index k = 0; k < values.size(); ++k) {
    if (values(k) > cutoff) {
      coeffs(k) /= values(k);
      smallest = std::min(smallest, values(k));
    } else {
      coeffs(k) = 0.0;
      ++dropped;
    }
  }
  const double condition = top / smallest;
  if (dropped > kernel_dim) {
    std::ostringstream os;
    os << "multiplier system is singular beyond its gauge freedom (" << dropped
       << " null directions, expected " << kernel_dim << "; condition estimate "
       << condition << ")";
    fail(ErrorCode::ProjectionFailed, os.str());
  }
  return {es.eigenvectors() * coeffs, condition};
}

}  // namespace

GaugeSolve solve_gauge_system(const Matrix& a, const Vector& b, const Matrix& kernel,
                              ProjectionMethod method) {
  if (method == ProjectionMethod::Auto) {
    const Eigen::Index n = a.rows();
    double alpha = a.trace() / static_cast<double>(n);
    if (!(alpha > 0.0)) alpha = 1.0;
    Matrix augmented = a;
    if (kernel.cols() > 0) augmented += alpha * kernel * kernel.transpose();
    Eigen::LLT<Matrix> llt(augmented);
    if (llt.info() == Eigen::Success) {
      Vector x = llt.solve(b);
      const double residual = (a * x - b).norm();
      const double scale = a.norm() * x.norm() + b.norm();
      if (x.allFinite() && residual <= 1e-10 * scale) {
        const Vector diag = Matrix(llt.matrixL()).diagonal();
        const double ratio = diag.maxCoeff() / diag.minCoeff();
        return {x, ratio * ratio};
      }
    }
  }
  return solve_eigen(a, b, kernel.cols());
}

Matrix congruence_operator(const Matrix& g) {
  const int d = static_cast<int>(g.rows());
  const int k = svec_size(d);
  Matrix op(k, k);
  for (int p = 0; p < k; ++p) op.col(p) = svec(g * svec_basis(d, p) * g);
  return op;
}

Matrix spd_inverse(const Matrix& g) {
  Eigen::LLT<Matrix> llt(g);
  if (llt.info() != Eigen::Success)
    fail(ErrorCode::NotPositiveDefinite, "block is not positive definite");
  return sym(llt.solve(Matrix::Identity(g.rows(), g.cols())));
}

}  // namespace bspdot::detail
