#include "bspdot/spd.hpp"

#include "bspdot/error.hpp"

#include <cmath>
#include <sstream>

namespace bspdot {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidInput: return "InvalidInput";
    case ErrorCode::NotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::ProjectionFailed: return "ProjectionFailed";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::FeasibilityUnknown: return "FeasibilityUnknown";
    case ErrorCode::InfeasibleStart: return "InfeasibleStart";
    case ErrorCode::InnerSolveFailed: return "InnerSolveFailed";
    case ErrorCode::StalledAtBoundary: return "StalledAtBoundary";
  }
  return "Unknown";
}

namespace {

void require_square(const Matrix& a, const char* what) {
  if (a.rows() != a.cols() || a.rows() == 0) {
    std::ostringstream os;
    os << what << ": expected a non-empty square matrix, got " << a.rows()
       << "x" << a.cols();
    fail(ErrorCode::InvalidInput, os.str());
  }
}

bool spd_values(const Vector& values, double floor) {
  const double top = values(values.size() - 1);
  return top > 0.0 && values(0) > floor * top;
}

}  // namespace

Eig sym_eig(const Matrix& a) {
  require_square(a, "sym_eig");
  if (!a.allFinite()) fail(ErrorCode::InvalidInput, "sym_eig: non-finite entries");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym(a));
  if (solver.info() != Eigen::Success)
    fail(ErrorCode::InvalidInput, "sym_eig: eigensolver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

bool is_spd(const Matrix& a, double floor) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(sym(a), Eigen::EigenvaluesOnly);
  return solver.info() == Eigen::Success && spd_values(solver.eigenvalues(), floor);
}

SymMat::SymMat(const Matrix& a) {
  require_square(a, "SymMat");
  if (!a.allFinite()) fail(ErrorCode::InvalidInput, "SymMat: non-finite entries");
  m_ = sym(a);
}

SpdMat::SpdMat(const Matrix& a, double floor) {
  auto e = std::make_shared<Eig>(sym_eig(a));
  if (!spd_values(e->values, floor)) {
    std::ostringstream os;
    os << "SpdMat: eigenvalues [" << e->values(0) << ", "
       << e->values(e->values.size() - 1) << "] violate the SPD floor " << floor;
    fail(ErrorCode::NotPositiveDefinite, os.str());
  }
  m_ = sym(a);
  eig_ = std::move(e);
}

Matrix spd_fn(const Eig& e, MatFn f, double power) {
  const Eigen::Index n = e.values.size();
  if (f != MatFn::Exp && e.values(0) <= 0.0) {
    std::ostringstream os;
    os << "spd_fn: smallest eigenvalue " << e.values(0) << " is not positive";
    fail(ErrorCode::NotPositiveDefinite, os.str());
  }
  Vector mapped(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double x = e.values(k);
    switch (f) {
      case MatFn::Sqrt: mapped(k) = std::sqrt(x); break;
      case MatFn::InvSqrt: mapped(k) = 1.0 / std::sqrt(x); break;
      case MatFn::Exp: mapped(k) = std::exp(x); break;
      case MatFn::Log: mapped(k) = std::log(x); break;
      case MatFn::Power: mapped(k) = std::pow(x, power); break;
    }
  }
  return sym(e.vectors * mapped.asDiagonal() * e.vectors.transpose());
}

Matrix spd_fn(const Matrix& a, MatFn f, double power) {
  return spd_fn(sym_eig(a), f, power);
}

Matrix spd_fn(const SpdMat& a, MatFn f, double power) {
  return spd_fn(a.eig(), f, power);
}

Matrix riccati_solve(const Matrix& m, const Matrix& q) {
  if (m.rows() != q.rows() || m.cols() != q.cols())
    fail(ErrorCode::InvalidInput, "riccati_solve: dimension mismatch");
  const Eig em = sym_eig(m);
  const Matrix m_half = spd_fn(em, MatFn::Sqrt);
  const Matrix m_inv_half = spd_fn(em, MatFn::InvSqrt);
  const Matrix inner = spd_fn(Matrix(m_half * q * m_half), MatFn::Sqrt);
  return sym(m_inv_half * inner * m_inv_half);
}

Matrix riccati_solve(const SpdMat& m, const SpdMat& q) {
  const Matrix m_half = spd_fn(m, MatFn::Sqrt);
  const Matrix m_inv_half = spd_fn(m, MatFn::InvSqrt);
  const Matrix inner = spd_fn(Matrix(m_half * q.matrix() * m_half), MatFn::Sqrt);
  return sym(m_inv_half * inner * m_inv_half);
}

Matrix lyapunov_solve(const Matrix& p, const Matrix& b) {
  if (p.rows() != b.rows() || p.cols() != b.cols())
    fail(ErrorCode::InvalidInput, "lyapunov_solve: dimension mismatch");
  const Eig e = sym_eig(p);
  if (e.values(0) <= 0.0)
    fail(ErrorCode::NotPositiveDefinite, "lyapunov_solve: p is not SPD");
  Matrix bt = e.vectors.transpose() * sym(b) * e.vectors;
  const Eigen::Index n = bt.rows();
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index c = 0; c < n; ++c)
      bt(a, c) = 2.0 * bt(a, c) / (e.values(a) + e.values(c));
  return sym(e.vectors * bt * e.vectors.transpose());
}

}  // namespace bspdot
