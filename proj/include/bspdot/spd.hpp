#pragma once

// Dense symmetric / SPD matrix primitives. Every matrix function is computed
// through a symmetric eigendecomposition so results stay exactly symmetric.

#include <Eigen/Dense>

#include <memory>

namespace bspdot {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kDefaultSpdFloor = 1e-12;

/// {A}_S = (A + A^T) / 2
inline Matrix sym(const Matrix& a) { return 0.5 * (a + a.transpose()); }

struct Eig {
  Vector values;   // ascending
  Matrix vectors;  // orthonormal columns
};

Eig sym_eig(const Matrix& a);

/// True when `a` is symmetric-positive-definite with lambda_min > floor * lambda_max.
bool is_spd(const Matrix& a, double floor = kDefaultSpdFloor);

class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(const Matrix& a);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }

 private:
  Matrix m_;
};

/// Validated SPD value. The eigendecomposition is computed once at
/// construction (it is needed for the floor check) and shared between copies.
class SpdMat {
 public:
  SpdMat() = default;
  explicit SpdMat(const Matrix& a, double floor = kDefaultSpdFloor);

  int dim() const { return static_cast<int>(m_.rows()); }
  const Matrix& matrix() const { return m_; }
  const Eig& eig() const { return *eig_; }

 private:
  Matrix m_;
  std::shared_ptr<const Eig> eig_;
};

enum class MatFn { Sqrt, InvSqrt, Exp, Log, Power };

/// Applies f to the eigenvalues. Exp accepts any symmetric input; the others
/// require SPD input and throw NotPositiveDefinite otherwise.
Matrix spd_fn(const Matrix& a, MatFn f, double power = 1.0);
Matrix spd_fn(const SpdMat& a, MatFn f, double power = 1.0);
Matrix spd_fn(const Eig& e, MatFn f, double power = 1.0);

/// Unique SPD T with T m T = q.
Matrix riccati_solve(const Matrix& m, const Matrix& q);
Matrix riccati_solve(const SpdMat& m, const SpdMat& q);

/// Symmetric X with (p X + X p) / 2 = b.
Matrix lyapunov_solve(const Matrix& p, const Matrix& b);

/// Frobenius inner product tr(A^T B).
inline double frob_dot(const Matrix& a, const Matrix& b) {
  return a.cwiseProduct(b).sum();
}

}  // namespace bspdot
