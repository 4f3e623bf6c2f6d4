#pragma once

#include "bspdot/coupling.hpp"
#include "bspdot/spd.hpp"

namespace bspdot::detail {

struct GaugeSolve {
  Vector x;
  double condition = 0.0;
};

/// Minimum-norm solution of A x = b for symmetric PSD A whose null space is
/// spanned by the orthonormal columns of `kernel` (possibly empty), with b in
/// the range of A.
GaugeSolve solve_gauge_system(const Matrix& a, const Vector& b, const Matrix& kernel,
                              ProjectionMethod method);

/// svec representation of the congruence X -> G X G on symmetric matrices.
Matrix congruence_operator(const Matrix& g);

/// Cached LDLT-free inverse via eigendecomposition; throws NotPositiveDefinite.
Matrix spd_inverse(const Matrix& g);

}  // namespace bspdot::detail
