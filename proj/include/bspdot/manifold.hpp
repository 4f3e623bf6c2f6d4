#pragma once

#include "bspdot/block.hpp"

namespace bspdot {

/// Interface consumed by the first-order solvers. Points and tangent vectors
/// are both stored as block grids in the ambient representation.
class Manifold {
 public:
  virtual ~Manifold() = default;

  virtual double inner(const BlockMatrix& x, const BlockMatrix& u,
                       const BlockMatrix& v) const = 0;
  virtual BlockMatrix project(const BlockMatrix& x, const BlockMatrix& s) const = 0;
  /// Riemannian gradient from the blockwise Euclidean gradient.
  virtual BlockMatrix rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const = 0;
  /// Throws bspdot::Error when the step leaves the SPD cone or balancing fails.
  virtual BlockMatrix retract(const BlockMatrix& x, const BlockMatrix& u) const = 0;
  /// Relative constraint violation of x.
  virtual double residual(const BlockMatrix& x) const = 0;
  /// Cumulative count of inner (balancing) iterations, for reporting.
  virtual long inner_iterations() const { return 0; }

  double norm(const BlockMatrix& x, const BlockMatrix& u) const;
};

}  // namespace bspdot
