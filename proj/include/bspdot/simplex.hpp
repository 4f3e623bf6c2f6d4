#pragma once

// Geometry of the simplex of SPD matrices {P = (P_1..P_n) : P_i SPD, sum P_i = I}.
// Points and tangents are n x 1 block columns.

#include "bspdot/block.hpp"
#include "bspdot/manifold.hpp"

namespace bspdot {

struct SimplexProjection {
  BlockMatrix tangent;
  Matrix lambda;
};

double simplex_metric(const BlockMatrix& p, const BlockMatrix& u, const BlockMatrix& v);
SimplexProjection simplex_project(const BlockMatrix& p, const BlockMatrix& s);
BlockMatrix simplex_retract(const BlockMatrix& p, const BlockMatrix& u,
                            double spd_floor = kDefaultSpdFloor);
BlockMatrix simplex_gradient(const BlockMatrix& p, const BlockMatrix& egrad);

/// P_i = I / n.
BlockMatrix simplex_uniform(int n, int dim);

class SpdSimplexManifold : public Manifold {
 public:
  SpdSimplexManifold(int n, int dim) : n_(n), dim_(dim) {}

  double inner(const BlockMatrix& x, const BlockMatrix& u, const BlockMatrix& v) const override;
  BlockMatrix project(const BlockMatrix& x, const BlockMatrix& s) const override;
  BlockMatrix rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const override;
  BlockMatrix retract(const BlockMatrix& x, const BlockMatrix& u) const override;
  double residual(const BlockMatrix& x) const override;

  int size() const { return n_; }
  int dim() const { return dim_; }

 private:
  int n_;
  int dim_;
};

}  // namespace bspdot
