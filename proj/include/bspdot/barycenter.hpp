#pragma once

// Entropic Wasserstein barycenters of block-SPD marginals on a fixed support:
// Riemannian descent over the SPD simplex with re-solved inner couplings.

#include "bspdot/ot.hpp"
#include "bspdot/simplex.hpp"
#include "bspdot/solver.hpp"

#include <vector>

namespace bspdot {

struct BarycenterProblem {
  std::vector<BlockMatrix> inputs;  // n_l x 1 block columns summing to I
  std::vector<double> weights;      // nonnegative, summing to 1
  std::vector<CostField> costs;     // n x n_l, barycenter support first
  double epsilon = 1e-2;
  int support = 0;                  // n

  void validate() const;
};

struct BarycenterOptions {
  SolverConfig outer;
  MwOptions inner;
  /// Inner gradient tolerance follows max(floor, ratio * outer gradient norm).
  double inner_tol_floor = 1e-10;
  double inner_tol_ratio = 1e-2;
  /// > 0 replaces the Armijo search by fixed steps of this size.
  double fixed_step = 0.0;
  /// Starting point; uniform I / n when empty.
  BlockMatrix initial;
};

struct BarycenterGradient {
  BlockMatrix egrad;  // n x 1, -sum_l w_l Lambda^l_i
  double value = 0.0; // sum_l w_l MW^2_eps(P, P^l)
  std::vector<BlockMatrix> couplings;
  std::vector<Projection> duals;
  long inner_iterations = 0;
};

/// Solves every inner problem at p (warm-started from `warm` when given) and
/// assembles the Euclidean gradient from the row multipliers. Throws
/// InnerSolveFailed naming the offending input.
BarycenterGradient barycenter_gradient(const BarycenterProblem& problem, const BlockMatrix& p,
                                       const MwOptions& inner = {},
                                       const std::vector<BlockMatrix>* warm = nullptr);

struct BarycenterResult {
  BlockMatrix barycenter;
  std::vector<BlockMatrix> couplings;
  SolveReport report;
};

BarycenterResult solve_barycenter(const BarycenterProblem& problem,
                                  const BarycenterOptions& options = {});

}  // namespace bspdot
