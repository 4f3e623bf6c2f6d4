#pragma once

// Matrix-valued optimal transport objectives, cost constructors, the
// metric-axiom harness, and scalar OT references (exact simplex, Sinkhorn).

#include "bspdot/block.hpp"
#include "bspdot/coupling.hpp"
#include "bspdot/solver.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace bspdot {

/// Blocks of PSD cost matrices. Slightly indefinite blocks (lambda_min down to
/// -1e-12 * lambda_max) are clipped to PSD; anything worse is rejected.
class CostField {
 public:
  CostField() = default;
  explicit CostField(BlockMatrix blocks);

  const BlockMatrix& blocks() const { return blocks_; }
  int rows() const { return blocks_.rows(); }
  int cols() const { return blocks_.cols(); }
  int dim() const { return blocks_.dim(); }
  const Matrix& operator()(int i, int j) const { return blocks_(i, j); }

  /// Scalar cost matrix tr(C_ij).
  Matrix traces() const;

 private:
  BlockMatrix blocks_;
};

enum class Regularizer { None, QuantumEntropy, SquaredFrobenius };

const char* to_string(Regularizer r);

struct RegularizedProblem {
  CostField cost;
  double epsilon = 0.0;
  Regularizer regularizer = Regularizer::QuantumEntropy;
};

/// Omega(G): tr(G log G - G) for quantum entropy (eigenvalues below the SPD
/// floor contribute through x log x -> 0), ||G||_F^2 / 2 for squared Frobenius.
double regularizer_value(Regularizer r, const Matrix& gamma);
Matrix regularizer_gradient(Regularizer r, const Matrix& gamma);
/// Directional derivative of regularizer_gradient along u.
Matrix regularizer_hessian(Regularizer r, const Matrix& gamma, const Matrix& u);

double transport_cost(const CostField& cost, const BlockMatrix& gamma);
double mw_objective(const RegularizedProblem& problem, const BlockMatrix& gamma);
BlockMatrix mw_euclidean_gradient(const RegularizedProblem& problem, const BlockMatrix& gamma);
BlockMatrix mw_euclidean_hessian(const RegularizedProblem& problem, const BlockMatrix& gamma,
                                 const BlockMatrix& u);
Problem mw_problem(const RegularizedProblem& problem);

struct MwOptions {
  SolverConfig solver;
  BalanceOptions balance;
  /// Solve a decreasing epsilon sequence (halving from continuation_start),
  /// warm-starting each stage.
  bool continuation = false;
  double continuation_start = 0.1;
  std::optional<BlockMatrix> warm_start;
};

struct MwResult {
  BlockMatrix coupling;
  double value = 0.0;           // regularized objective at the solution
  double transport_cost = 0.0;  // sum_ij tr(C_ij Gamma_ij)
  SolveReport report;
  std::vector<double> epsilon_path;
};

MwResult solve_mw(const BlockMarginal& p, const BlockMarginal& q,
                  const RegularizedProblem& problem, const MwOptions& options = {});

/// C_ij = dist(i, j)^2 I_dim.
CostField cost_scaled_identity(const Matrix& distances, int dim);
/// C_ij = (X_i - Y_j)(X_i - Y_j)^T for d x s samples.
CostField cost_outer_difference(const std::vector<Matrix>& xs, const std::vector<Matrix>& ys);
/// C_ij = ||x_i - y_j||^2 I_dim for grid positions.
CostField cost_grid_sq_euclidean(const std::vector<Vector>& xs, const std::vector<Vector>& ys,
                                 int dim);

struct MetricCheckOptions {
  int trace_trials = 100;      // random PSD A for the trace-triangle condition
  int triples = 50;            // random marginal triples for the MW checks
  int dim = 2;                 // block size for lifted marginals
  double epsilon = 1e-4;
  std::uint64_t seed = 1;
  MwOptions solve;
};

struct AxiomReport {
  bool cost_symmetric = false;
  bool cost_definite = false;
  bool trace_triangle = false;
  double worst_trace_slack = 0.0;
  bool empirical_run = false;  // MW checks only run when all cost conditions hold
  double max_symmetry_error = 0.0;  // |MW(p,q) - MW(q,p)| / MW(p,q)
  double max_self_distance = 0.0;   // MW(p,p)
  double min_triangle_slack = 0.0;  // MW(p,q) + MW(q,r) - MW(p,r)
  std::vector<std::string> failures;

  bool cost_conditions() const { return cost_symmetric && cost_definite && trace_triangle; }
};

/// MW(p, q) = sqrt(transport cost) of the regularized solution between lifted
/// scalar marginals on a shared support.
double mw_distance(const std::vector<double>& p, const std::vector<double>& q,
                   const CostField& cost, double epsilon, const MwOptions& options = {});

AxiomReport check_metric_axioms(const CostField& costs, const MetricCheckOptions& options = {});

struct ScalarPlan {
  Matrix coupling;
  double value = 0.0;
  int pivots = 0;
};

/// Exact discrete OT by the transportation simplex (northwest-corner start,
/// MODI potentials, Bland's rule for entering and leaving cells).
ScalarPlan scalar_ot_exact(const std::vector<double>& p, const std::vector<double>& q,
                           const Matrix& cost);

/// Entropic OT by log-domain Sinkhorn; returns the coupling.
Matrix scalar_sinkhorn(const std::vector<double>& p, const std::vector<double>& q,
                       const Matrix& cost, double epsilon, double tol = 1e-13,
                       int max_iter = 200000);

}  // namespace bspdot
