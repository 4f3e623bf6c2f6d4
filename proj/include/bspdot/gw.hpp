#pragma once

// Matrix Gromov-Wasserstein discrepancy between (distance matrix, block
// marginal) pairs, the block-coordinate GW average of distance matrices, and
// classical MDS.

#include "bspdot/block.hpp"
#include "bspdot/coupling.hpp"
#include "bspdot/solver.hpp"

#include <vector>

namespace bspdot {

/// Symmetric, finite, nonnegative n x n matrix. A zero diagonal is required
/// for the squared loss; the KL loss instead needs strictly positive entries.
class DistanceMatrix {
 public:
  DistanceMatrix() = default;
  explicit DistanceMatrix(Matrix values);

  int size() const { return static_cast<int>(values_.rows()); }
  const Matrix& values() const { return values_; }
  double operator()(int i, int j) const { return values_(i, j); }
  bool zero_diagonal() const { return values_.diagonal().isZero(0.0); }

  static DistanceMatrix from_points(const Matrix& points);  // rows are points

 private:
  Matrix values_;
};

enum class GwLossKind { Squared, Kl };

const char* to_string(GwLossKind k);

/// L(a, b) = f1(a) + f2(b) - h1(a) h2(b).
struct GwLoss {
  GwLossKind kind = GwLossKind::Squared;

  double operator()(double a, double b) const;
  double f1(double a) const;
  double f2(double b) const;
  double h1(double a) const;
  double h2(double b) const;
  /// Inverse of f1' / h1': the minimizer a of sum_k w_k L(a, b_k) given
  /// h = sum_k w_k h2(b_k) / sum_k w_k.
  double solve_first(double h) const;
  /// Throws InvalidInput when `d` cannot be the second argument (KL needs
  /// strictly positive entries).
  void check_second(const DistanceMatrix& d) const;
};

/// sum_{i i' j j'} L(Dx_ii', Dy_jj') tr(Gamma_ij Gamma_i'j').
double mgw_objective(const DistanceMatrix& dx, const DistanceMatrix& dy, const GwLoss& loss,
                     const BlockMatrix& gamma);
/// Blocks 2 sum_{i'j'} L(Dx_ii', Dy_jj') Gamma_i'j'.
BlockMatrix mgw_euclidean_gradient(const DistanceMatrix& dx, const DistanceMatrix& dy,
                                   const GwLoss& loss, const BlockMatrix& gamma);
Problem mgw_problem(const DistanceMatrix& dx, const DistanceMatrix& dy, const GwLoss& loss);

struct MgwResult {
  BlockMatrix coupling;
  double value = 0.0;
  SolveReport report;
};

MgwResult solve_mgw(const DistanceMatrix& dx, const DistanceMatrix& dy, const BlockMarginal& p,
                    const BlockMarginal& q, const GwLoss& loss, const SolverConfig& config = {},
                    const BalanceOptions& balance = {}, const BlockMatrix* warm_start = nullptr);

struct GwInput {
  DistanceMatrix distances;
  BlockMarginal marginal;
};

struct GwAverageOptions {
  int sweeps = 10;
  SolverConfig solver;
  BalanceOptions balance;
  /// Clip negative closed-form entries to zero (reported in the result).
  bool clip_negative = true;
};

struct GwAverageResult {
  DistanceMatrix average;
  std::vector<BlockMatrix> couplings;
  /// Total objective after every half-step: index 0 is the starting
  /// couplings with the first average, then (couplings, average) per sweep.
  std::vector<double> objective_trace;
  bool clipped = false;
  long inner_iterations = 0;
};

/// The closed-form minimizer over the average given fixed couplings. The
/// squared loss keeps a zero diagonal.
DistanceMatrix gw_closed_form(const std::vector<GwInput>& inputs,
                              const std::vector<BlockMatrix>& couplings,
                              const BlockMarginal& pbar, const std::vector<double>& weights,
                              const GwLoss& loss, bool clip_negative, bool* clipped = nullptr);

/// sum_l w_l MGW((dbar, pbar), (D^l, P^l)) at the given couplings.
double gw_total_objective(const std::vector<GwInput>& inputs,
                          const std::vector<BlockMatrix>& couplings, const DistanceMatrix& dbar,
                          const std::vector<double>& weights, const GwLoss& loss);

GwAverageResult gw_average_distance(const std::vector<GwInput>& inputs,
                                    const BlockMarginal& pbar, const std::vector<double>& weights,
                                    const GwLoss& loss, const GwAverageOptions& options = {});

struct MdsResult {
  Matrix points;      // n x dim
  double stress = 0;  // ||D - D(points)||_F / ||D||_F
};

/// Torgerson MDS: top eigenpairs of -J (D o D) J / 2.
MdsResult classical_mds(const DistanceMatrix& d, int dim);

}  // namespace bspdot
