#pragma once

// The block-SPD coupling manifold: couplings Gamma = [Gamma_ij] with SPD
// blocks, row-block sums P_i and column-block sums Q_j, under the metric
// <U, V>_Gamma = sum_ij tr(Gamma_ij^-1 U_ij Gamma_ij^-1 V_ij).

#include "bspdot/block.hpp"
#include "bspdot/manifold.hpp"

#include <atomic>
#include <vector>

namespace bspdot {

struct BalanceOptions {
  double tol = 1e-10;  // relative constraint gap
  int max_iter = 1000;
  double spd_floor = kDefaultSpdFloor;
  /// Once the gap is below this, try to finish with Newton steps on the
  /// congruence scalings (kept only while they reduce the gap). 0 disables.
  double polish_below = 1e-3;
};

struct BalanceReport {
  int iterations = 0;           // convergence checks performed
  std::vector<double> gap_trace;  // gap at the start of each iteration
  double final_gap = 0.0;
  bool converged = false;
};

struct BalanceResult {
  BlockMatrix balanced;
  BalanceReport report;
};

enum class ProjectionMethod {
  Auto,  // gauge-augmented Cholesky, eigen pseudo-inverse fallback
  Svd,   // minimum-norm solve through the eigendecomposition
};

struct Projection {
  BlockMatrix tangent;
  std::vector<Matrix> lambda;  // one per row
  std::vector<Matrix> theta;   // one per column
  double condition = 0.0;      // estimate for the reduced system
};

struct TraceProjection {
  BlockMatrix tangent;
  std::vector<double> lambda;
  std::vector<double> theta;
};

/// Max over rows and columns of ||block sum - marginal||_F / ||marginal||_F.
double constraint_gap(const BlockMatrix& gamma, const BlockMarginal& p,
                      const BlockMarginal& q);

double metric(const BlockMatrix& gamma, const BlockMatrix& u, const BlockMatrix& v);

Projection project_tangent(const BlockMatrix& gamma, const BlockMatrix& s,
                           ProjectionMethod method = ProjectionMethod::Auto);

/// Projection of [Gamma_ij {egrad_ij}_S Gamma_ij]; the multipliers are kept
/// because they are the dual variables of the marginal constraints.
Projection riemannian_gradient(const BlockMatrix& gamma, const BlockMatrix& egrad);

/// Riemannian Hessian applied to u, given the Euclidean gradient and the
/// Euclidean directional derivative of that gradient along u.
BlockMatrix riemannian_hessian(const BlockMatrix& gamma, const BlockMatrix& egrad,
                               const BlockMatrix& ehess_along_u, const BlockMatrix& u);

/// Alternating symmetric Riccati scaling of columns then rows. Never throws
/// on non-convergence; check report.converged.
BalanceResult mbalance_run(const BlockMatrix& a, const BlockMarginal& p,
                           const BlockMarginal& q, const BalanceOptions& opts = {});
/// As mbalance_run but throws NotConverged when the gap stays above tol.
BalanceResult mbalance(const BlockMatrix& a, const BlockMarginal& p, const BlockMarginal& q,
                       const BalanceOptions& opts = {});

/// Blockwise Gamma_ij^{1/2} exp(Gamma_ij^{-1/2} U_ij Gamma_ij^{-1/2}) Gamma_ij^{1/2};
/// blocks with U_ij == 0 are copied unchanged.
BlockMatrix exp_step(const BlockMatrix& gamma, const BlockMatrix& u,
                     double spd_floor = kDefaultSpdFloor);

BlockMatrix retract(const BlockMatrix& gamma, const BlockMatrix& u, const BlockMarginal& p,
                    const BlockMarginal& q, const BalanceOptions& opts = {},
                    BalanceReport* report = nullptr);

/// Feasible starting coupling: seed P_i^{1/2} Q_j P_i^{1/2}, then balance.
/// Throws FeasibilityUnknown when balancing does not converge.
BlockMatrix initial_coupling(const BlockMarginal& p, const BlockMarginal& q,
                             const BalanceOptions& opts = {});

// Trace-constrained variant: only sum_j tr(Gamma_ij) = p_i and
// sum_i tr(Gamma_ij) = q_j are imposed.

TraceProjection project_tangent_trace(const BlockMatrix& gamma, const BlockMatrix& s);
BlockMatrix trbalance(const BlockMatrix& a, const std::vector<double>& p_weights,
                      const std::vector<double>& q_weights, double tol = 1e-12,
                      int max_iter = 10000);
double trace_constraint_gap(const BlockMatrix& gamma, const std::vector<double>& p_weights,
                            const std::vector<double>& q_weights);

class CouplingManifold : public Manifold {
 public:
  CouplingManifold(BlockMarginal p, BlockMarginal q, BalanceOptions balance = {});

  double inner(const BlockMatrix& x, const BlockMatrix& u, const BlockMatrix& v) const override;
  BlockMatrix project(const BlockMatrix& x, const BlockMatrix& s) const override;
  BlockMatrix rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const override;
  BlockMatrix retract(const BlockMatrix& x, const BlockMatrix& u) const override;
  double residual(const BlockMatrix& x) const override;
  long inner_iterations() const override { return balance_iterations_.load(); }

  const BlockMarginal& row_marginal() const { return p_; }
  const BlockMarginal& col_marginal() const { return q_; }
  const BalanceOptions& balance_options() const { return balance_; }
  BlockMatrix initial_point() const;

 private:
  BlockMarginal p_;
  BlockMarginal q_;
  BalanceOptions balance_;
  mutable std::atomic<long> balance_iterations_{0};
};

class TraceCouplingManifold : public Manifold {
 public:
  TraceCouplingManifold(std::vector<double> p_weights, std::vector<double> q_weights, int dim);

  double inner(const BlockMatrix& x, const BlockMatrix& u, const BlockMatrix& v) const override;
  BlockMatrix project(const BlockMatrix& x, const BlockMatrix& s) const override;
  BlockMatrix rgrad(const BlockMatrix& x, const BlockMatrix& egrad) const override;
  BlockMatrix retract(const BlockMatrix& x, const BlockMatrix& u) const override;
  double residual(const BlockMatrix& x) const override;

  /// Independent coupling p_i q_j I / d.
  BlockMatrix initial_point() const;

 private:
  std::vector<double> p_;
  std::vector<double> q_;
  int dim_;
};

}  // namespace bspdot
