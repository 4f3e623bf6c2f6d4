#pragma once

// Downstream pipelines: barycentric projection and domain adaptation on
// covariance descriptors, displacement interpolation of tensor fields, and
// tensor-field barycenters.

#include "bspdot/barycenter.hpp"
#include "bspdot/block.hpp"
#include "bspdot/ot.hpp"
#include "bspdot/random.hpp"

#include <vector>

namespace bspdot {

/// Sites on a regular grid over [0,1] (shape {n}) or [0,1]^2 (shape {h, w},
/// row-major, x along columns). A single site sits at the domain centre.
std::vector<Vector> grid_positions(const std::vector<int>& shape);

struct TensorField {
  std::vector<int> shape;
  std::vector<Vector> positions;
  std::vector<Matrix> blocks;
  bool normalized = false;  // sum of blocks is I

  /// Field on grid_positions(shape); with normalize the blocks are congruence
  /// scaled by (sum)^{-1/2} so they sum to I.
  static TensorField on_grid(std::vector<int> shape, std::vector<Matrix> blocks,
                             bool normalize = true);

  int sites() const { return static_cast<int>(blocks.size()); }
  int dim() const { return blocks.empty() ? 0 : static_cast<int>(blocks[0].rows()); }
  int spatial_dim() const { return static_cast<int>(shape.size()); }
  Matrix total() const;

  /// Checks shape, positions inside the domain, symmetric blocks and the
  /// normalization claim. Interpolated fields may hold empty (zero) cells, so
  /// `require_spd = false` only asks for PSD blocks.
  void validate(bool require_spd = true) const;
  BlockMarginal marginal() const;
};

/// C_ij = ||x_i - y_j||^2 I between the two fields' sites.
CostField field_cost(const TensorField& p, const TensorField& q);

/// Entropic coupling between two normalized fields under field_cost.
MwResult transport_fields(const TensorField& p, const TensorField& q, double epsilon,
                          const MwOptions& options = {});

enum class DisplacementMode {
  SymmetrizedProduct,  // mass {((1-t) P_i + t Q_j) Gamma_ij}_S per atom
  CouplingMass,        // mass Gamma_ij per atom
};

const char* to_string(DisplacementMode m);

struct DisplacementOptions {
  DisplacementMode mode = DisplacementMode::CouplingMass;
  /// SymmetrizedProduct only: replace each cell by the PSD square root of its
  /// accumulated mass, which turns {P_i^2}_S back into P_i at t = 0.
  bool renormalize = true;
};

/// Atoms at (1-t) x_i + t y_j deposited on the nearest cell of `shape`.
TensorField displacement_interpolate(const TensorField& p, const TensorField& q,
                                     const BlockMatrix& coupling, double t,
                                     const std::vector<int>& shape,
                                     const DisplacementOptions& options = {});

/// (1-t) P + t Q blockwise on p's grid.
TensorField linear_interpolate(const TensorField& p, const TensorField& q, double t);

/// Entropic barycenter of fields on the sites of `shape`.
TensorField field_barycenter(const std::vector<TensorField>& fields,
                             const std::vector<double>& weights, double epsilon,
                             const std::vector<int>& shape,
                             const BarycenterOptions& options = {});

enum class ProjectionMode { General, SpdLyapunov };

struct BarycentricProjection {
  std::vector<Matrix> projected;
  /// max_i ||P_i X_i - sum_j Gamma_ij Y_j||_F (general) or the symmetrized
  /// Lyapunov residual (spd).
  double residual = 0.0;
  /// Sources whose symmetrized estimate has a negative eigenvalue.
  std::vector<int> indefinite;
};

/// X_i = P_i^{-1} sum_j Gamma_ij Y_j, or in SPD mode the symmetric solution of
/// {P_i X_i}_S = {sum_j Gamma_ij Y_j}_S.
BarycentricProjection barycentric_project(const BlockMatrix& coupling, const BlockMarginal& p,
                                          const std::vector<Matrix>& targets,
                                          ProjectionMode mode);

/// S = X X^T / s for d x s samples X, plus 1e-8 I when S is rank deficient.
Matrix covariance_descriptor(const Matrix& samples);

struct LabeledCovarianceSet {
  std::vector<Matrix> descriptors;
  std::vector<int> labels;
  std::vector<double> weights;  // uniform when left empty by the builders

  int size() const { return static_cast<int>(descriptors.size()); }
  int dim() const { return descriptors.empty() ? 0 : static_cast<int>(descriptors[0].rows()); }
  void validate() const;
};

LabeledCovarianceSet make_covariance_set(const std::vector<Matrix>& samples,
                                         std::vector<int> labels);

struct AdaptationData {
  int classes = 2;
  int dim = 2;
  int samples = 5;       // columns per descriptor
  int source_size = 16;
  int target_size = 16;
  double skew = 0.5;     // share of one randomly chosen class in the source
  double shift = 0.4;    // strength of the target congruence A S A^T
};

/// Class-conditional Wishart descriptors; the target domain is a random
/// congruence of the source distribution with balanced classes.
std::pair<LabeledCovarianceSet, LabeledCovarianceSet> synthesize_adaptation(
    const AdaptationData& config, Rng& rng);

struct AdaptationConfig {
  MwOptions solve;
  double sinkhorn_tol = 1e-9;
  /// Read epsilon as a multiple of the median scalar cost tr(C_ij).
  bool relative_epsilon = false;
};

struct AdaptationResult {
  double epsilon = 0.0;  // effective value
  double accuracy = 0.0;
  std::vector<int> predictions;
  double baseline_accuracy = 0.0;  // scalar OT on tr(C_ij)
  std::vector<int> baseline_predictions;
  BarycentricProjection projection;
  SolveReport report;
};

/// Projects the source descriptors onto the target domain with the matrix
/// coupling (and with the scalar baseline), then labels every target sample
/// by its nearest projected source in Frobenius norm.
AdaptationResult adapt_and_classify(const LabeledCovarianceSet& source,
                                    const LabeledCovarianceSet& target, double epsilon,
                                    const AdaptationConfig& config = {});

}  // namespace bspdot
