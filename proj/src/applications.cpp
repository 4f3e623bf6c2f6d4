#include "bspdot/applications.hpp"

#include "bspdot/error.hpp"
#include "bspdot/parallel.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace bspdot {

namespace {

double axis_coordinate(int k, int len) { return len == 1 ? 0.5 : double(k) / (len - 1); }

int nearest_index(double coordinate, int len) {
  if (len == 1) return 0;
  const long k = std::lround(coordinate * (len - 1));
  return static_cast<int>(std::clamp<long>(k, 0, len - 1));
}

int cell_of(const Vector& x, const std::vector<int>& shape) {
  if (shape.size() == 1) return nearest_index(x(0), shape[0]);
  return nearest_index(x(1), shape[0]) * shape[1] + nearest_index(x(0), shape[1]);
}

int site_count(const std::vector<int>& shape) {
  if (shape.empty() || shape.size() > 2)
    fail(ErrorCode::InvalidInput, "grid shape must have one or two extents");
  int total = 1;
  for (int s : shape) {
    if (s < 1) fail(ErrorCode::InvalidInput, "grid extents must be >= 1");
    total *= s;
  }
  return total;
}

Matrix psd_sqrt(const Matrix& a) {
  const Eig e = sym_eig(a);
  const Vector root = e.values.cwiseMax(0.0).cwiseSqrt();
  return sym(e.vectors * root.asDiagonal() * e.vectors.transpose());
}

std::vector<int> nearest_labels(const std::vector<Matrix>& projected, const std::vector<int>& labels,
                                const std::vector<Matrix>& queries) {
  std::vector<int> out(queries.size());
  for (std::size_t j = 0; j < queries.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < projected.size(); ++i) {
      const double dist = (projected[i] - queries[j]).norm();
      if (dist < best) {
        best = dist;
        out[j] = labels[i];
      }
    }
  }
  return out;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  int hits = 0;
  for (std::size_t j = 0; j < truth.size(); ++j) hits += predicted[j] == truth[j] ? 1 : 0;
  return truth.empty() ? 0.0 : double(hits) / truth.size();
}

}  // namespace

std::vector<Vector> grid_positions(const std::vector<int>& shape) {
  site_count(shape);
  std::vector<Vector> out;
  if (shape.size() == 1) {
    for (int k = 0; k < shape[0]; ++k) out.push_back(Vector::Constant(1, axis_coordinate(k, shape[0])));
    return out;
  }
  for (int r = 0; r < shape[0]; ++r)
    for (int c = 0; c < shape[1]; ++c) {
      Vector x(2);
      x << axis_coordinate(c, shape[1]), axis_coordinate(r, shape[0]);
      out.push_back(x);
    }
  return out;
}

TensorField TensorField::on_grid(std::vector<int> shape, std::vector<Matrix> blocks,
                                 bool normalize) {
  TensorField f;
  f.positions = grid_positions(shape);
  f.shape = std::move(shape);
  f.blocks = std::move(blocks);
  if (f.blocks.size() != f.positions.size()) {
    std::ostringstream os;
    os << "tensor field: " << f.blocks.size() << " blocks for " << f.positions.size() << " sites";
    fail(ErrorCode::InvalidInput, os.str());
  }
  if (normalize) {
    const Matrix s = spd_fn(f.total(), MatFn::InvSqrt);
    for (auto& b : f.blocks) b = sym(s * b * s);
  }
  f.normalized = f.dim() > 0 && (f.total() - Matrix::Identity(f.dim(), f.dim())).norm() <= 1e-10;
  f.validate();
  return f;
}

Matrix TensorField::total() const {
  Matrix t = Matrix::Zero(dim(), dim());
  for (const auto& b : blocks) t += b;
  return t;
}

void TensorField::validate(bool require_spd) const {
  const int n = site_count(shape);
  if (sites() != n || static_cast<int>(positions.size()) != n) {
    std::ostringstream os;
    os << "tensor field: shape holds " << n << " sites but got " << positions.size()
       << " positions and " << sites() << " blocks";
    fail(ErrorCode::InvalidInput, os.str());
  }
  const int d = dim();
  if (d < 1) fail(ErrorCode::InvalidInput, "tensor field: empty blocks");
  for (int k = 0; k < n; ++k) {
    const auto& x = positions[static_cast<std::size_t>(k)];
    if (x.size() != spatial_dim() || !x.allFinite() || x.minCoeff() < 0.0 || x.maxCoeff() > 1.0) {
      std::ostringstream os;
      os << "tensor field: position " << k << " lies outside the unit domain";
      fail(ErrorCode::InvalidInput, os.str());
    }
    const Matrix& b = blocks[static_cast<std::size_t>(k)];
    if (b.rows() != d || b.cols() != d || !b.allFinite() ||
        (b - b.transpose()).norm() > 1e-12 * std::max(1.0, b.norm())) {
      std::ostringstream os;
      os << "tensor field: block " << k << " is not a finite symmetric " << d << "x" << d
         << " matrix";
      fail(ErrorCode::InvalidInput, os.str());
    }
    const bool ok = require_spd ? is_spd(b) : sym_eig(b).values(0) >= -1e-12 * std::max(1.0, b.norm());
    if (!ok) {
      std::ostringstream os;
      os << "tensor field: block " << k << " is not " << (require_spd ? "SPD" : "PSD");
      fail(require_spd ? ErrorCode::NotPositiveDefinite : ErrorCode::InvalidInput, os.str());
    }
  }
  if (normalized && (total() - Matrix::Identity(d, d)).norm() > 1e-10)
    fail(ErrorCode::InvalidInput, "tensor field: flagged normalized but blocks do not sum to I");
}

BlockMarginal TensorField::marginal() const {
  validate();
  if (!normalized) fail(ErrorCode::InvalidInput, "tensor field: marginal needs a normalized field");
  return BlockMarginal(blocks);
}

CostField field_cost(const TensorField& p, const TensorField& q) {
  if (p.spatial_dim() != q.spatial_dim() || p.dim() != q.dim())
    fail(ErrorCode::InvalidInput, "field_cost: fields differ in domain or block size");
  return cost_grid_sq_euclidean(p.positions, q.positions, p.dim());
}

MwResult transport_fields(const TensorField& p, const TensorField& q, double epsilon,
                          const MwOptions& options) {
  const RegularizedProblem problem{field_cost(p, q), epsilon, Regularizer::QuantumEntropy};
  return solve_mw(p.marginal(), q.marginal(), problem, options);
}

const char* to_string(DisplacementMode m) {
  switch (m) {
    case DisplacementMode::SymmetrizedProduct: return "symmetrized_product";
    case DisplacementMode::CouplingMass: return "coupling_mass";
  }
  return "unknown";
}

TensorField displacement_interpolate(const TensorField& p, const TensorField& q,
                                     const BlockMatrix& coupling, double t,
                                     const std::vector<int>& shape,
                                     const DisplacementOptions& options) {
  p.validate();
  q.validate();
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::InvalidInput, "displacement_interpolate: t must lie in [0, 1]");
  const int d = p.dim();
  if (coupling.rows() != p.sites() || coupling.cols() != q.sites() || coupling.dim() != d ||
      q.dim() != d)
    fail(ErrorCode::InvalidInput, "displacement_interpolate: coupling does not match the fields");
  if (p.spatial_dim() != q.spatial_dim() || static_cast<int>(shape.size()) != p.spatial_dim())
    fail(ErrorCode::InvalidInput, "displacement_interpolate: output grid has the wrong dimension");

  TensorField out;
  out.shape = shape;
  out.positions = grid_positions(shape);
  out.blocks.assign(out.positions.size(), Matrix::Zero(d, d));
  for (int i = 0; i < p.sites(); ++i)
    for (int j = 0; j < q.sites(); ++j) {
      const Vector x = (1.0 - t) * p.positions[static_cast<std::size_t>(i)] +
                       t * q.positions[static_cast<std::size_t>(j)];
      Matrix mass = coupling(i, j);
      if (options.mode == DisplacementMode::SymmetrizedProduct)
        mass = sym(((1.0 - t) * p.blocks[static_cast<std::size_t>(i)] +
                    t * q.blocks[static_cast<std::size_t>(j)]) * coupling(i, j));
      out.blocks[static_cast<std::size_t>(cell_of(x, shape))] += mass;
    }
  if (options.mode == DisplacementMode::SymmetrizedProduct && options.renormalize)
    for (auto& b : out.blocks) b = psd_sqrt(b);
  out.normalized = (out.total() - Matrix::Identity(d, d)).norm() <= 1e-10;
  return out;
}

TensorField linear_interpolate(const TensorField& p, const TensorField& q, double t) {
  p.validate();
  q.validate();
  if (!(t >= 0.0 && t <= 1.0)) fail(ErrorCode::InvalidInput, "linear_interpolate: t must lie in [0, 1]");
  if (p.shape != q.shape || p.dim() != q.dim())
    fail(ErrorCode::InvalidInput, "linear_interpolate: fields live on different grids");
  TensorField out = p;
  for (int k = 0; k < p.sites(); ++k)
    out.blocks[static_cast<std::size_t>(k)] =
        (1.0 - t) * p.blocks[static_cast<std::size_t>(k)] + t * q.blocks[static_cast<std::size_t>(k)];
  out.normalized = p.normalized && q.normalized;
  return out;
}

TensorField field_barycenter(const std::vector<TensorField>& fields,
                             const std::vector<double>& weights, double epsilon,
                             const std::vector<int>& shape, const BarycenterOptions& options) {
  if (fields.empty()) fail(ErrorCode::InvalidInput, "field_barycenter: no input fields");
  TensorField out;
  out.shape = shape;
  out.positions = grid_positions(shape);
  const int d = fields[0].dim();
  BarycenterProblem problem;
  problem.support = static_cast<int>(out.positions.size());
  problem.epsilon = epsilon;
  problem.weights = weights;
  for (const auto& f : fields) {
    if (f.spatial_dim() != static_cast<int>(shape.size()))
      fail(ErrorCode::InvalidInput, "field_barycenter: fields and output grid differ in dimension");
    problem.inputs.push_back(f.marginal().as_column());
    problem.costs.push_back(cost_grid_sq_euclidean(out.positions, f.positions, d));
  }
  const auto r = solve_barycenter(problem, options);
  for (int i = 0; i < problem.support; ++i) out.blocks.push_back(r.barycenter(i, 0));
  out.normalized = (out.total() - Matrix::Identity(d, d)).norm() <= 1e-10;
  return out;
}

BarycentricProjection barycentric_project(const BlockMatrix& coupling, const BlockMarginal& p,
                                          const std::vector<Matrix>& targets,
                                          ProjectionMode mode) {
  const int m = coupling.rows();
  const int n = coupling.cols();
  const int d = coupling.dim();
  if (p.size() != m || p.dim() != d || static_cast<int>(targets.size()) != n)
    fail(ErrorCode::InvalidInput, "barycentric_project: coupling, marginal and targets disagree");
  for (const auto& y : targets) {
    if (y.rows() != d || !y.allFinite())
      fail(ErrorCode::InvalidInput, "barycentric_project: targets must be finite with d rows");
    if (mode == ProjectionMode::SpdLyapunov &&
        (y.cols() != d || (y - y.transpose()).norm() > 1e-12 * std::max(1.0, y.norm())))
      fail(ErrorCode::InvalidInput, "barycentric_project: SPD mode needs symmetric d x d targets");
  }
  for (int i = 0; i < m; ++i)
    if ((coupling.row_sum(i) - p[i]).norm() > 1e-8 * (1.0 + p[i].norm()))
      fail(ErrorCode::InvalidInput, "barycentric_project: coupling rows do not sum to the marginal");

  BarycentricProjection out;
  out.projected.resize(static_cast<std::size_t>(m));
  std::vector<double> residuals(static_cast<std::size_t>(m), 0.0);
  std::vector<char> negative(static_cast<std::size_t>(m), 0);
  parallel_for(static_cast<std::size_t>(m), [&](std::size_t ii) {
    const int i = static_cast<int>(ii);
    Matrix b = Matrix::Zero(d, targets[0].cols());
    for (int j = 0; j < n; ++j) b += coupling(i, j) * targets[static_cast<std::size_t>(j)];
    if (mode == ProjectionMode::General) {
      const Matrix x = Eigen::LLT<Matrix>(p[i]).solve(b);
      residuals[ii] = (p[i] * x - b).norm();
      out.projected[ii] = x;
    } else {
      const Matrix rhs = sym(b);
      const Matrix x = lyapunov_solve(p[i], rhs);
      residuals[ii] = (sym(p[i] * x) - rhs).norm();
      negative[ii] = sym_eig(x).values(0) < 0.0 ? 1 : 0;
      out.projected[ii] = x;
    }
  });
  out.residual = *std::max_element(residuals.begin(), residuals.end());
  for (int i = 0; i < m; ++i)
    if (negative[static_cast<std::size_t>(i)]) out.indefinite.push_back(i);
  return out;
}

Matrix covariance_descriptor(const Matrix& samples) {
  if (samples.rows() < 1 || samples.cols() < 1 || !samples.allFinite())
    fail(ErrorCode::InvalidInput, "covariance_descriptor: samples must be a finite d x s matrix");
  Matrix s = sym(samples * samples.transpose() / double(samples.cols()));
  const Vector ev = sym_eig(s).values;
  if (ev(0) <= 1e-12 * std::max(ev(ev.size() - 1), 1e-300))
    s += 1e-8 * Matrix::Identity(s.rows(), s.cols());
  return s;
}

void LabeledCovarianceSet::validate() const {
  if (descriptors.empty()) fail(ErrorCode::InvalidInput, "covariance set: no descriptors");
  if (labels.size() != descriptors.size() || weights.size() != descriptors.size())
    fail(ErrorCode::InvalidInput, "covariance set: descriptors, labels and weights differ in length");
  const int d = dim();
  double total = 0.0;
  for (std::size_t k = 0; k < descriptors.size(); ++k) {
    const Matrix& s = descriptors[k];
    if (s.rows() != d || s.cols() != d || (s - s.transpose()).norm() > 1e-12 * std::max(1.0, s.norm()) ||
        !is_spd(s)) {
      std::ostringstream os;
      os << "covariance set: descriptor " << k << " is not SPD " << d << "x" << d;
      fail(ErrorCode::NotPositiveDefinite, os.str());
    }
    if (!(weights[k] > 0.0) || !std::isfinite(weights[k]))
      fail(ErrorCode::InvalidInput, "covariance set: weights must be positive");
    total += weights[k];
  }
  if (std::abs(total - 1.0) > 1e-12) fail(ErrorCode::InvalidInput, "covariance set: weights must sum to 1");
}

LabeledCovarianceSet make_covariance_set(const std::vector<Matrix>& samples,
                                         std::vector<int> labels) {
  LabeledCovarianceSet set;
  for (const auto& x : samples) set.descriptors.push_back(covariance_descriptor(x));
  set.labels = std::move(labels);
  set.weights.assign(samples.size(), samples.empty() ? 0.0 : 1.0 / samples.size());
  set.validate();
  return set;
}

std::pair<LabeledCovarianceSet, LabeledCovarianceSet> synthesize_adaptation(
    const AdaptationData& config, Rng& rng) {
  if (config.classes < 1 || config.dim < 1 || config.samples < 1 || config.source_size < 1 ||
      config.target_size < config.classes || !(config.skew > 0.0 && config.skew <= 1.0))
    fail(ErrorCode::InvalidInput, "synthesize_adaptation: invalid configuration");
  const int d = config.dim;
  std::vector<Matrix> factors;
  for (int c = 0; c < config.classes; ++c)
    factors.push_back(Eigen::LLT<Matrix>(rng.spd(d, 0.2)).matrixL());
  const Matrix shift = spd_fn(Matrix(config.shift * rng.symmetric(d)), MatFn::Exp);

  auto draw = [&](const std::vector<int>& counts, bool shifted) {
    std::vector<Matrix> samples;
    std::vector<int> labels;
    for (int c = 0; c < config.classes; ++c)
      for (int k = 0; k < counts[static_cast<std::size_t>(c)]; ++k) {
        Matrix x = factors[static_cast<std::size_t>(c)] * rng.gaussian(d, config.samples);
        if (shifted) x = shift * x;
        samples.push_back(std::move(x));
        labels.push_back(c);
      }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t k = order.size(); k > 1; --k)
      std::swap(order[k - 1], order[static_cast<std::size_t>(rng.index(static_cast<int>(k)))]);
    std::vector<Matrix> s2;
    std::vector<int> l2;
    for (auto k : order) {
      s2.push_back(samples[k]);
      l2.push_back(labels[k]);
    }
    return make_covariance_set(s2, std::move(l2));
  };

  auto split = [&](int total, int favoured, double share) {
    std::vector<int> counts(static_cast<std::size_t>(config.classes), 0);
    if (config.classes == 1) {
      counts[0] = total;
      return counts;
    }
    const int big = favoured < 0 ? total / config.classes
                                 : static_cast<int>(std::lround(share * total));
    int rest = total;
    if (favoured >= 0) {
      counts[static_cast<std::size_t>(favoured)] = big;
      rest -= big;
    }
    const int others = favoured >= 0 ? config.classes - 1 : config.classes;
    int slot = 0;
    for (int c = 0; c < config.classes; ++c) {
      if (c == favoured) continue;
      counts[static_cast<std::size_t>(c)] = rest / others + (slot < rest % others ? 1 : 0);
      ++slot;
    }
    return counts;
  };

  const int favoured = rng.index(config.classes);
  auto source = draw(split(config.source_size, favoured, config.skew), false);
  auto target = draw(split(config.target_size, -1, 0.0), true);
  return {std::move(source), std::move(target)};
}

AdaptationResult adapt_and_classify(const LabeledCovarianceSet& source,
                                    const LabeledCovarianceSet& target, double epsilon,
                                    const AdaptationConfig& config) {
  source.validate();
  target.validate();
  if (source.dim() != target.dim())
    fail(ErrorCode::InvalidInput, "adapt_and_classify: source and target differ in dimension");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidInput, "adapt_and_classify: epsilon must be > 0");
  const int d = source.dim();
  const CostField cost = cost_outer_difference(source.descriptors, target.descriptors);
  const BlockMarginal p = BlockMarginal::lifted(source.weights, d);
  const BlockMarginal q = BlockMarginal::lifted(target.weights, d);

  const Matrix traces = cost.traces();
  AdaptationResult out;
  out.epsilon = epsilon;
  if (config.relative_epsilon) {
    std::vector<double> v(traces.data(), traces.data() + traces.size());
    std::nth_element(v.begin(), v.begin() + v.size() / 2, v.end());
    out.epsilon = epsilon * v[v.size() / 2];
    if (!(out.epsilon > 0.0))
      fail(ErrorCode::InvalidInput, "adapt_and_classify: median cost is zero, use an absolute epsilon");
  }
  const auto solved =
      solve_mw(p, q, {cost, out.epsilon, Regularizer::QuantumEntropy}, config.solve);
  out.report = solved.report;
  out.projection =
      barycentric_project(solved.coupling, p, target.descriptors, ProjectionMode::SpdLyapunov);
  out.predictions = nearest_labels(out.projection.projected, source.labels, target.descriptors);
  out.accuracy = accuracy(out.predictions, target.labels);

  const Matrix gamma =
      scalar_sinkhorn(source.weights, target.weights, traces, out.epsilon, config.sinkhorn_tol);
  std::vector<Matrix> baseline(static_cast<std::size_t>(source.size()), Matrix::Zero(d, d));
  for (int i = 0; i < source.size(); ++i) {
    for (int j = 0; j < target.size(); ++j)
      baseline[static_cast<std::size_t>(i)] += gamma(i, j) * target.descriptors[static_cast<std::size_t>(j)];
    baseline[static_cast<std::size_t>(i)] /= source.weights[static_cast<std::size_t>(i)];
  }
  out.baseline_predictions = nearest_labels(baseline, source.labels, target.descriptors);
  out.baseline_accuracy = accuracy(out.baseline_predictions, target.labels);
  return out;
}

}  // namespace bspdot
