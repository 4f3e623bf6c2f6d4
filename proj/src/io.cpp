#include "bspdot/io.hpp"

#include "bspdot/error.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

namespace bspdot::io {

namespace {

[[noreturn]] void invalid(const std::string& what) { fail(ErrorCode::InvalidInput, what); }

const Json& member(const Json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) invalid(where + ": missing \"" + key + "\"");
  return j.at(key);
}

double number(const Json& j, const std::string& where) {
  if (!j.is_number()) invalid(where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) invalid(where + ": value is not finite");
  return v;
}

int integer(const Json& j, const std::string& where) {
  if (!j.is_number_integer()) invalid(where + ": expected an integer");
  return j.get<int>();
}

double number_or(const Json& j, const char* key, double fallback, const std::string& where) {
  return j.contains(key) ? number(j.at(key), where + "." + key) : fallback;
}

int integer_or(const Json& j, const char* key, int fallback, const std::string& where) {
  return j.contains(key) ? integer(j.at(key), where + "." + key) : fallback;
}

bool flag_or(const Json& j, const char* key, bool fallback, const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) invalid(where + "." + key + ": expected true or false");
  return j.at(key).get<bool>();
}

std::string text_or(const Json& j, const char* key, const std::string& fallback,
                    const std::string& where) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) invalid(where + "." + key + ": expected a string");
  return j.at(key).get<std::string>();
}

std::vector<double> numbers(const Json& j, const std::string& where) {
  if (!j.is_array()) invalid(where + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t k = 0; k < j.size(); ++k) out.push_back(number(j[k], where));
  return out;
}

Matrix nested_matrix(const Json& j, const std::string& where) {
  if (!j.is_array() || j.empty() || !j[0].is_array()) invalid(where + ": expected nested rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = static_cast<Eigen::Index>(j[0].size());
  Matrix a(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto row = numbers(j[static_cast<std::size_t>(r)], where);
    if (static_cast<Eigen::Index>(row.size()) != cols) invalid(where + ": ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) a(r, c) = row[static_cast<std::size_t>(c)];
  }
  return a;
}

Json nested_json(const Matrix& a) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < a.cols(); ++c) row.push_back(a(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<Vector> points(const Json& j, const std::string& where) {
  if (!j.is_array()) invalid(where + ": expected a list of points");
  std::vector<Vector> out;
  for (std::size_t k = 0; k < j.size(); ++k) {
    const auto v = numbers(j[k], where);
    out.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return out;
}

template <class E>
E enum_from(const std::string& name, std::initializer_list<E> values, const std::string& where) {
  for (E v : values)
    if (name == to_string(v)) return v;
  invalid(where + ": unknown value \"" + name + "\"");
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

const Json& dims_of(const ProblemFile& p) { return member(p.doc, "dims", "problem"); }

int dim_value(const ProblemFile& p, const char* key) {
  return integer(member(dims_of(p), key, "problem.dims"), std::string("problem.dims.") + key);
}

struct MwSetup {
  BlockMarginal p;
  BlockMarginal q;
  RegularizedProblem problem;
  MwOptions options;
};

const Json& section(const Json& doc, const char* key) {
  static const Json empty = Json::object();
  if (!doc.contains(key)) return empty;
  if (!doc.at(key).is_object()) invalid(std::string("problem.") + key + ": expected an object");
  return doc.at(key);
}

MwOptions mw_options(const Json& doc, const char* solver_key = "solver") {
  MwOptions o;
  o.solver = solver_from_json(section(doc, solver_key));
  o.balance = balance_from_json(section(doc, "balance"));
  o.continuation = flag_or(doc, "continuation", false, "problem");
  o.continuation_start = number_or(doc, "continuation_start", 0.1, "problem");
  return o;
}

Json mw_options_json(const MwOptions& o) {
  return {{"solver", solver_to_json(o.solver)},
          {"balance", balance_to_json(o.balance)},
          {"continuation", o.continuation},
          {"continuation_start", o.continuation_start}};
}

MwSetup mw_setup(const ProblemFile& pf) {
  const int m = dim_value(pf, "m");
  const int n = dim_value(pf, "n");
  const int d = dim_value(pf, "d");
  const Json& marg = member(pf.doc, "marginals", "problem");
  MwSetup s;
  s.p = marginal_from_json(member(marg, "p", "problem.marginals"), d, "problem.marginals.p");
  s.q = marginal_from_json(member(marg, "q", "problem.marginals"), d, "problem.marginals.q");
  if (s.p.size() != m || s.q.size() != n)
    invalid("problem.marginals: sizes do not match dims m, n");
  const auto reg = enum_from(text_or(pf.doc, "regularizer", "quantum_entropy", "problem"),
                             {Regularizer::None, Regularizer::QuantumEntropy,
                              Regularizer::SquaredFrobenius},
                             "problem.regularizer");
  const double eps = number(member(pf.doc, "epsilon", "problem"), "problem.epsilon");
  s.problem = {cost_from_json(member(pf.doc, "cost", "problem"), m, n, d), eps, reg};
  s.options = mw_options(pf.doc);
  return s;
}

Json metadata(const ProblemFile& pf, Json effective, const RunOptions& options) {
  Json meta = {{"tool", "bspdot"},
               {"tool_version", tool_version()},
               {"format_version", kFormatVersion},
               {"problem_kind", pf.kind},
               {"seed", pf.seed},
               {"config", std::move(effective)}};
  if (options.timestamps) meta["timestamp"] = utc_timestamp();
  return meta;
}

Json effective_config(const ProblemFile& pf, const Json& overrides) {
  Json cfg = pf.doc;
  for (auto it = overrides.begin(); it != overrides.end(); ++it) cfg[it.key()] = it.value();
  return cfg;
}

bool converged(const SolveReport& r) { return r.reason == Termination::Converged; }

std::string describe(const SolveReport& r, double objective) {
  std::ostringstream os;
  os.precision(10);
  os << to_string(r.reason) << " after " << r.iterations << " iterations, objective "
     << objective << ", constraint residual " << r.constraint_residual;
  return os.str();
}

RunOutput run_mw(const ProblemFile& pf, const RunOptions& options) {
  const MwSetup s = mw_setup(pf);
  const auto r = solve_mw(s.p, s.q, s.problem, s.options);
  RunOutput out;
  out.converged = converged(r.report);
  out.summary = describe(r.report, r.value);
  ResultFile& res = out.result;
  res.kind = "mw_result";
  res.objective = r.value;
  res.coupling = r.coupling;
  res.report = report_to_json(r.report, options.timestamps);
  res.payload = {{"transport_cost", r.transport_cost},
                 {"epsilon_path", r.epsilon_path},
                 {"constraint_gap", constraint_gap(r.coupling, s.p, s.q)}};
  if (pf.doc.contains("reference")) {
    const double ref = number(member(pf.doc.at("reference"), "transport_cost", "problem.reference"),
                              "problem.reference.transport_cost");
    res.payload["reference_transport_cost"] = ref;
    res.payload["reference_relative_deviation"] = std::abs(r.transport_cost - ref) / std::abs(ref);
  }
  Json eff = mw_options_json(s.options);
  eff["epsilon"] = s.problem.epsilon;
  eff["regularizer"] = to_string(s.problem.regularizer);
  res.metadata = metadata(pf, effective_config(pf, eff), options);
  return out;
}

RunOutput run_barycenter_file(const ProblemFile& pf, const RunOptions& options) {
  const int n = dim_value(pf, "n");
  const int d = dim_value(pf, "d");
  BarycenterProblem problem;
  problem.support = n;
  problem.epsilon = number(member(pf.doc, "epsilon", "problem"), "problem.epsilon");
  problem.weights = numbers(member(pf.doc, "weights", "problem"), "problem.weights");
  const Json& inputs = member(pf.doc, "inputs", "problem");
  if (!inputs.is_array() || inputs.empty()) invalid("problem.inputs: expected a non-empty array");
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    const std::string where = "problem.inputs[" + std::to_string(l) + "]";
    const auto marg = marginal_from_json(member(inputs[l], "marginal", where), d, where + ".marginal");
    problem.inputs.push_back(marg.as_column());
    problem.costs.push_back(cost_from_json(member(inputs[l], "cost", where), n, marg.size(), d));
  }
  BarycenterOptions opts;
  opts.outer = solver_from_json(section(pf.doc, "solver"));
  opts.inner = mw_options(pf.doc, "inner_solver");
  opts.inner_tol_floor = number_or(pf.doc, "inner_tol_floor", opts.inner_tol_floor, "problem");
  opts.inner_tol_ratio = number_or(pf.doc, "inner_tol_ratio", opts.inner_tol_ratio, "problem");
  opts.fixed_step = number_or(pf.doc, "fixed_step", 0.0, "problem");
  if (pf.doc.contains("initial"))
    opts.initial = marginal_from_json(pf.doc.at("initial"), d, "problem.initial").as_column();

  const auto r = solve_barycenter(problem, opts);
  RunOutput out;
  out.converged = converged(r.report);
  const double value = r.report.objective.empty() ? 0.0 : r.report.objective.back();
  out.summary = describe(r.report, value);
  ResultFile& res = out.result;
  res.kind = "barycenter_result";
  res.objective = value;
  res.report = report_to_json(r.report, options.timestamps);
  std::vector<Matrix> blocks;
  for (int i = 0; i < n; ++i) blocks.push_back(r.barycenter(i, 0));
  Json couplings = Json::array();
  for (const auto& c : r.couplings) couplings.push_back(blocks_to_json(c));
  res.payload = {{"barycenter", {{"blocks", Json::array()}}}, {"couplings", couplings}};
  for (const auto& b : blocks) res.payload["barycenter"]["blocks"].push_back(matrix_to_json(b));
  Json eff = {{"solver", solver_to_json(opts.outer)},
              {"inner_solver", solver_to_json(opts.inner.solver)},
              {"balance", balance_to_json(opts.inner.balance)},
              {"inner_tol_floor", opts.inner_tol_floor},
              {"inner_tol_ratio", opts.inner_tol_ratio},
              {"fixed_step", opts.fixed_step}};
  res.metadata = metadata(pf, effective_config(pf, eff), options);
  return out;
}

RunOutput run_gw_file(const ProblemFile& pf, const RunOptions& options) {
  const int n = dim_value(pf, "n");
  const int d = dim_value(pf, "d");
  const GwLoss loss{enum_from(text_or(pf.doc, "loss", "squared", "problem"),
                              {GwLossKind::Squared, GwLossKind::Kl}, "problem.loss")};
  const Json& inputs = member(pf.doc, "inputs", "problem");
  if (!inputs.is_array() || inputs.empty()) invalid("problem.inputs: expected a non-empty array");
  std::vector<GwInput> gw_inputs;
  for (std::size_t l = 0; l < inputs.size(); ++l) {
    const std::string where = "problem.inputs[" + std::to_string(l) + "]";
    DistanceMatrix dm(nested_matrix(member(inputs[l], "distances", where), where + ".distances"));
    auto marg = marginal_from_json(member(inputs[l], "marginal", where), d, where + ".marginal");
    if (marg.size() != dm.size()) invalid(where + ": marginal and distance sizes differ");
    gw_inputs.push_back({std::move(dm), std::move(marg)});
  }
  const auto weights = numbers(member(pf.doc, "weights", "problem"), "problem.weights");
  const BlockMarginal pbar = marginal_from_json(member(pf.doc, "pbar", "problem"), d, "problem.pbar");
  if (pbar.size() != n) invalid("problem.pbar: size does not match dims.n");
  GwAverageOptions opts;
  opts.sweeps = integer_or(pf.doc, "sweeps", opts.sweeps, "problem");
  opts.solver = solver_from_json(section(pf.doc, "solver"));
  opts.balance = balance_from_json(section(pf.doc, "balance"));
  opts.clip_negative = flag_or(pf.doc, "clip_negative", opts.clip_negative, "problem");

  const auto r = gw_average_distance(gw_inputs, pbar, weights, loss, opts);
  RunOutput out;
  ResultFile& res = out.result;
  res.kind = "gw_result";
  res.objective = r.objective_trace.empty() ? 0.0 : r.objective_trace.back();
  res.report = {{"objective", r.objective_trace}, {"inner_iterations", r.inner_iterations}};
  Json couplings = Json::array();
  for (const auto& c : r.couplings) couplings.push_back(blocks_to_json(c));
  res.payload = {{"average", nested_json(r.average.values())},
                 {"clipped", r.clipped},
                 {"couplings", couplings}};
  if (options.mds_dim > 0) {
    const auto mds = classical_mds(r.average, options.mds_dim);
    res.payload["points"] = nested_json(mds.points);
    res.payload["stress"] = mds.stress;
  }
  std::ostringstream os;
  os.precision(10);
  os << opts.sweeps << " sweeps, objective " << res.objective
     << (r.clipped ? ", negative entries clipped" : "");
  out.summary = os.str();
  Json eff = {{"solver", solver_to_json(opts.solver)},
              {"balance", balance_to_json(opts.balance)},
              {"sweeps", opts.sweeps},
              {"clip_negative", opts.clip_negative},
              {"loss", to_string(loss.kind)},
              {"mds", options.mds_dim}};
  res.metadata = metadata(pf, effective_config(pf, eff), options);
  return out;
}

RunOutput run_interpolate_file(const ProblemFile& pf, const RunOptions& options) {
  const TensorField p = field_from_json(member(pf.doc, "source", "problem"));
  const TensorField q = field_from_json(member(pf.doc, "target", "problem"));
  const double eps = number(member(pf.doc, "epsilon", "problem"), "problem.epsilon");
  std::vector<int> shape = p.shape;
  if (pf.doc.contains("output_shape")) {
    shape.clear();
    for (double v : numbers(pf.doc.at("output_shape"), "problem.output_shape"))
      shape.push_back(static_cast<int>(v));
  }
  DisplacementOptions dopts;
  dopts.mode = enum_from(text_or(pf.doc, "mode", to_string(dopts.mode), "problem"),
                         {DisplacementMode::SymmetrizedProduct, DisplacementMode::CouplingMass},
                         "problem.mode");
  dopts.renormalize = flag_or(pf.doc, "renormalize", dopts.renormalize, "problem");
  const MwOptions mopts = mw_options(pf.doc);
  const auto r = transport_fields(p, q, eps, mopts);

  RunOutput out;
  out.converged = converged(r.report);
  out.summary = describe(r.report, r.value);
  ResultFile& res = out.result;
  res.kind = "interpolate_result";
  res.objective = r.value;
  res.coupling = r.coupling;
  res.report = report_to_json(r.report, options.timestamps);
  res.payload = {{"times", options.times},
                 {"mode", to_string(dopts.mode)},
                 {"transport_cost", r.transport_cost},
                 {"files", Json::array()}};
  for (double t : options.times) {
    const std::string tag = short_number(t);
    const TensorField f = displacement_interpolate(p, q, r.coupling, t, shape, dopts);
    Json doc = field_to_json(f);
    doc["t"] = t;
    doc["method"] = std::string("displacement_") + to_string(dopts.mode);
    out.artifacts.emplace_back("displacement_t" + tag + ".json", dump(doc));
    res.payload["files"].push_back(out.artifacts.back().first);
    if (options.baseline) {
      Json lin = field_to_json(linear_interpolate(p, q, t));
      lin["t"] = t;
      lin["method"] = "linear";
      out.artifacts.emplace_back("linear_t" + tag + ".json", dump(lin));
      res.payload["files"].push_back(out.artifacts.back().first);
    }
  }
  Json eff = mw_options_json(mopts);
  eff["epsilon"] = eps;
  eff["mode"] = to_string(dopts.mode);
  eff["renormalize"] = dopts.renormalize;
  eff["output_shape"] = shape;
  eff["times"] = options.times;
  eff["baseline"] = options.baseline;
  res.metadata = metadata(pf, effective_config(pf, eff), options);
  return out;
}

struct AdaptSetup {
  AdaptationData data;
  AdaptationConfig config;
  double epsilon = 0.05;
  int trials = 1;
};

AdaptSetup adapt_setup(const ProblemFile& pf) {
  AdaptSetup s;
  const Json& d = section(pf.doc, "data");
  s.data.classes = integer_or(d, "classes", s.data.classes, "problem.data");
  s.data.dim = integer_or(d, "dim", s.data.dim, "problem.data");
  s.data.samples = integer_or(d, "samples", s.data.samples, "problem.data");
  s.data.source_size = integer_or(d, "source_size", s.data.source_size, "problem.data");
  s.data.target_size = integer_or(d, "target_size", s.data.target_size, "problem.data");
  s.data.skew = number_or(d, "skew", s.data.skew, "problem.data");
  s.data.shift = number_or(d, "shift", s.data.shift, "problem.data");
  s.config.solve = mw_options(pf.doc);
  s.config.relative_epsilon = flag_or(pf.doc, "relative_epsilon", true, "problem");
  s.config.sinkhorn_tol = number_or(pf.doc, "sinkhorn_tol", s.config.sinkhorn_tol, "problem");
  s.epsilon = number(member(pf.doc, "epsilon", "problem"), "problem.epsilon");
  s.trials = integer_or(pf.doc, "trials", 1, "problem");
  if (s.trials < 1) invalid("problem.trials: must be >= 1");
  return s;
}

RunOutput run_adapt_file(const ProblemFile& pf, const RunOptions& options) {
  const AdaptSetup s = adapt_setup(pf);
  RunOutput out;
  ResultFile& res = out.result;
  res.kind = "adapt_result";
  res.payload = {{"trials", Json::array()}};
  double rmot = 0.0;
  double sot = 0.0;
  for (int k = 0; k < s.trials; ++k) {
    Rng rng(pf.seed + static_cast<std::uint64_t>(k));
    const auto [source, target] = synthesize_adaptation(s.data, rng);
    const auto r = adapt_and_classify(source, target, s.epsilon, s.config);
    out.converged = out.converged && converged(r.report);
    rmot += r.accuracy / s.trials;
    sot += r.baseline_accuracy / s.trials;
    res.payload["trials"].push_back({{"seed", pf.seed + static_cast<std::uint64_t>(k)},
                                     {"epsilon", r.epsilon},
                                     {"rmot_accuracy", r.accuracy},
                                     {"sot_accuracy", r.baseline_accuracy},
                                     {"predictions", r.predictions},
                                     {"baseline_predictions", r.baseline_predictions},
                                     {"termination", to_string(r.report.reason)}});
  }
  res.objective = rmot;
  res.payload["mean_rmot_accuracy"] = rmot;
  res.payload["mean_sot_accuracy"] = sot;
  res.report = Json::object();
  std::ostringstream os;
  os << "mean accuracy RMOT " << rmot << ", scalar OT " << sot << " over " << s.trials << " trials";
  out.summary = os.str();
  Json eff = mw_options_json(s.config.solve);
  eff["relative_epsilon"] = s.config.relative_epsilon;
  eff["sinkhorn_tol"] = s.config.sinkhorn_tol;
  eff["trials"] = s.trials;
  eff["data"] = {{"classes", s.data.classes}, {"dim", s.data.dim}, {"samples", s.data.samples},
                 {"source_size", s.data.source_size}, {"target_size", s.data.target_size},
                 {"skew", s.data.skew}, {"shift", s.data.shift}};
  res.metadata = metadata(pf, effective_config(pf, eff), options);
  return out;
}

}  // namespace

const char* tool_version() { return "0.1.0"; }

std::string dump(const Json& doc) { return doc.dump(2) + "\n"; }

Json parse(const std::string& text, const std::string& where) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    invalid(where + ": malformed JSON (" + e.what() + ")");
  }
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) invalid("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path);
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) invalid("cannot write " + path);
  out << text;
  if (!out) invalid("write failed for " + path);
}

Json matrix_to_json(const Matrix& a) {
  Json flat = Json::array();
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c) flat.push_back(a(r, c));
  return flat;
}

Matrix matrix_from_json(const Json& j, int rows, int cols, const std::string& where) {
  const auto v = numbers(j, where);
  if (static_cast<int>(v.size()) != rows * cols) {
    std::ostringstream os;
    os << where << ": expected " << rows * cols << " entries, got " << v.size();
    invalid(os.str());
  }
  Matrix a(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) a(r, c) = v[static_cast<std::size_t>(r * cols + c)];
  return a;
}

Matrix symmetric_from_json(const Json& j, int d, const std::string& where) {
  Matrix a = matrix_from_json(j, d, d, where);
  if ((a - a.transpose()).norm() > 1e-12 * std::max(1.0, a.norm()))
    invalid(where + ": matrix is not symmetric");
  return sym(a);
}

Json blocks_to_json(const BlockMatrix& b) {
  Json blocks = Json::array();
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) blocks.push_back(matrix_to_json(b(i, j)));
  return {{"m", b.rows()}, {"n", b.cols()}, {"d", b.dim()}, {"blocks", blocks}};
}

BlockMatrix blocks_from_json(const Json& j, const std::string& where) {
  const int m = integer(member(j, "m", where), where + ".m");
  const int n = integer(member(j, "n", where), where + ".n");
  const int d = integer(member(j, "d", where), where + ".d");
  if (m < 1 || n < 1 || d < 1) invalid(where + ": dims must be >= 1");
  const Json& blocks = member(j, "blocks", where);
  if (!blocks.is_array() || static_cast<int>(blocks.size()) != m * n)
    invalid(where + ".blocks: expected m * n blocks");
  BlockMatrix out(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int k = 0; k < n; ++k)
      out(i, k) = symmetric_from_json(blocks[static_cast<std::size_t>(i * n + k)], d,
                                      where + ".blocks");
  return out;
}

Json marginal_to_json(const BlockMarginal& p) {
  Json blocks = Json::array();
  for (int i = 0; i < p.size(); ++i) blocks.push_back(matrix_to_json(p[i]));
  return {{"blocks", blocks}};
}

BlockMarginal marginal_from_json(const Json& j, int d, const std::string& where) {
  if (j.is_object() && j.contains("lifted")) {
    const auto w = numbers(j.at("lifted"), where + ".lifted");
    if (w.empty()) invalid(where + ".lifted: no weights");
    double total = 0.0;
    for (double x : w) total += x;
    if (std::abs(total - 1.0) > 1e-10) invalid(where + ".lifted: weights must sum to 1");
    return BlockMarginal::lifted(w, d);
  }
  const Json& blocks = member(j, "blocks", where);
  if (!blocks.is_array() || blocks.empty()) invalid(where + ".blocks: expected a non-empty array");
  std::vector<Matrix> out;
  for (std::size_t i = 0; i < blocks.size(); ++i)
    out.push_back(symmetric_from_json(blocks[i], d, where + ".blocks"));
  return BlockMarginal(std::move(out));
}

CostField cost_from_json(const Json& j, int m, int n, int d) {
  const std::string where = "cost";
  const std::string kind = text_or(j, "kind", "inline", where);
  if (kind == "inline") {
    const Json& blocks = member(j, "blocks", where);
    if (!blocks.is_array() || static_cast<int>(blocks.size()) != m * n)
      invalid("cost.blocks: expected m * n blocks");
    BlockMatrix c(m, n, d);
    for (int i = 0; i < m; ++i)
      for (int k = 0; k < n; ++k)
        c(i, k) = symmetric_from_json(blocks[static_cast<std::size_t>(i * n + k)], d, "cost.blocks");
    return CostField(std::move(c));
  }
  if (kind == "scaled_identity") {
    const Matrix dist = nested_matrix(member(j, "distances", where), "cost.distances");
    if (dist.rows() != m || dist.cols() != n) invalid("cost.distances: expected m x n");
    return cost_scaled_identity(dist, d);
  }
  if (kind == "grid") {
    const auto xs = points(member(j, "source", where), "cost.source");
    const auto ys = points(member(j, "target", where), "cost.target");
    if (static_cast<int>(xs.size()) != m || static_cast<int>(ys.size()) != n)
      invalid("cost: grid position counts do not match m, n");
    return cost_grid_sq_euclidean(xs, ys, d);
  }
  if (kind == "outer_difference") {
    const int s = integer_or(j, "samples", 1, where);
    auto read = [&](const char* key, int count) {
      const Json& list = member(j, key, where);
      if (!list.is_array() || static_cast<int>(list.size()) != count)
        invalid(std::string("cost.") + key + ": wrong number of sample matrices");
      std::vector<Matrix> out;
      for (std::size_t k = 0; k < list.size(); ++k)
        out.push_back(matrix_from_json(list[k], d, s, std::string("cost.") + key));
      return out;
    };
    return cost_outer_difference(read("source", m), read("target", n));
  }
  invalid("cost.kind: unknown builder \"" + kind + "\"");
}

SolverConfig solver_from_json(const Json& j) {
  const std::string w = "solver";
  SolverConfig c;
  c.method = enum_from(text_or(j, "method", to_string(c.method), w),
                       {Method::SteepestDescent, Method::ConjugateGradient}, "solver.method");
  c.max_iter = integer_or(j, "max_iter", c.max_iter, w);
  c.grad_tol = number_or(j, "grad_tol", c.grad_tol, w);
  c.line_search = enum_from(text_or(j, "line_search", to_string(c.line_search), w),
                            {LineSearch::Armijo, LineSearch::Wolfe}, "solver.line_search");
  c.c1 = number_or(j, "c1", c.c1, w);
  c.c2 = number_or(j, "c2", c.c2, w);
  c.backtrack = number_or(j, "backtrack", c.backtrack, w);
  c.max_backtracks = integer_or(j, "max_backtracks", c.max_backtracks, w);
  c.max_step = number_or(j, "max_step", c.max_step, w);
  c.max_step_norm = number_or(j, "max_step_norm", c.max_step_norm, w);
  c.step_policy = enum_from(text_or(j, "step_policy", to_string(c.step_policy), w),
                            {StepPolicy::Doubling, StepPolicy::Interpolated}, "solver.step_policy");
  c.cg_rule = enum_from(text_or(j, "cg_rule", to_string(c.cg_rule), w),
                        {CgRule::FletcherReeves, CgRule::PolakRibierePlus}, "solver.cg_rule");
  c.cg_restart = integer_or(j, "cg_restart", c.cg_restart, w);
  c.feas_tol = number_or(j, "feas_tol", c.feas_tol, w);
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!solver_to_json(c).contains(it.key())) invalid("solver: unknown key \"" + it.key() + "\"");
  return c;
}

Json solver_to_json(const SolverConfig& c) {
  return {{"method", to_string(c.method)},     {"max_iter", c.max_iter},
          {"grad_tol", c.grad_tol},            {"line_search", to_string(c.line_search)},
          {"c1", c.c1},                        {"c2", c.c2},
          {"backtrack", c.backtrack},          {"max_backtracks", c.max_backtracks},
          {"max_step", c.max_step},            {"max_step_norm", c.max_step_norm},
          {"step_policy", to_string(c.step_policy)}, {"cg_rule", to_string(c.cg_rule)},
          {"cg_restart", c.cg_restart},        {"feas_tol", c.feas_tol}};
}

BalanceOptions balance_from_json(const Json& j) {
  BalanceOptions b;
  b.tol = number_or(j, "tol", b.tol, "balance");
  b.max_iter = integer_or(j, "max_iter", b.max_iter, "balance");
  b.spd_floor = number_or(j, "spd_floor", b.spd_floor, "balance");
  b.polish_below = number_or(j, "polish_below", b.polish_below, "balance");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!balance_to_json(b).contains(it.key())) invalid("balance: unknown key \"" + it.key() + "\"");
  return b;
}

Json balance_to_json(const BalanceOptions& b) {
  return {{"tol", b.tol}, {"max_iter", b.max_iter}, {"spd_floor", b.spd_floor},
          {"polish_below", b.polish_below}};
}

Json report_to_json(const SolveReport& r, bool timings) {
  Json j = {{"objective", r.objective},
            {"grad_norm", r.grad_norm},
            {"constraint_residual", r.constraint_residual},
            {"iterations", r.iterations},
            {"termination", to_string(r.reason)},
            {"objective_evals", r.objective_evals},
            {"gradient_evals", r.gradient_evals},
            {"inner_iterations", r.inner_iterations}};
  if (timings) j["wall_time"] = r.wall_time;
  return j;
}

Json field_to_json(const TensorField& f) {
  Json blocks = Json::array();
  for (const auto& b : f.blocks) blocks.push_back(matrix_to_json(b));
  Json pos = Json::array();
  for (const auto& x : f.positions) pos.push_back(std::vector<double>(x.data(), x.data() + x.size()));
  return {{"version", kFormatVersion}, {"kind", "tensor_field"}, {"shape", f.shape},
          {"d", f.dim()},              {"positions", pos},       {"blocks", blocks},
          {"normalized", f.normalized}};
}

TensorField field_from_json(const Json& j, bool require_spd) {
  const std::string w = "tensor_field";
  if (j.contains("version") && integer(j.at("version"), w + ".version") != kFormatVersion)
    invalid(w + ": unsupported version");
  TensorField f;
  for (double v : numbers(member(j, "shape", w), w + ".shape")) f.shape.push_back(static_cast<int>(v));
  const int d = integer(member(j, "d", w), w + ".d");
  const Json& blocks = member(j, "blocks", w);
  if (!blocks.is_array()) invalid(w + ".blocks: expected an array");
  for (std::size_t k = 0; k < blocks.size(); ++k)
    f.blocks.push_back(symmetric_from_json(blocks[k], d, w + ".blocks"));
  f.positions = j.contains("positions") ? points(j.at("positions"), w + ".positions")
                                        : grid_positions(f.shape);
  if (flag_or(j, "normalize", false, w)) {
    f = TensorField::on_grid(f.shape, std::move(f.blocks), true);
    return f;
  }
  f.normalized = flag_or(j, "normalized", false, w);
  f.validate(require_spd);
  return f;
}

ProblemFile load_problem(const Json& doc) {
  if (!doc.is_object()) invalid("problem: expected a JSON object");
  if (integer(member(doc, "version", "problem"), "problem.version") != kFormatVersion)
    invalid("problem.version: only version 1 is supported");
  ProblemFile pf;
  pf.doc = doc;
  pf.kind = text_or(doc, "kind", "", "problem");
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) invalid("problem.seed: expected a non-negative integer");
    pf.seed = doc.at("seed").get<std::uint64_t>();
  }
  // Dry parse of the kind-specific payload.
  if (pf.kind == "mw") {
    mw_setup(pf);
  } else if (pf.kind == "barycenter" || pf.kind == "gw") {
    dim_value(pf, "n");
    dim_value(pf, "d");
  } else if (pf.kind == "interpolate") {
    field_from_json(member(doc, "source", "problem"));
    field_from_json(member(doc, "target", "problem"));
  } else if (pf.kind == "adapt") {
    adapt_setup(pf);
  } else {
    invalid("problem.kind: expected mw, barycenter, gw, interpolate or adapt");
  }
  return pf;
}

Json result_to_json(const ResultFile& r) {
  Json j = {{"version", kFormatVersion}, {"kind", r.kind},       {"objective", r.objective},
            {"report", r.report},        {"payload", r.payload}, {"metadata", r.metadata}};
  if (r.coupling) j["coupling"] = blocks_to_json(*r.coupling);
  return j;
}

ResultFile result_from_json(const Json& j) {
  const std::string w = "result";
  if (integer(member(j, "version", w), w + ".version") != kFormatVersion)
    invalid("result.version: only version 1 is supported");
  ResultFile r;
  r.kind = text_or(j, "kind", "", w);
  r.objective = number(member(j, "objective", w), w + ".objective");
  if (j.contains("coupling")) r.coupling = blocks_from_json(j.at("coupling"), w + ".coupling");
  r.report = member(j, "report", w);
  r.payload = member(j, "payload", w);
  r.metadata = member(j, "metadata", w);
  return r;
}

RunOutput run_problem(const ProblemFile& problem, const RunOptions& options) {
  if (problem.kind == "mw") return run_mw(problem, options);
  if (problem.kind == "barycenter") return run_barycenter_file(problem, options);
  if (problem.kind == "gw") return run_gw_file(problem, options);
  if (problem.kind == "interpolate") return run_interpolate_file(problem, options);
  if (problem.kind == "adapt") return run_adapt_file(problem, options);
  invalid("problem.kind: unsupported \"" + problem.kind + "\"");
}

RunOutput run_check(const ProblemFile& problem, const RunOptions& options) {
  if (problem.kind != "mw") invalid("check: needs an mw problem with marginals");
  const MwSetup s = mw_setup(problem);
  BlockMatrix seed(s.p.size(), s.q.size(), s.p.dim());
  for (int i = 0; i < s.p.size(); ++i) {
    const Matrix half = spd_fn(s.p[i], MatFn::Sqrt);
    for (int j = 0; j < s.q.size(); ++j) seed(i, j) = sym(half * s.q[j] * half);
  }
  const auto r = mbalance_run(seed, s.p, s.q, s.options.balance);
  RunOutput out;
  out.converged = r.report.converged;
  std::ostringstream os;
  os << (r.report.converged ? "feasible" : "not balanced") << ": gap " << r.report.final_gap
     << " at iteration " << r.report.iterations;
  out.summary = os.str();
  ResultFile& res = out.result;
  res.kind = "check_result";
  res.objective = r.report.final_gap;
  res.coupling = r.balanced;
  res.report = {{"gap_trace", r.report.gap_trace},
                {"iterations", r.report.iterations},
                {"final_gap", r.report.final_gap},
                {"converged", r.report.converged}};
  res.payload = Json::object();
  res.metadata = metadata(problem, effective_config(problem, {{"balance", balance_to_json(s.options.balance)}}),
                          options);
  return out;
}

std::string run_adapt_csv(const ProblemFile& problem) {
  if (problem.kind != "adapt") invalid("adapt: needs an adapt problem");
  RunOptions quiet;
  quiet.timestamps = false;
  const auto r = run_problem(problem, quiet);
  std::string csv = "trial,seed,epsilon,rmot_accuracy,sot_accuracy\n";
  char line[256];
  int k = 0;
  for (const auto& t : r.result.payload.at("trials")) {
    std::snprintf(line, sizeof line, "%d,%llu,%.6g,%.6g,%.6g\n", k++,
                  static_cast<unsigned long long>(t.at("seed").get<std::uint64_t>()),
                  t.at("epsilon").get<double>(), t.at("rmot_accuracy").get<double>(),
                  t.at("sot_accuracy").get<double>());
    csv += line;
  }
  std::snprintf(line, sizeof line, "mean,,,%.6g,%.6g\n",
                r.result.payload.at("mean_rmot_accuracy").get<double>(),
                r.result.payload.at("mean_sot_accuracy").get<double>());
  csv += line;
  return csv;
}

std::string render_svg(const TensorField& field, const SvgStyle& style) {
  field.validate(false);
  const int d = field.dim();
  if (d > 2) invalid("render: only 1x1 and 2x2 blocks can be drawn as ellipses");
  if (!(style.gamma > 0.0) || !(style.fill_ratio > 0.0) || style.pixels < 1)
    invalid("render: gamma, fill ratio and size must be positive");
  int extent = 1;
  for (int s : field.shape) extent = std::max(extent, s);
  const double spacing = extent > 1 ? 1.0 / (extent - 1) : 1.0;
  const double half = 0.5 * spacing;
  const bool flat = field.spatial_dim() == 1;

  struct Glyph {
    double cx, cy, rx, ry, angle;
  };
  std::vector<Glyph> glyphs;
  double largest = 0.0;
  for (int k = 0; k < field.sites(); ++k) {
    const Matrix& b = field.blocks[static_cast<std::size_t>(k)];
    const Vector& x = field.positions[static_cast<std::size_t>(k)];
    Glyph g{x(0), flat ? 0.0 : x(1), 0.0, 0.0, 0.0};
    if (d == 1) {
      g.rx = g.ry = std::pow(std::max(b(0, 0), 0.0), style.gamma);
    } else {
      const Eig e = sym_eig(b);
      g.rx = std::pow(std::max(e.values(1), 0.0), style.gamma);
      g.ry = std::pow(std::max(e.values(0), 0.0), style.gamma);
      g.angle = std::atan2(e.vectors(1, 1), e.vectors(0, 1)) * 180.0 / M_PI;
      if (g.angle <= -90.0) g.angle += 180.0;
      if (g.angle > 90.0) g.angle -= 180.0;
    }
    largest = std::max(largest, g.rx);
    glyphs.push_back(g);
  }
  const double scale = largest > 0.0 ? style.fill_ratio * spacing / largest : 0.0;

  const double width = 1.0 + spacing;
  const double height = flat ? spacing : 1.0 + spacing;
  char buf[512];
  std::string svg = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"%d\" "
                "height=\"%d\" viewBox=\"%.6g %.6g %.6g %.6g\">\n",
                style.pixels, static_cast<int>(std::lround(style.pixels * height / width)), -half,
                -half, width, height);
  svg += buf;
  std::snprintf(buf, sizeof buf,
                "<rect x=\"%.6g\" y=\"%.6g\" width=\"%.6g\" height=\"%.6g\" fill=\"white\"/>\n",
                -half, -half, width, height);
  svg += buf;
  svg += "<g fill=\"#3b6ea5\" fill-opacity=\"0.85\" stroke=\"#1d3a5c\" stroke-width=\"" +
         short_number(0.01 * spacing) + "\">\n";
  for (const auto& g : glyphs) {
    std::snprintf(buf, sizeof buf,
                  "<ellipse cx=\"%.6g\" cy=\"%.6g\" rx=\"%.6g\" ry=\"%.6g\" "
                  "transform=\"rotate(%.6g %.6g %.6g)\"/>\n",
                  g.cx, g.cy, scale * g.rx, scale * g.ry, g.angle == 0.0 ? 0.0 : g.angle, g.cx,
                  g.cy);
    svg += buf;
  }
  svg += "</g>\n</svg>\n";
  return svg;
}

}  // namespace bspdot::io
