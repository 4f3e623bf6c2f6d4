#pragma once

// Version-1 JSON problem/result files, tensor-field files, SVG ellipse
// rendering, and the runners behind the command-line tool.

#include "bspdot/applications.hpp"
#include "bspdot/gw.hpp"

#include <json.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace bspdot::io {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;
const char* tool_version();

/// Canonical text: sorted keys, shortest round-trip doubles, two-space
/// indent, trailing newline.
std::string dump(const Json& doc);
Json parse(const std::string& text, const std::string& where = "input");
Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);

/// Matrices travel as flat row-major arrays; dims are stated by the caller.
Json matrix_to_json(const Matrix& a);
Matrix matrix_from_json(const Json& j, int rows, int cols, const std::string& where);
/// As matrix_from_json for d x d, rejecting asymmetry above 1e-12 relative.
Matrix symmetric_from_json(const Json& j, int d, const std::string& where);

Json blocks_to_json(const BlockMatrix& b);
BlockMatrix blocks_from_json(const Json& j, const std::string& where);

/// {"blocks": [...]} or {"lifted": [weights]}.
Json marginal_to_json(const BlockMarginal& p);
BlockMarginal marginal_from_json(const Json& j, int d, const std::string& where);

/// {"kind": "inline" | "scaled_identity" | "grid" | "outer_difference", ...}.
CostField cost_from_json(const Json& j, int m, int n, int d);

SolverConfig solver_from_json(const Json& j);
Json solver_to_json(const SolverConfig& c);
BalanceOptions balance_from_json(const Json& j);
Json balance_to_json(const BalanceOptions& b);
Json report_to_json(const SolveReport& r, bool timings);

Json field_to_json(const TensorField& f);
TensorField field_from_json(const Json& j, bool require_spd = true);

struct ProblemFile {
  std::string kind;  // mw, barycenter, gw, interpolate, adapt
  Json doc;
  std::uint64_t seed = 0;
};

/// Checks version, kind and the declared dims against the payload.
ProblemFile load_problem(const Json& doc);

struct ResultFile {
  std::string kind;
  double objective = 0.0;
  std::optional<BlockMatrix> coupling;
  Json report;    // solver report with traces
  Json payload;   // kind-specific output
  Json metadata;  // tool, version, effective config, timestamp
};

Json result_to_json(const ResultFile& r);
ResultFile result_from_json(const Json& j);

struct RunOptions {
  bool timestamps = true;  // false drops wall times and the timestamp
  int mds_dim = 0;         // gw: embed the average in this many dimensions
  std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};  // interpolate
  bool baseline = false;   // interpolate: also emit linear interpolation
};

struct RunOutput {
  ResultFile result;
  bool converged = true;
  std::string summary;
  /// Extra named documents (one tensor field per time for interpolate).
  std::vector<std::pair<std::string, std::string>> artifacts;
};

RunOutput run_problem(const ProblemFile& problem, const RunOptions& options = {});
/// Feasibility of the marginals of an mw problem through mbalance.
RunOutput run_check(const ProblemFile& problem, const RunOptions& options = {});
/// One CSV row per trial plus a mean row.
std::string run_adapt_csv(const ProblemFile& problem);

struct SvgStyle {
  double gamma = 0.5;  // radii proportional to eigenvalue^gamma
  double fill_ratio = 0.45;  // largest radius as a share of the grid spacing
  int pixels = 480;
};

/// One <ellipse> per site, rotated to the leading eigenvector; the viewBox
/// spans the field domain plus half a grid spacing.
std::string render_svg(const TensorField& field, const SvgStyle& style = {});

struct SelftestLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

/// Gradient, Hessian, retraction, projection, balancing and metric checks
/// on small seeded instances.
std::vector<SelftestLine> selftest();

}  // namespace bspdot::io
