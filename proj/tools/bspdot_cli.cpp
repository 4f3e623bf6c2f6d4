// Command-line front end over the C API.

#include "bspdot/bspdot.h"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace {

enum Exit { kOk = 0, kFailure = 1, kInvalid = 2, kNotConverged = 3 };

int report(bspdot_status status) {
  std::cerr << "bspdot: " << bspdot_last_error() << "\n";
  switch (status) {
    case BSPDOT_INVALID_INPUT:
    case BSPDOT_NOT_POSITIVE_DEFINITE:
    case BSPDOT_INFEASIBLE_START:
      return kInvalid;
    case BSPDOT_NOT_CONVERGED:
    case BSPDOT_FEASIBILITY_UNKNOWN:
    case BSPDOT_INNER_SOLVE_FAILED:
    case BSPDOT_STALLED_AT_BOUNDARY:
      return kNotConverged;
    default:
      return kFailure;
  }
}

struct ProblemDeleter {
  void operator()(bspdot_problem* p) const { bspdot_problem_free(p); }
};
struct ResultDeleter {
  void operator()(bspdot_result* r) const { bspdot_result_free(r); }
};
struct StringDeleter {
  void operator()(char* s) const { bspdot_string_free(s); }
};
using ProblemPtr = std::unique_ptr<bspdot_problem, ProblemDeleter>;
using ResultPtr = std::unique_ptr<bspdot_result, ResultDeleter>;
using StringPtr = std::unique_ptr<char, StringDeleter>;

bool write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) std::cerr << "bspdot: cannot write " << path << "\n";
  return static_cast<bool>(out);
}

struct Common {
  std::string input;
  std::string output;
  bool no_timestamps = false;
};

void add_common(CLI::App* cmd, Common& c, const char* output_help) {
  cmd->add_option("input", c.input, "problem file (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("-o,--output", c.output, output_help);
  cmd->add_flag("--no-timestamps", c.no_timestamps,
                "omit wall times and the timestamp so reruns are byte-identical");
}

int load(const Common& c, const char* expected, ProblemPtr& problem) {
  bspdot_problem* raw = nullptr;
  const auto status = bspdot_problem_load(c.input.c_str(), &raw);
  if (status != BSPDOT_OK) return report(status);
  problem.reset(raw);
  if (expected != nullptr && std::string(bspdot_problem_kind(raw)) != expected) {
    std::cerr << "bspdot: " << c.input << " is a \"" << bspdot_problem_kind(raw)
              << "\" problem, expected \"" << expected << "\"\n";
    return kInvalid;
  }
  return kOk;
}

int finish(const ResultPtr& result, const std::string& path) {
  char* raw = nullptr;
  const auto status = bspdot_result_json(result.get(), &raw);
  if (status != BSPDOT_OK) return report(status);
  StringPtr text(raw);
  if (path.empty()) {
    std::cout << text.get();
  } else if (!write_file(path, text.get())) {
    return kFailure;
  }
  std::cerr << bspdot_result_summary(result.get()) << "\n";
  return bspdot_result_converged(result.get()) ? kOk : kNotConverged;
}

int run_kind(const Common& c, const char* kind, bspdot_run_options options, bool check = false) {
  ProblemPtr problem;
  if (const int rc = load(c, check ? "mw" : kind, problem); rc != kOk) return rc;
  options.timestamps = c.no_timestamps ? 0 : 1;
  bspdot_result* raw = nullptr;
  const auto status = check ? bspdot_check(problem.get(), &options, &raw)
                            : bspdot_run(problem.get(), &options, &raw);
  if (status != BSPDOT_OK) return report(status);
  return finish(ResultPtr(raw), c.output);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Block-SPD matrix-valued optimal transport"};
  app.require_subcommand(1);
  app.set_version_flag("--version", bspdot_version());

  Common solve;
  add_common(app.add_subcommand("solve", "entropic transport between block-SPD marginals"), solve,
             "result file (default stdout)");

  Common bary;
  add_common(app.add_subcommand("barycenter", "barycenter on a fixed support"), bary,
             "result file (default stdout)");

  Common gw;
  int mds = 0;
  auto* gw_cmd = app.add_subcommand("gw-average", "Gromov-Wasserstein average of distance matrices");
  add_common(gw_cmd, gw, "result file (default stdout)");
  gw_cmd->add_option("--mds", mds, "embed the average in this many dimensions")
      ->check(CLI::NonNegativeNumber);

  Common interp;
  std::vector<double> times{0.0, 0.25, 0.5, 0.75, 1.0};
  bool baseline = false;
  auto* interp_cmd = app.add_subcommand("interpolate", "displacement interpolation of tensor fields");
  add_common(interp_cmd, interp, "output directory (result.json plus one field per time)");
  interp_cmd->add_option("--t", times, "interpolation times in [0, 1]")
      ->check(CLI::Range(0.0, 1.0))
      ->delimiter(',');
  interp_cmd->add_flag("--baseline", baseline, "also write the linear interpolation");

  Common adapt;
  add_common(app.add_subcommand("adapt", "domain adaptation trials, CSV accuracy table"), adapt,
             "CSV file (default stdout)");

  Common check;
  add_common(app.add_subcommand("check", "feasibility of an mw problem's marginals"), check,
             "result file (default stdout)");

  std::string field_path;
  std::string svg_path;
  double gamma = 0.5;
  auto* render = app.add_subcommand("render", "draw a tensor field as SVG ellipses");
  render->add_option("input", field_path, "tensor field file")->required()->check(CLI::ExistingFile);
  render->add_option("-o,--output", svg_path, "SVG file (default stdout)");
  render->add_option("--gamma", gamma, "radius exponent on the eigenvalues")
      ->check(CLI::PositiveNumber);

  app.add_subcommand("selftest", "built-in derivative, geometry and balancing checks");

  CLI11_PARSE(app, argc, argv);
  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  bspdot_run_options options = bspdot_default_run_options();

  if (name == "solve") return run_kind(solve, "mw", options);
  if (name == "barycenter") return run_kind(bary, "barycenter", options);
  if (name == "check") return run_kind(check, "mw", options, true);
  if (name == "gw-average") {
    options.mds_dim = mds;
    return run_kind(gw, "gw", options);
  }

  if (name == "interpolate") {
    ProblemPtr problem;
    if (const int rc = load(interp, "interpolate", problem); rc != kOk) return rc;
    options.timestamps = interp.no_timestamps ? 0 : 1;
    options.baseline = baseline ? 1 : 0;
    options.times = times.data();
    options.time_count = times.size();
    bspdot_result* raw = nullptr;
    const auto status = bspdot_run(problem.get(), &options, &raw);
    if (status != BSPDOT_OK) return report(status);
    ResultPtr result(raw);
    const std::filesystem::path dir = interp.output.empty() ? "." : interp.output;
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
      std::cerr << "bspdot: cannot create " << dir << ": " << ec.message() << "\n";
      return kFailure;
    }
    for (std::size_t k = 0; k < bspdot_result_artifact_count(result.get()); ++k) {
      const char* file = nullptr;
      const char* text = nullptr;
      bspdot_result_artifact(result.get(), k, &file, &text);
      if (!write_file((dir / file).string(), text)) return kFailure;
    }
    return finish(result, (dir / "result.json").string());
  }

  if (name == "adapt") {
    ProblemPtr problem;
    if (const int rc = load(adapt, "adapt", problem); rc != kOk) return rc;
    char* raw = nullptr;
    const auto status = bspdot_adapt_csv(problem.get(), &raw);
    if (status != BSPDOT_OK) return report(status);
    StringPtr csv(raw);
    if (adapt.output.empty()) {
      std::cout << csv.get();
    } else if (!write_file(adapt.output, csv.get())) {
      return kFailure;
    }
    return kOk;
  }

  if (name == "render") {
    std::ifstream in(field_path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    char* raw = nullptr;
    const auto status = bspdot_render_svg(ss.str().c_str(), gamma, &raw);
    if (status != BSPDOT_OK) return report(status);
    StringPtr svg(raw);
    if (svg_path.empty()) {
      std::cout << svg.get();
    } else if (!write_file(svg_path, svg.get())) {
      return kFailure;
    }
    return kOk;
  }

  char* raw = nullptr;
  int passed = 0;
  const auto status = bspdot_selftest(&raw, &passed);
  if (status != BSPDOT_OK) return report(status);
  StringPtr text(raw);
  std::cout << text.get();
  return passed ? kOk : kFailure;
}
