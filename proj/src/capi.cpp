#include "bspdot/bspdot.h"

#include "bspdot/error.hpp"
#include "bspdot/io.hpp"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

struct bspdot_problem {
  bspdot::io::ProblemFile file;
};

struct bspdot_result {
  bspdot::io::RunOutput output;
};

namespace {

thread_local std::string last_error;

bspdot_status status_of(bspdot::ErrorCode code) {
  return static_cast<bspdot_status>(static_cast<int>(code) + 1);
}

template <class F>
bspdot_status guard(F&& body) {
  try {
    last_error.clear();
    return body();
  } catch (const bspdot::Error& e) {
    last_error = e.what();
    return status_of(e.code());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return BSPDOT_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return BSPDOT_INTERNAL;
  }
}

bspdot_status null_argument(const char* what) {
  last_error = std::string("null argument: ") + what;
  return BSPDOT_INVALID_INPUT;
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

bspdot::io::RunOptions run_options(const bspdot_run_options* o) {
  bspdot::io::RunOptions r;
  if (o == nullptr) return r;
  r.timestamps = o->timestamps != 0;
  r.mds_dim = o->mds_dim;
  r.baseline = o->baseline != 0;
  if (o->times != nullptr) r.times.assign(o->times, o->times + o->time_count);
  return r;
}

std::vector<bspdot::Matrix> blocks(const double* data, int count, int d) {
  std::vector<bspdot::Matrix> out;
  for (int k = 0; k < count; ++k)
    out.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                                  Eigen::RowMajor>>(data + k * d * d, d, d));
  return out;
}

}  // namespace

extern "C" {

const char* bspdot_version(void) { return bspdot::io::tool_version(); }

const char* bspdot_status_name(bspdot_status status) {
  switch (status) {
    case BSPDOT_OK: return "ok";
    case BSPDOT_INVALID_INPUT: return "invalid_input";
    case BSPDOT_NOT_POSITIVE_DEFINITE: return "not_positive_definite";
    case BSPDOT_PROJECTION_FAILED: return "projection_failed";
    case BSPDOT_NOT_CONVERGED: return "not_converged";
    case BSPDOT_FEASIBILITY_UNKNOWN: return "feasibility_unknown";
    case BSPDOT_INFEASIBLE_START: return "infeasible_start";
    case BSPDOT_INNER_SOLVE_FAILED: return "inner_solve_failed";
    case BSPDOT_STALLED_AT_BOUNDARY: return "stalled_at_boundary";
    case BSPDOT_IO_ERROR: return "io_error";
    case BSPDOT_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* bspdot_last_error(void) { return last_error.c_str(); }

void bspdot_string_free(char* s) { std::free(s); }

bspdot_run_options bspdot_default_run_options(void) {
  return bspdot_run_options{1, 0, 0, nullptr, 0};
}

bspdot_status bspdot_problem_load(const char* path, bspdot_problem** out) {
  if (path == nullptr || out == nullptr) return null_argument("path or out");
  *out = nullptr;
  if (!std::ifstream(path)) {
    last_error = std::string("cannot open ") + path;
    return BSPDOT_IO_ERROR;
  }
  return guard([&] {
    *out = new bspdot_problem{bspdot::io::load_problem(bspdot::io::read_json_file(path))};
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_problem_parse(const char* json_text, bspdot_problem** out) {
  if (json_text == nullptr || out == nullptr) return null_argument("json_text or out");
  *out = nullptr;
  return guard([&] {
    *out = new bspdot_problem{bspdot::io::load_problem(bspdot::io::parse(json_text, "problem"))};
    return BSPDOT_OK;
  });
}

void bspdot_problem_free(bspdot_problem* problem) { delete problem; }

const char* bspdot_problem_kind(const bspdot_problem* problem) {
  return problem == nullptr ? "" : problem->file.kind.c_str();
}

bspdot_status bspdot_run(const bspdot_problem* problem, const bspdot_run_options* options,
                         bspdot_result** out) {
  if (problem == nullptr || out == nullptr) return null_argument("problem or out");
  *out = nullptr;
  return guard([&] {
    *out = new bspdot_result{bspdot::io::run_problem(problem->file, run_options(options))};
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_check(const bspdot_problem* problem, const bspdot_run_options* options,
                           bspdot_result** out) {
  if (problem == nullptr || out == nullptr) return null_argument("problem or out");
  *out = nullptr;
  return guard([&] {
    *out = new bspdot_result{bspdot::io::run_check(problem->file, run_options(options))};
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_adapt_csv(const bspdot_problem* problem, char** csv) {
  if (problem == nullptr || csv == nullptr) return null_argument("problem or csv");
  *csv = nullptr;
  return guard([&] {
    *csv = copy_string(bspdot::io::run_adapt_csv(problem->file));
    return BSPDOT_OK;
  });
}

int bspdot_result_converged(const bspdot_result* result) {
  return result != nullptr && result->output.converged ? 1 : 0;
}

double bspdot_result_objective(const bspdot_result* result) {
  return result == nullptr ? 0.0 : result->output.result.objective;
}

const char* bspdot_result_summary(const bspdot_result* result) {
  return result == nullptr ? "" : result->output.summary.c_str();
}

bspdot_status bspdot_result_json(const bspdot_result* result, char** json_text) {
  if (result == nullptr || json_text == nullptr) return null_argument("result or json_text");
  *json_text = nullptr;
  return guard([&] {
    *json_text = copy_string(bspdot::io::dump(bspdot::io::result_to_json(result->output.result)));
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_result_write(const bspdot_result* result, const char* path) {
  if (result == nullptr || path == nullptr) return null_argument("result or path");
  const std::string text = bspdot::io::dump(bspdot::io::result_to_json(result->output.result));
  std::ofstream f(path, std::ios::binary);
  if (!(f << text)) {
    last_error = std::string("cannot write ") + path;
    return BSPDOT_IO_ERROR;
  }
  return BSPDOT_OK;
}

size_t bspdot_result_artifact_count(const bspdot_result* result) {
  return result == nullptr ? 0 : result->output.artifacts.size();
}

bspdot_status bspdot_result_artifact(const bspdot_result* result, size_t index, const char** name,
                                     const char** text) {
  if (result == nullptr || name == nullptr || text == nullptr)
    return null_argument("result, name or text");
  if (index >= result->output.artifacts.size()) {
    last_error = "artifact index out of range";
    return BSPDOT_INVALID_INPUT;
  }
  *name = result->output.artifacts[index].first.c_str();
  *text = result->output.artifacts[index].second.c_str();
  return BSPDOT_OK;
}

void bspdot_result_free(bspdot_result* result) { delete result; }

bspdot_status bspdot_render_svg(const char* field_json, double gamma, char** svg) {
  if (field_json == nullptr || svg == nullptr) return null_argument("field_json or svg");
  *svg = nullptr;
  return guard([&] {
    bspdot::io::SvgStyle style;
    style.gamma = gamma;
    const auto field = bspdot::io::field_from_json(bspdot::io::parse(field_json, "tensor_field"),
                                                   false);
    *svg = copy_string(bspdot::io::render_svg(field, style));
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_selftest(char** report, int* passed) {
  if (report == nullptr || passed == nullptr) return null_argument("report or passed");
  *report = nullptr;
  return guard([&] {
    std::string text;
    bool all = true;
    for (const auto& line : bspdot::io::selftest()) {
      all = all && line.pass;
      text += std::string(line.pass ? "PASS " : "FAIL ") + line.name + ": " + line.detail + "\n";
    }
    *passed = all ? 1 : 0;
    *report = copy_string(text);
    return BSPDOT_OK;
  });
}

bspdot_status bspdot_mw_dense(int m, int n, int d, const double* p, const double* q,
                              const double* cost, double epsilon, double* coupling,
                              double* objective) {
  if (p == nullptr || q == nullptr || cost == nullptr || coupling == nullptr)
    return null_argument("p, q, cost or coupling");
  if (m < 1 || n < 1 || d < 1) {
    last_error = "invalid_input: dimensions must be positive";
    return BSPDOT_INVALID_INPUT;
  }
  return guard([&] {
    const bspdot::BlockMarginal pm(blocks(p, m, d));
    const bspdot::BlockMarginal qm(blocks(q, n, d));
    const auto cb = blocks(cost, m * n, d);
    bspdot::BlockMatrix c(m, n, d);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = cb[static_cast<std::size_t>(i * n + j)];
    const auto r = bspdot::solve_mw(
        pm, qm, {bspdot::CostField(c), epsilon, bspdot::Regularizer::QuantumEntropy});
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            coupling + (i * n + j) * d * d, d, d) = r.coupling(i, j);
    if (objective != nullptr) *objective = r.value;
    if (r.report.reason != bspdot::Termination::Converged) {
      last_error = std::string("not_converged: ") + bspdot::to_string(r.report.reason);
      return BSPDOT_NOT_CONVERGED;
    }
    return BSPDOT_OK;
  });
}

}  // extern "C"
