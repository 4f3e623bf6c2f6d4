#include "bspdot/bspdot.h"

#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

namespace {

const char* kProblem = R"({
  "version": 1, "kind": "mw",
  "dims": {"m": 2, "n": 2, "d": 1},
  "marginals": {"p": {"lifted": [0.3, 0.7]}, "q": {"lifted": [0.5, 0.5]}},
  "cost": {"kind": "scaled_identity", "distances": [[0, 1], [1, 0]]},
  "epsilon": 0.5
})";

}  // namespace

TEST_SUITE("capi") {
  TEST_CASE("status names and errors") {
    CHECK(std::string(bspdot_status_name(BSPDOT_NOT_CONVERGED)) == "not_converged");
    bspdot_problem* p = nullptr;
    CHECK(bspdot_problem_parse("{", &p) == BSPDOT_INVALID_INPUT);
    CHECK(p == nullptr);
    CHECK(std::string(bspdot_last_error()).find("malformed") != std::string::npos);
    CHECK(bspdot_problem_load("/nonexistent/problem.json", &p) == BSPDOT_IO_ERROR);
    CHECK(bspdot_problem_parse(nullptr, &p) == BSPDOT_INVALID_INPUT);
  }

  TEST_CASE("run through handles") {
    bspdot_problem* p = nullptr;
    REQUIRE(bspdot_problem_parse(kProblem, &p) == BSPDOT_OK);
    CHECK(std::string(bspdot_problem_kind(p)) == "mw");
    bspdot_run_options o = bspdot_default_run_options();
    o.timestamps = 0;
    bspdot_result* r = nullptr;
    REQUIRE(bspdot_run(p, &o, &r) == BSPDOT_OK);
    CHECK(bspdot_result_converged(r) == 1);
    char* text = nullptr;
    REQUIRE(bspdot_result_json(r, &text) == BSPDOT_OK);
    CHECK(std::string(text).find("\"mw_result\"") != std::string::npos);
    bspdot_string_free(text);
    CHECK(bspdot_result_artifact_count(r) == 0);
    const char* name = nullptr;
    const char* body = nullptr;
    CHECK(bspdot_result_artifact(r, 0, &name, &body) == BSPDOT_INVALID_INPUT);
    bspdot_result_free(r);
    bspdot_problem_free(p);
  }

  TEST_CASE("dense entry point matches scalar Sinkhorn in one dimension") {
    const double p[2] = {0.3, 0.7};
    const double q[2] = {0.5, 0.5};
    const double c[4] = {0.0, 1.0, 1.0, 0.0};
    const double eps = 0.5;
    double g[4];
    double obj = 0.0;
    REQUIRE(bspdot_mw_dense(2, 2, 1, p, q, c, eps, g, &obj) == BSPDOT_OK);
    // Independent Sinkhorn on the Gibbs kernel.
    double k[4];
    for (int t = 0; t < 4; ++t) k[t] = std::exp(-c[t] / eps);
    double u[2] = {1, 1}, v[2] = {1, 1};
    for (int it = 0; it < 5000; ++it) {
      for (int i = 0; i < 2; ++i) u[i] = p[i] / (k[2 * i] * v[0] + k[2 * i + 1] * v[1]);
      for (int j = 0; j < 2; ++j) v[j] = q[j] / (k[j] * u[0] + k[2 + j] * u[1]);
    }
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(g[2 * i + j] == doctest::Approx(u[i] * k[2 * i + j] * v[j]).epsilon(1e-6));
    const double bad_p[2] = {0.3, 0.6};
    CHECK(bspdot_mw_dense(2, 2, 1, bad_p, q, c, eps, g, &obj) == BSPDOT_INVALID_INPUT);
  }
}
