#include "bspdot/random.hpp"
#include "bspdot/simplex.hpp"
#include "bspdot/solver.hpp"

#include <doctest.h>

using namespace bspdot;

namespace {

// sum_i ||P_i - T_i||^2 has its minimum at T on the simplex.
Problem distance_problem(const BlockMatrix& target) {
  Problem pr;
  pr.objective = [target](const BlockMatrix& x) { return (x - target).dot(x - target); };
  pr.euclidean_gradient = [target](const BlockMatrix& x) { return 2.0 * (x - target); };
  return pr;
}

}  // namespace

TEST_SUITE("solver") {
  TEST_CASE("both methods reach an interior minimizer") {
    Rng rng(31);
    const BlockMatrix target = rng.spd_marginal(4, 2).as_column();
    const SpdSimplexManifold manifold(4, 2);
    for (auto method : {Method::SteepestDescent, Method::ConjugateGradient}) {
      for (auto search : {LineSearch::Armijo, LineSearch::Wolfe}) {
        SolverConfig c;
        c.method = method;
        c.line_search = search;
        c.grad_tol = 1e-10;
        c.max_iter = 5000;
        const auto r = minimize(distance_problem(target), manifold, simplex_uniform(4, 2), c);
        CHECK(r.report.reason == Termination::Converged);
        CHECK((r.x - target).norm() < 1e-8);
        CHECK(r.report.objective.size() == static_cast<std::size_t>(r.report.iterations) + 1);
        for (std::size_t k = 1; k < r.report.objective.size(); ++k)
          CHECK(r.report.objective[k] <= r.report.objective[k - 1] + 1e-15);
      }
    }
  }

  TEST_CASE("iteration cap is reported") {
    Rng rng(32);
    const BlockMatrix target = rng.spd_marginal(3, 2).as_column();
    SolverConfig c;
    c.max_iter = 1;
    c.grad_tol = 1e-14;
    const auto r = minimize(distance_problem(target), SpdSimplexManifold(3, 2),
                            simplex_uniform(3, 2), c);
    CHECK(r.report.reason == Termination::MaxIter);
    CHECK(std::string(to_string(r.report.reason)) == "MaxIter");
  }

  TEST_CASE("gradient check accepts a correct gradient and flags a wrong one") {
    Rng rng(33);
    const BlockMatrix target = rng.spd_marginal(3, 2).as_column();
    const SpdSimplexManifold manifold(3, 2);
    const BlockMatrix x = rng.spd_marginal(3, 2).as_column();
    std::vector<BlockMatrix> dirs;
    for (int k = 0; k < 3; ++k) {
      BlockMatrix s(3, 1, 2);
      for (int i = 0; i < 3; ++i) s(i, 0) = rng.symmetric(2);
      dirs.push_back(manifold.project(x, s));
    }
    Problem good = distance_problem(target);
    CHECK(gradient_check(good, manifold, x, dirs) < 1e-6);
    Problem bad = good;
    bad.euclidean_gradient = [target](const BlockMatrix& y) { return 3.0 * (y - target); };
    CHECK(gradient_check(bad, manifold, x, dirs) > 1e-2);
  }
}
