#include "bspdot/barycenter.hpp"
#include "bspdot/error.hpp"
#include "bspdot/random.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace bspdot;
using namespace bspdot::testing;

namespace {

MwOptions inner_options() {
  MwOptions o;
  o.solver.method = Method::ConjugateGradient;
  o.solver.line_search = LineSearch::Wolfe;
  o.solver.grad_tol = 1e-10;
  o.solver.max_iter = 5000;
  o.balance.tol = 1e-13;
  return o;
}

BarycenterProblem two_input_problem(Rng& rng, double eps) {
  BarycenterProblem b;
  b.support = 3;
  b.epsilon = eps;
  b.weights = {0.3, 0.7};
  for (int l = 0; l < 2; ++l) {
    b.inputs.push_back(mild_marginal(rng, 3, 2).as_column());
    b.costs.push_back(cost_scaled_identity(rng.gaussian(3, 3).cwiseAbs(), 2));
  }
  return b;
}

}  // namespace

TEST_SUITE("barycenter") {
  TEST_CASE("value is the weighted sum of independent transport solves") {
    Rng rng(51);
    const BarycenterProblem b = two_input_problem(rng, 0.5);
    const BlockMatrix p = mild_marginal(rng, 3, 2).as_column();
    const auto g = barycenter_gradient(b, p, inner_options());
    double direct = 0.0;
    std::vector<Matrix> pb;
    for (int i = 0; i < 3; ++i) pb.push_back(p(i, 0));
    for (int l = 0; l < 2; ++l) {
      std::vector<Matrix> ql;
      for (int j = 0; j < 3; ++j) ql.push_back(b.inputs[static_cast<std::size_t>(l)](j, 0));
      const auto r = solve_mw(BlockMarginal(pb), BlockMarginal(ql),
                              {b.costs[static_cast<std::size_t>(l)], b.epsilon,
                               Regularizer::QuantumEntropy},
                              inner_options());
      direct += b.weights[static_cast<std::size_t>(l)] * r.value;
    }
    CHECK(g.value == doctest::Approx(direct).epsilon(1e-8));
    CHECK(g.couplings.size() == 2);
  }

  TEST_CASE("duplicated inputs give the single-input barycenter") {
    Rng rng(52);
    BarycenterProblem one;
    one.support = 3;
    one.epsilon = 0.5;
    one.weights = {1.0};
    one.inputs = {mild_marginal(rng, 3, 2).as_column()};
    one.costs = {cost_scaled_identity(rng.gaussian(3, 3).cwiseAbs(), 2)};
    BarycenterProblem two = one;
    two.weights = {0.5, 0.5};
    two.inputs.push_back(one.inputs[0]);
    two.costs.push_back(one.costs[0]);
    BarycenterOptions o;
    o.outer.grad_tol = 1e-6;
    o.outer.max_iter = 300;
    o.inner = inner_options();
    const auto a = solve_barycenter(one, o);
    const auto b = solve_barycenter(two, o);
    for (int i = 0; i < 3; ++i) CHECK((a.barycenter(i, 0) - b.barycenter(i, 0)).norm() < 1e-6);
    Matrix sum = Matrix::Zero(2, 2);
    for (int i = 0; i < 3; ++i) sum += a.barycenter(i, 0);
    CHECK((sum - Matrix::Identity(2, 2)).norm() < 1e-10);
  }

  TEST_CASE("objective does not increase under exact inner solves") {
    Rng rng(53);
    const BarycenterProblem b = two_input_problem(rng, 0.8);
    BarycenterOptions o;
    o.outer.max_iter = 15;
    o.inner = inner_options();
    o.inner_tol_ratio = 0.0;
    o.inner_tol_floor = 1e-11;
    const auto r = solve_barycenter(b, o);
    for (std::size_t k = 1; k < r.report.objective.size(); ++k)
      CHECK(r.report.objective[k] <= r.report.objective[k - 1] + 1e-9);
  }

  TEST_CASE("invalid problems are rejected") {
    Rng rng(54);
    BarycenterProblem b = two_input_problem(rng, 0.5);
    b.weights = {0.5, 0.6};
    CHECK_THROWS_AS(b.validate(), Error);
    b.weights = {0.5, 0.5};
    b.costs.pop_back();
    CHECK_THROWS_AS(b.validate(), Error);
  }
}
