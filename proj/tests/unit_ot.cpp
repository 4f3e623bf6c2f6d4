#include "bspdot/error.hpp"
#include "bspdot/ot.hpp"
#include "bspdot/random.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>

using namespace bspdot;
using namespace bspdot::testing;

namespace {

// Minimum over all basic feasible solutions: every choice of m + n - 1 cells
// whose equality system is nonsingular, kept when the solution is nonnegative.
double vertex_enumeration(const std::vector<double>& p, const std::vector<double>& q,
                          const Matrix& c) {
  const int m = static_cast<int>(p.size());
  const int n = static_cast<int>(q.size());
  const int cells = m * n;
  const int basis = m + n - 1;
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> pick(static_cast<std::size_t>(basis));
  std::function<void(int, int)> choose = [&](int start, int depth) {
    if (depth == basis) {
      Matrix a = Matrix::Zero(m + n, basis);
      Vector b(m + n);
      for (int i = 0; i < m; ++i) b(i) = p[static_cast<std::size_t>(i)];
      for (int j = 0; j < n; ++j) b(m + j) = q[static_cast<std::size_t>(j)];
      for (int k = 0; k < basis; ++k) {
        a(pick[static_cast<std::size_t>(k)] / n, k) = 1.0;
        a(m + pick[static_cast<std::size_t>(k)] % n, k) = 1.0;
      }
      Eigen::ColPivHouseholderQR<Matrix> qr(a);
      if (qr.rank() < basis) return;
      const Vector x = qr.solve(b);
      if ((a * x - b).norm() > 1e-10 || x.minCoeff() < -1e-12) return;
      double v = 0.0;
      for (int k = 0; k < basis; ++k)
        v += x(k) * c(pick[static_cast<std::size_t>(k)] / n, pick[static_cast<std::size_t>(k)] % n);
      best = std::min(best, v);
      return;
    }
    for (int s = start; s < cells; ++s) {
      pick[static_cast<std::size_t>(depth)] = s;
      choose(s + 1, depth + 1);
    }
  };
  choose(0, 0);
  return best;
}

MwOptions tight() {
  MwOptions o;
  o.solver.method = Method::ConjugateGradient;
  o.solver.line_search = LineSearch::Wolfe;
  o.solver.grad_tol = 1e-10;
  o.solver.max_iter = 5000;
  o.balance.tol = 1e-14;
  o.balance.max_iter = 5000;
  return o;
}

}  // namespace

TEST_SUITE("ot") {
  TEST_CASE("transportation simplex matches vertex enumeration") {
    Rng rng(41);
    for (int t = 0; t < 15; ++t) {
      const int m = 2 + rng.index(2);
      const int n = 2 + rng.index(3);
      const auto p = rng.simplex(m);
      const auto q = rng.simplex(n);
      Matrix c(m, n);
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
      const ScalarPlan plan = scalar_ot_exact(p, q, c);
      CHECK(plan.value == doctest::Approx(vertex_enumeration(p, q, c)).epsilon(1e-12));
      CHECK(plan.coupling.minCoeff() >= 0.0);
      for (int i = 0; i < m; ++i)
        CHECK(plan.coupling.row(i).sum() == doctest::Approx(p[static_cast<std::size_t>(i)]));
    }
  }

  TEST_CASE("degenerate marginals do not cycle") {
    const std::vector<double> p{0.25, 0.25, 0.25, 0.25};
    Matrix c = Matrix::Ones(4, 4) - Matrix::Identity(4, 4);
    const ScalarPlan plan = scalar_ot_exact(p, p, c);
    CHECK(plan.value == doctest::Approx(0.0));
  }

  TEST_CASE("Sinkhorn meets the marginals and approaches the exact value") {
    Rng rng(42);
    const auto p = rng.simplex(5);
    const auto q = rng.simplex(4);
    Matrix c(5, 4);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) c(i, j) = rng.uniform();
    const double exact = scalar_ot_exact(p, q, c).value;
    double prev = std::numeric_limits<double>::infinity();
    for (double eps : {0.1, 0.01, 0.001}) {
      const Matrix g = scalar_sinkhorn(p, q, c, eps);
      for (int i = 0; i < 5; ++i) CHECK(g.row(i).sum() == doctest::Approx(p[static_cast<std::size_t>(i)]).epsilon(1e-10));
      const double gap = g.cwiseProduct(c).sum() - exact;
      CHECK(gap >= -1e-12);
      CHECK(gap <= prev + 1e-12);
      prev = gap;
    }
    CHECK(prev < 5e-3);
  }

  TEST_CASE("lifted problems with scaled-identity costs reduce to scalar Sinkhorn") {
    Rng rng(43);
    const auto p = rng.simplex(3);
    const auto q = rng.simplex(4);
    const Matrix dist = rng.gaussian(3, 4).cwiseAbs();
    const int d = 2;
    const double eps = 0.3;
    const auto r = solve_mw(lifted(p, d), lifted(q, d),
                            {cost_scaled_identity(dist, d), eps, Regularizer::QuantumEntropy},
                            tight());
    const Matrix g = scalar_sinkhorn(p, q, dist.cwiseProduct(dist), eps);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j)
        CHECK((r.coupling(i, j) - g(i, j) * Matrix::Identity(d, d)).norm() < 1e-6);
    CHECK(r.transport_cost == doctest::Approx(d * g.cwiseProduct(dist.cwiseProduct(dist)).sum()).epsilon(1e-6));
  }

  TEST_CASE("scalar entropic solution equals the Gibbs kernel scaling") {
    Rng rng(44);
    const auto p = rng.simplex(4);
    const auto q = rng.simplex(3);
    Matrix c(4, 3);
    BlockMatrix cb(4, 3, 1);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) cb(i, j)(0, 0) = c(i, j) = rng.uniform();
    const double eps = 0.2;
    const auto r = solve_mw(lifted(p, 1), lifted(q, 1), {CostField(cb), eps, Regularizer::QuantumEntropy}, tight());
    const Matrix kernel = (-c / eps).array().exp().matrix();
    const Matrix oracle = ras_oracle(kernel, Eigen::Map<const Vector>(p.data(), 4),
                                     Eigen::Map<const Vector>(q.data(), 3));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(r.coupling(i, j)(0, 0) - oracle(i, j)) < 1e-7);
  }

  TEST_CASE("objective pieces") {
    Rng rng(45);
    const CostField cost(random_spd_blocks(rng, 2, 3, 2));
    const auto [p, q] = rng.coupled_marginals(2, 3, 2);
    const BlockMatrix g = random_coupling(rng, p, q);
    double direct = 0.0;
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 3; ++j) direct += (cost(i, j) * g(i, j)).trace();
    CHECK(transport_cost(cost, g) == doctest::Approx(direct));
    CHECK(mw_objective({cost, 0.0, Regularizer::None}, g) == doctest::Approx(direct));
    const Matrix a = rng.spd(3);
    const Eig e = sym_eig(a);
    double ent = 0.0;
    for (int k = 0; k < 3; ++k) ent += e.values(k) * std::log(e.values(k)) - e.values(k);
    CHECK(regularizer_value(Regularizer::QuantumEntropy, a) == doctest::Approx(ent));
    CHECK(regularizer_value(Regularizer::SquaredFrobenius, a) == doctest::Approx(0.5 * a.squaredNorm()));
    const Matrix u = rng.symmetric(3);
    for (auto reg : {Regularizer::QuantumEntropy, Regularizer::SquaredFrobenius}) {
      const double h = 1e-6;
      const double fd = (regularizer_value(reg, a + h * u) - regularizer_value(reg, a - h * u)) / (2 * h);
      CHECK(frob_dot(regularizer_gradient(reg, a), u) == doctest::Approx(fd).epsilon(1e-7));
      const Matrix gfd = (regularizer_gradient(reg, a + h * u) - regularizer_gradient(reg, a - h * u)) / (2 * h);
      CHECK((regularizer_hessian(reg, a, u) - gfd).norm() < 1e-6 * (1.0 + gfd.norm()));
    }
  }

  TEST_CASE("cost validation") {
    BlockMatrix c(1, 1, 2);
    c(0, 0) << 1, 0, 0, -1;
    CHECK_THROWS_AS(CostField{c}, Error);
    std::vector<Matrix> xs{Matrix::Ones(2, 3)};
    std::vector<Matrix> ys{Matrix::Zero(2, 3)};
    const CostField od = cost_outer_difference(xs, ys);
    CHECK((od(0, 0) - Matrix::Constant(2, 2, 3.0)).norm() < 1e-14);
    Vector a(2), b(2);
    a << 0, 0;
    b << 3, 4;
    CHECK(cost_grid_sq_euclidean({a}, {b}, 2)(0, 0)(1, 1) == doctest::Approx(25.0));
  }

  TEST_CASE("continuation records its epsilon path") {
    Rng rng(46);
    const auto p = rng.simplex(3);
    const auto q = rng.simplex(3);
    MwOptions o = tight();
    o.continuation = true;
    o.continuation_start = 0.4;
    const auto r = solve_mw(lifted(p, 2), lifted(q, 2),
                            {cost_scaled_identity(rng.gaussian(3, 3).cwiseAbs(), 2), 0.1,
                             Regularizer::QuantumEntropy},
                            o);
    REQUIRE(r.epsilon_path.size() >= 2);
    CHECK(r.epsilon_path.back() == doctest::Approx(0.1));
    for (std::size_t k = 1; k < r.epsilon_path.size(); ++k)
      CHECK(r.epsilon_path[k] < r.epsilon_path[k - 1]);
  }
}
