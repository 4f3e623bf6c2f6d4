#include "bspdot/coupling.hpp"
#include "bspdot/error.hpp"
#include "bspdot/random.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numeric>

using namespace bspdot;
using namespace bspdot::testing;

namespace {

double block_sum_norm(const BlockMatrix& u) {
  double worst = 0.0;
  for (int i = 0; i < u.rows(); ++i) worst = std::max(worst, u.row_sum(i).norm());
  for (int j = 0; j < u.cols(); ++j) worst = std::max(worst, u.col_sum(j).norm());
  return worst;
}

bool all_spd(const BlockMatrix& g) {
  for (int i = 0; i < g.rows(); ++i)
    for (int j = 0; j < g.cols(); ++j)
      if (!is_spd(g(i, j))) return false;
  return true;
}

}  // namespace

TEST_SUITE("coupling") {
  TEST_CASE("balancing reaches the marginals and keeps blocks SPD") {
    Rng rng(11);
    for (int t = 0; t < 10; ++t) {
      const int m = 2 + rng.index(4);
      const int n = 2 + rng.index(4);
      const int d = 1 + rng.index(3);
      const auto [p, q] = rng.coupled_marginals(m, n, d);
      const auto r = mbalance_run(random_spd_blocks(rng, m, n, d), p, q);
      CHECK(r.report.converged);
      CHECK(constraint_gap(r.balanced, p, q) <= 1e-10);
      CHECK(all_spd(r.balanced));
    }
  }

  TEST_CASE("scalar balancing equals alternating normalization") {
    Rng rng(12);
    const auto pw = rng.simplex(4);
    const auto qw = rng.simplex(3);
    Matrix a(4, 3);
    BlockMatrix ab(4, 3, 1);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) ab(i, j)(0, 0) = a(i, j) = 0.2 + rng.uniform();
    BalanceOptions opts;
    opts.tol = 1e-15;
    opts.max_iter = 10000;
    const auto r = mbalance_run(ab, lifted(pw, 1), lifted(qw, 1), opts);
    const Matrix oracle = ras_oracle(a, Eigen::Map<const Vector>(pw.data(), 4),
                                     Eigen::Map<const Vector>(qw.data(), 3));
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(r.balanced(i, j)(0, 0) == doctest::Approx(oracle(i, j)).epsilon(1e-10));
  }

  TEST_CASE("balancing commutes with permutations of the marginals") {
    Rng rng(13);
    const int m = 4;
    const int n = 3;
    const int d = 2;
    const auto [p, q] = rng.coupled_marginals(m, n, d);
    const BlockMatrix a = random_spd_blocks(rng, m, n, d);
    const std::vector<int> perm{2, 0, 3, 1};
    std::vector<Matrix> pb;
    BlockMatrix ap(m, n, d);
    for (int i = 0; i < m; ++i) {
      pb.push_back(p[perm[i]]);
      for (int j = 0; j < n; ++j) ap(i, j) = a(perm[i], j);
    }
    BalanceOptions opts;
    opts.tol = 1e-14;
    opts.max_iter = 5000;
    const auto r = mbalance(a, p, q, opts);
    const auto rp = mbalance(ap, BlockMarginal(pb), q, opts);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) CHECK((rp.balanced(i, j) - r.balanced(perm[i], j)).norm() < 1e-10);
  }

  TEST_CASE("an iteration cap is reported by mbalance_run and thrown by mbalance") {
    Rng rng(14);
    const auto [p, q] = rng.coupled_marginals(4, 4, 2);
    const BlockMatrix a = random_spd_blocks(rng, 4, 4, 2);
    BalanceOptions opts;
    opts.max_iter = 1;
    opts.tol = 1e-15;
    opts.polish_below = 0.0;
    const auto r = mbalance_run(a, p, q, opts);
    CHECK_FALSE(r.report.converged);
    CHECK(r.report.final_gap > opts.tol);
    CHECK_THROWS_AS(mbalance(a, p, q, opts), Error);
  }

  TEST_CASE("tangent projection is an orthogonal projector onto zero block sums") {
    Rng rng(15);
    for (int t = 0; t < 10; ++t) {
      const int m = 2 + rng.index(3);
      const int n = 2 + rng.index(3);
      const int d = 1 + rng.index(3);
      const auto [p, q] = rng.coupled_marginals(m, n, d);
      const BlockMatrix g = random_coupling(rng, p, q);
      const BlockMatrix s = random_symmetric_blocks(rng, m, n, d);
      const Projection pr = project_tangent(g, s);
      CHECK(block_sum_norm(pr.tangent) < 1e-10 * s.norm());
      CHECK((project_tangent(g, pr.tangent).tangent - pr.tangent).norm() < 1e-10 * s.norm());
      const BlockMatrix w = project_tangent(g, random_symmetric_blocks(rng, m, n, d)).tangent;
      CHECK(std::abs(metric(g, s - pr.tangent, w)) < 1e-9 * s.norm() * w.norm() * 1e3);
      CHECK((project_tangent(g, s, ProjectionMethod::Svd).tangent - pr.tangent).norm() <
            1e-8 * s.norm());
    }
  }

  TEST_CASE("Riemannian gradient represents the Euclidean differential") {
    Rng rng(16);
    const auto [p, q] = rng.coupled_marginals(3, 3, 2);
    const BlockMatrix g = random_coupling(rng, p, q);
    const BlockMatrix egrad = random_symmetric_blocks(rng, 3, 3, 2);
    const BlockMatrix rg = riemannian_gradient(g, egrad).tangent;
    for (int k = 0; k < 3; ++k) {
      const BlockMatrix u = project_tangent(g, random_symmetric_blocks(rng, 3, 3, 2)).tangent;
      CHECK(metric(g, rg, u) == doctest::Approx(egrad.dot(u)).epsilon(1e-9));
    }
  }

  TEST_CASE("retraction stays on the manifold and fixes zero steps") {
    Rng rng(17);
    const auto [p, q] = rng.coupled_marginals(3, 4, 2);
    const BlockMatrix g = random_coupling(rng, p, q);
    BlockMatrix u = project_tangent(g, random_symmetric_blocks(rng, 3, 4, 2)).tangent;
    u *= 0.3 / std::sqrt(metric(g, u, u));
    const BlockMatrix r = retract(g, u, p, q);
    CHECK(constraint_gap(r, p, q) <= 1e-10);
    CHECK(all_spd(r));
    CHECK((retract(g, BlockMatrix(3, 4, 2), p, q) - g).norm() < 1e-9);
    const BlockMatrix far = exp_step(g, 50.0 * u);
    CHECK(far.all_finite());
  }

  TEST_CASE("initial coupling is feasible") {
    Rng rng(18);
    const auto p = rng.spd_marginal(3, 2);
    const auto q = rng.spd_marginal(4, 2);
    const CouplingManifold manifold(p, q);
    const BlockMatrix g = manifold.initial_point();
    CHECK(manifold.residual(g) <= 1e-10);
  }

  TEST_CASE("trace-constrained variant") {
    Rng rng(19);
    const auto pw = rng.simplex(3);
    const auto qw = rng.simplex(4);
    const BlockMatrix g = trbalance(random_spd_blocks(rng, 3, 4, 2), pw, qw);
    CHECK(trace_constraint_gap(g, pw, qw) <= 1e-10);
    const TraceProjection pr = project_tangent_trace(g, random_symmetric_blocks(rng, 3, 4, 2));
    for (int i = 0; i < 3; ++i) CHECK(std::abs(pr.tangent.row_sum(i).trace()) < 1e-10);
    for (int j = 0; j < 4; ++j) CHECK(std::abs(pr.tangent.col_sum(j).trace()) < 1e-10);
    const TraceCouplingManifold manifold(pw, qw, 2);
    CHECK(manifold.residual(manifold.initial_point()) < 1e-12);
  }
}
