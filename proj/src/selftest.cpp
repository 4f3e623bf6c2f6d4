#include "bspdot/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bspdot::io {

namespace {

std::string detail(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

BlockMatrix spd_blocks(Rng& rng, int m, int n, int d) {
  BlockMatrix a(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.spd(d, 0.2);
  return a;
}

BlockMatrix symmetric_blocks(Rng& rng, int m, int n, int d) {
  BlockMatrix a(m, n, d);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = rng.symmetric(d);
  return a;
}

BalanceOptions tight_balance() {
  BalanceOptions b;
  b.tol = 1e-14;
  b.max_iter = 5000;
  return b;
}

struct Instance {
  BlockMarginal p;
  BlockMarginal q;
  BlockMatrix gamma;
};

Instance instance(Rng& rng, int m, int n, int d) {
  auto [p, q] = rng.coupled_marginals(m, n, d);
  BlockMatrix gamma = mbalance(spd_blocks(rng, m, n, d), p, q, tight_balance()).balanced;
  return {std::move(p), std::move(q), std::move(gamma)};
}

double max_block_sum(const BlockMatrix& u) {
  double worst = 0.0;
  for (int i = 0; i < u.rows(); ++i) worst = std::max(worst, u.row_sum(i).norm());
  for (int j = 0; j < u.cols(); ++j) worst = std::max(worst, u.col_sum(j).norm());
  return worst;
}

SelftestLine projection_line(Rng& rng) {
  double idem = 0.0;
  double tang = 0.0;
  for (int t = 0; t < 5; ++t) {
    const Instance x = instance(rng, 3, 4, 2);
    const BlockMatrix s = symmetric_blocks(rng, 3, 4, 2);
    const BlockMatrix u = project_tangent(x.gamma, s).tangent;
    idem = std::max(idem, (project_tangent(x.gamma, u).tangent - u).norm() / u.norm());
    tang = std::max(tang, max_block_sum(u) / u.norm());
  }
  return {"projection", idem < 1e-9 && tang < 1e-9,
          detail("idempotence %.2g, tangency %.2g (<1e-9)", idem, tang)};
}

SelftestLine retraction_line(Rng& rng) {
  double worst = 1e9;
  for (int t = 0; t < 3; ++t) {
    const Instance x = instance(rng, 3, 3, 2);
    BlockMatrix u = project_tangent(x.gamma, symmetric_blocks(rng, 3, 3, 2)).tangent;
    u *= 1.0 / std::sqrt(metric(x.gamma, u, u));
    const double e1 = (retract(x.gamma, 1e-2 * u, x.p, x.q, tight_balance()) -
                       (x.gamma + 1e-2 * u)).norm();
    const double e2 = (retract(x.gamma, 1e-3 * u, x.p, x.q, tight_balance()) -
                       (x.gamma + 1e-3 * u)).norm();
    worst = std::min(worst, std::log10(e1 / e2));
  }
  return {"retraction", worst >= 1.9, detail("min log-log slope %.3f (>=1.9)", worst)};
}

SelftestLine derivative_line(Rng& rng) {
  double grad = 0.0;
  double hess = 0.0;
  for (int t = 0; t < 2; ++t) {
    const Instance x = instance(rng, 3, 4, 2);
    const CouplingManifold manifold(x.p, x.q, tight_balance());
    std::vector<BlockMatrix> dirs;
    for (int k = 0; k < 2; ++k)
      dirs.push_back(project_tangent(x.gamma, symmetric_blocks(rng, 3, 4, 2)).tangent);
    const RegularizedProblem problem{CostField(spd_blocks(rng, 3, 4, 2)), 0.1,
                                     Regularizer::QuantumEntropy};
    grad = std::max(grad, gradient_check(mw_problem(problem), manifold, x.gamma, dirs));
    const auto dx = DistanceMatrix::from_points(rng.gaussian(3, 2));
    const auto dy = DistanceMatrix::from_points(rng.gaussian(4, 2));
    grad = std::max(grad, gradient_check(mgw_problem(dx, dy, GwLoss{}), manifold, x.gamma, dirs));
    const BlockMatrix egrad = mw_euclidean_gradient(problem, x.gamma);
    const BlockMatrix& u = dirs[0];
    const BlockMatrix& v = dirs[1];
    const double a = metric(
        x.gamma, riemannian_hessian(x.gamma, egrad, mw_euclidean_hessian(problem, x.gamma, u), u),
        v);
    const double b = metric(
        x.gamma, u,
        riemannian_hessian(x.gamma, egrad, mw_euclidean_hessian(problem, x.gamma, v), v));
    hess = std::max(hess, std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}));
  }
  return {"derivatives", grad < 1e-5 && hess < 1e-6,
          detail("gradient rel err %.3g (<1e-5), Hessian asymmetry %.3g (<1e-6)", grad, hess)};
}

SelftestLine balance_line(Rng& rng) {
  int worst = 0;
  bool ok = true;
  for (int t = 0; t < 3; ++t) {
    const auto p = rng.diagonal_marginal(5, 2);
    const auto q = rng.diagonal_marginal(5, 2);
    BalanceOptions opts;
    opts.max_iter = 200;
    const auto r = mbalance_run(spd_blocks(rng, 5, 5, 2), p, q, opts);
    ok = ok && r.report.converged;
    worst = std::max(worst, r.report.iterations);
  }
  return {"mbalance", ok, detail("gap<1e-10 in at most %.0f iterations", worst)};
}

SelftestLine sinkhorn_line(Rng& rng) {
  const int m = 4;
  const int n = 5;
  const auto pw = rng.simplex(m);
  const auto qw = rng.simplex(n);
  const Matrix dist = rng.gaussian(m, n).cwiseAbs();
  const double eps = 0.5;
  MwOptions opts;
  opts.solver.method = Method::ConjugateGradient;
  opts.solver.cg_rule = CgRule::PolakRibierePlus;
  opts.solver.line_search = LineSearch::Wolfe;
  opts.solver.grad_tol = 1e-10;
  opts.solver.max_iter = 5000;
  opts.balance = tight_balance();
  const auto r = solve_mw(BlockMarginal::lifted(pw, 1), BlockMarginal::lifted(qw, 1),
                          {cost_scaled_identity(dist, 1), eps, Regularizer::QuantumEntropy},
                          opts);
  const Matrix oracle = scalar_sinkhorn(pw, qw, dist.cwiseProduct(dist), eps);
  double diff = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) diff = std::max(diff, std::abs(r.coupling(i, j)(0, 0) - oracle(i, j)));
  const bool converged = r.report.reason == Termination::Converged;
  return {"sinkhorn_d1", converged && diff < 1e-6,
          std::string(to_string(r.report.reason)) + ", " +
              detail("max entrywise difference %.3g (<1e-6)", diff)};
}

SelftestLine metric_line() {
  Matrix dist(3, 3);
  dist << 0, 1, 2, 1, 0, 1.5, 2, 1.5, 0;
  MetricCheckOptions opts;
  opts.trace_trials = 20;
  opts.triples = 2;
  opts.epsilon = 1e-2;
  opts.seed = 7;
  opts.solve.solver.method = Method::ConjugateGradient;
  opts.solve.solver.cg_rule = CgRule::PolakRibierePlus;
  opts.solve.solver.line_search = LineSearch::Wolfe;
  opts.solve.solver.grad_tol = 1e-9;
  opts.solve.solver.max_iter = 5000;
  const AxiomReport r = check_metric_axioms(cost_scaled_identity(dist, 2), opts);
  const bool ok = r.cost_conditions() && r.empirical_run && r.max_symmetry_error < 1e-5 &&
                  r.min_triangle_slack >= -1e-6;
  return {"metric_axioms", ok,
          detail("symmetry %.3g (<1e-5), triangle slack %.3g (>=-1e-6)", r.max_symmetry_error,
                 r.min_triangle_slack)};
}

}  // namespace

std::vector<SelftestLine> selftest() {
  Rng rng(20240601);
  std::vector<SelftestLine> lines;
  auto guarded = [&lines](const char* name, auto&& run) {
    try {
      lines.push_back(run());
    } catch (const std::exception& e) {
      lines.push_back({name, false, e.what()});
    }
  };
  guarded("projection", [&] { Rng r = rng.split(1); return projection_line(r); });
  guarded("retraction", [&] { Rng r = rng.split(2); return retraction_line(r); });
  guarded("derivatives", [&] { Rng r = rng.split(3); return derivative_line(r); });
  guarded("mbalance", [&] { Rng r = rng.split(4); return balance_line(r); });
  guarded("sinkhorn_d1", [&] { Rng r = rng.split(5); return sinkhorn_line(r); });
  guarded("metric_axioms", [] { return metric_line(); });
  return lines;
}

}  // namespace bspdot::io
