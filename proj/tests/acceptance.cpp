// Acceptance suite: one line per criterion. Pass a criterion number to run a
// single check (ctest registers one test per criterion).

#include "bspdot/applications.hpp"
#include "bspdot/barycenter.hpp"
#include "bspdot/coupling.hpp"
#include "bspdot/error.hpp"
#include "bspdot/gw.hpp"
#include "bspdot/ot.hpp"
#include "bspdot/random.hpp"
#include "bspdot/simplex.hpp"
#include "bspdot/solver.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace bspdot;
using namespace bspdot::testing;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

std::string fmt(const char* format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* format, ...) {
  char buf[512];
  va_list args;
  va_start(args, format);
  std::vsnprintf(buf, sizeof buf, format, args);
  va_end(args);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

MwOptions tight_options(double grad_tol = 1e-10, int max_iter = 20000) {
  MwOptions o;
  o.solver.method = Method::ConjugateGradient;
  o.solver.cg_rule = CgRule::PolakRibierePlus;
  o.solver.line_search = LineSearch::Wolfe;
  o.solver.grad_tol = grad_tol;
  o.solver.max_iter = max_iter;
  o.balance.tol = 1e-12;
  return o;
}

std::vector<Vector> random_points(Rng& rng, int count, int dim) {
  std::vector<Vector> pts;
  for (int k = 0; k < count; ++k) pts.push_back(rng.gaussian(dim, 1).col(0));
  return pts;
}

double max_tangency(const BlockMatrix& u) {
  double worst = 0.0;
  for (int i = 0; i < u.rows(); ++i) worst = std::max(worst, u.row_sum(i).norm());
  for (int j = 0; j < u.cols(); ++j) worst = std::max(worst, u.col_sum(j).norm());
  return worst;
}

BlockMatrix unit_scale(BlockMatrix s) {
  double top = 0.0;
  for (int i = 0; i < s.rows(); ++i)
    for (int j = 0; j < s.cols(); ++j) top = std::max(top, s(i, j).norm());
  s *= 1.0 / top;
  return s;
}

// ---------------------------------------------------------------------------

Outcome kronecker_lift() {
  Rng rng(101);
  double worst3 = 0.0;
  double worst4 = 0.0;
  double worst_identity = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < 10; ++t) {
    const int m = 2 + rng.index(5);
    const int n = 2 + rng.index(5);
    const int d = 2 + rng.index(2);
    const auto p = rng.simplex(m);
    const auto q = rng.simplex(n);
    const auto xs = random_points(rng, m, d);
    const auto ys = random_points(rng, n, d);
    std::vector<Matrix> xm(xs.begin(), xs.end());
    std::vector<Matrix> ym(ys.begin(), ys.end());
    const CostField cost = cost_outer_difference(xm, ym);
    const ScalarPlan exact = scalar_ot_exact(p, q, cost.traces());

    MwOptions opts = tight_options(1e-7, 200);
    RegularizedProblem problem{cost, 1e-3, Regularizer::QuantumEntropy};
    const auto r3 = solve_mw(lifted(p, d), lifted(q, d), problem, opts);
    opts.warm_start = r3.coupling;
    problem.epsilon = 1e-4;
    const auto r4 = solve_mw(lifted(p, d), lifted(q, d), problem, opts);
    worst3 = std::max(worst3, std::abs(r3.transport_cost - exact.value) / exact.value);
    worst4 = std::max(worst4, std::abs(r4.transport_cost - exact.value) / exact.value);

    // Companion: scaled-identity cost with the same squared distances.
    Matrix dist(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dist(i, j) = (xs[i] - ys[j]).norm();
    MwOptions iopts = tight_options(1e-7, 200);
    const RegularizedProblem iproblem{cost_scaled_identity(dist, d), 1e-4,
                                      Regularizer::QuantumEntropy};
    const auto ri = solve_mw(lifted(p, d), lifted(q, d), iproblem, iopts);
    worst_identity =
        std::max(worst_identity, std::abs(ri.transport_cost - d * exact.value) / (d * exact.value));
  }
  const double elapsed = seconds_since(t0);
  return {worst3 <= 0.02 && worst4 <= 0.005 && elapsed < 30.0,
          fmt("max rel dev from W2^2: %.3g at eps=1e-3 (<=0.02), %.3g at eps=1e-4 (<=0.005); "
              "scaled-identity companion vs d*W2^2: %.3g; %.1fs",
              worst3, worst4, worst_identity, elapsed)};
}

Outcome sinkhorn_oracle() {
  Rng rng(202);
  double worst = 0.0;
  const auto t0 = std::chrono::steady_clock::now();
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + rng.index(7);
    const int n = 2 + rng.index(7);
    const double eps = (t % 2 == 0) ? 0.05 : 0.5;
    const auto p = rng.simplex(m);
    const auto q = rng.simplex(n);
    Matrix c(m, n);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) c(i, j) = rng.uniform();
    const Matrix reference = scalar_sinkhorn(p, q, c, eps);
    BlockMatrix cb(m, n, 1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) cb(i, j)(0, 0) = c(i, j);
    const RegularizedProblem problem{CostField(cb), eps, Regularizer::QuantumEntropy};
    const auto r = solve_mw(lifted(p, 1), lifted(q, 1), problem, tight_options(1e-9));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(r.coupling(i, j)(0, 0) - reference(i, j)));
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-6 && elapsed < 60.0,
          fmt("max entrywise |diff| %.3g (<1e-6); %.1fs", worst, elapsed)};
}

Outcome unique_optimum() {
  Rng rng(303);
  double worst = 0.0;
  for (int inst = 0; inst < 5; ++inst) {
    const int m = 3 + rng.index(2);
    const int n = 3 + rng.index(2);
    const int d = 2;
    const auto [p, q] = rng.coupled_marginals(m, n, d);
    BlockMatrix c = random_spd_blocks(rng, m, n, d, 0.05);
    const RegularizedProblem problem{CostField(c), 0.5, Regularizer::QuantumEntropy};
    std::vector<BlockMatrix> solutions;
    for (int s = 0; s < 5; ++s) {
      MwOptions opts = tight_options(1e-11);
      opts.warm_start = random_coupling(rng, p, q);
      solutions.push_back(solve_mw(p, q, problem, opts).coupling);
    }
    for (std::size_t a = 0; a < solutions.size(); ++a)
      for (std::size_t b = a + 1; b < solutions.size(); ++b)
        worst = std::max(worst, (solutions[a] - solutions[b]).norm());
  }
  return {worst < 1e-6, fmt("max pairwise distance %.3g (<1e-6)", worst)};
}

Outcome metric_axioms() {
  // Regular pentagon with side 0.04: at eps = 1e-4 the nearest-neighbour
  // entropic leak exp(-c/eps) is about e^-16, so MW(p,p) is resolvable.
  const int n = 5;
  const double side = 0.04;
  const double radius = side / (2.0 * std::sin(M_PI / n));
  Matrix dist(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      dist(i, j) = 2.0 * radius * std::abs(std::sin(M_PI * (i - j) / n));
  MetricCheckOptions opts;
  opts.triples = 50;
  opts.epsilon = 1e-4;
  opts.seed = 405;
  opts.solve = tight_options(1e-10, 5000);
  opts.solve.continuation = true;
  const AxiomReport report = check_metric_axioms(cost_scaled_identity(dist, 2), opts);
  const bool pass = report.cost_conditions() && report.empirical_run &&
                    report.max_symmetry_error < 1e-6 && report.max_self_distance < 1e-4 &&
                    report.min_triangle_slack >= -1e-6;
  return {pass, fmt("symmetry %.3g (<1e-6), MW(p,p) %.3g (<1e-4), triangle slack %.3g (>=-1e-6)",
                    report.max_symmetry_error, report.max_self_distance,
                    report.min_triangle_slack)};
}

Outcome retraction_order() {
  Rng rng(505);
  double worst = 1e9;
  BalanceOptions tight;
  tight.tol = 1e-14;
  tight.max_iter = 5000;
  for (int kind = 0; kind < 2; ++kind) {
    for (int t = 0; t < 10; ++t) {
      const int m = 3 + rng.index(3);
      const int n = 3 + rng.index(3);
      const int d = 2 + rng.index(2);
      const auto [p, q] = kind == 0
                              ? std::pair{rng.diagonal_marginal(m, d), rng.diagonal_marginal(n, d)}
                              : rng.coupled_marginals(m, n, d);
      const BlockMatrix gamma = random_coupling(rng, p, q, 1e-14);
      BlockMatrix u = project_tangent(gamma, random_symmetric_blocks(rng, m, n, d)).tangent;
      u *= 1.0 / std::sqrt(metric(gamma, u, u));
      std::vector<double> hs;
      std::vector<double> errs;
      for (double h : {1e-1, 1e-2, 1e-3, 1e-4}) {
        const BlockMatrix r = retract(gamma, h * u, p, q, tight);
        hs.push_back(h);
        errs.push_back((r - (gamma + h * u)).norm());
      }
      worst = std::min(worst, loglog_slope(hs, errs));
    }
  }
  return {worst >= 1.9, fmt("min log-log slope %.3f (>=1.9) over 20 trials", worst)};
}

Outcome balance_convergence() {
  Rng rng(606);
  int worst_iters = 0;
  bool all_converged = true;
  for (auto [m, n, d] : {std::tuple{5, 5, 2}, std::tuple{10, 10, 5}}) {
    for (int t = 0; t < 5; ++t) {
      const auto p = rng.diagonal_marginal(m, d);
      const auto q = rng.diagonal_marginal(n, d);
      BalanceOptions opts;
      opts.tol = 1e-10;
      opts.max_iter = 200;
      const auto r = mbalance_run(random_spd_blocks(rng, m, n, d), p, q, opts);
      all_converged = all_converged && r.report.converged;
      worst_iters = std::max(worst_iters, r.report.iterations);
    }
  }
  double ras_diff = 0.0;
  for (int t = 0; t < 5; ++t) {
    const int m = 2 + rng.index(6);
    const int n = 2 + rng.index(6);
    const auto pw = rng.simplex(m);
    const auto qw = rng.simplex(n);
    Matrix a(m, n);
    BlockMatrix ab(m, n, 1);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) ab(i, j)(0, 0) = a(i, j) = 0.1 + rng.uniform();
    BalanceOptions opts;
    opts.tol = 1e-14;
    opts.max_iter = 10000;
    const auto r = mbalance_run(ab, lifted(pw, 1), lifted(qw, 1), opts);
    const Matrix oracle = ras_oracle(a, Eigen::Map<const Vector>(pw.data(), m),
                                     Eigen::Map<const Vector>(qw.data(), n));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        ras_diff = std::max(ras_diff, std::abs(r.balanced(i, j)(0, 0) - oracle(i, j)));
  }
  return {all_converged && worst_iters <= 200 && ras_diff <= 1e-10,
          fmt("gap<1e-10 reached: %s, worst %d iterations (<=200); d=1 vs RAS %.3g (<=1e-10)",
              all_converged ? "yes" : "no", worst_iters, ras_diff)};
}

Outcome derivative_checks() {
  Rng rng(707);
  double worst_grad = 0.0;
  double worst_mgw = 0.0;
  double worst_sym = 0.0;
  for (int t = 0; t < 5; ++t) {
    const int m = 3;
    const int n = 4;
    const int d = 2;
    const auto [p, q] = rng.coupled_marginals(m, n, d);
    const CouplingManifold manifold(p, q, BalanceOptions{1e-14, 5000});
    const BlockMatrix gamma = random_coupling(rng, p, q, 1e-14);
    const CostField cost(random_spd_blocks(rng, m, n, d, 0.05));
    std::vector<BlockMatrix> dirs;
    for (int k = 0; k < 3; ++k)
      dirs.push_back(project_tangent(gamma, random_symmetric_blocks(rng, m, n, d)).tangent);
    const auto dx = DistanceMatrix::from_points(rng.gaussian(m, 2));
    const auto dy = DistanceMatrix::from_points(rng.gaussian(n, 3));
    const DistanceMatrix dy_pos(dy.values().array() + 0.5);
    worst_mgw = std::max(worst_mgw, gradient_check(mgw_problem(dx, dy, GwLoss{}), manifold,
                                                   gamma, dirs));
    worst_mgw = std::max(worst_mgw, gradient_check(mgw_problem(dx, dy_pos, GwLoss{GwLossKind::Kl}),
                                                   manifold, gamma, dirs));
    for (auto reg : {Regularizer::None, Regularizer::QuantumEntropy}) {
      const RegularizedProblem problem{cost, reg == Regularizer::None ? 0.0 : 0.1, reg};
      worst_grad = std::max(worst_grad, gradient_check(mw_problem(problem), manifold, gamma, dirs));
      const BlockMatrix egrad = mw_euclidean_gradient(problem, gamma);
      for (int k = 0; k + 1 < 3; ++k) {
        const BlockMatrix& u = dirs[k];
        const BlockMatrix& v = dirs[k + 1];
        const BlockMatrix hu =
            riemannian_hessian(gamma, egrad, mw_euclidean_hessian(problem, gamma, u), u);
        const BlockMatrix hv =
            riemannian_hessian(gamma, egrad, mw_euclidean_hessian(problem, gamma, v), v);
        const double a = metric(gamma, hu, v);
        const double b = metric(gamma, u, hv);
        worst_sym = std::max(worst_sym, std::abs(a - b) / std::max({std::abs(a), std::abs(b),
                                                                    1e-300}));
      }
    }
  }
  return {worst_grad < 1e-5 && worst_mgw < 1e-5 && worst_sym < 1e-6,
          fmt("gradient FD rel err linear/entropic %.3g, MGW squared/KL %.3g (<1e-5); "
              "Hessian asymmetry %.3g (<1e-6)",
              worst_grad, worst_mgw, worst_sym)};
}

Outcome projection_checks() {
  Rng rng(808);
  double idem = 0.0;
  double tang = 0.0;
  double orth = 0.0;
  double gauge = 0.0;
  double svd_match = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + rng.index(4);
    const int n = 2 + rng.index(4);
    const int d = 1 + rng.index(3);
    const auto [p, q] = rng.coupled_marginals(m, n, d);
    const BlockMatrix gamma = random_coupling(rng, p, q);
    const BlockMatrix s = unit_scale(random_symmetric_blocks(rng, m, n, d));
    const Projection pr = project_tangent(gamma, s);
    const Projection again = project_tangent(gamma, pr.tangent);
    idem = std::max(idem, (again.tangent - pr.tangent).norm() / pr.tangent.norm());
    tang = std::max(tang, max_tangency(pr.tangent));
    const BlockMatrix normal = s - pr.tangent;
    const BlockMatrix w = project_tangent(gamma, random_symmetric_blocks(rng, m, n, d)).tangent;
    orth = std::max(orth, std::abs(metric(gamma, normal, w)) /
                              std::sqrt(metric(gamma, normal, normal) * metric(gamma, w, w)));
    const Matrix delta = rng.symmetric(d);
    BlockMatrix shifted(m, n, d);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        shifted(i, j) = sym(s(i, j)) + sym(gamma(i, j) * ((pr.lambda[i] + delta) +
                                                          (pr.theta[j] - delta)) * gamma(i, j));
    gauge = std::max(gauge, (shifted - pr.tangent).norm() / pr.tangent.norm());
    const Projection svd = project_tangent(gamma, s, ProjectionMethod::Svd);
    svd_match = std::max(svd_match, (svd.tangent - pr.tangent).norm() / pr.tangent.norm());
  }
  // Tangent-space dimension by numerical rank of the block-sum operator on svec coordinates.
  bool dims_ok = true;
  std::string dims;
  for (auto [m, n, d] : {std::tuple{3, 3, 2}, std::tuple{4, 2, 3}}) {
    const int k = svec_size(d);
    Matrix op = Matrix::Zero((m + n) * k, m * n * k);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j)
        for (int a = 0; a < k; ++a) {
          op(i * k + a, (i * n + j) * k + a) = 1.0;
          op((m + j) * k + a, (i * n + j) * k + a) = 1.0;
        }
    Eigen::JacobiSVD<Matrix> svd(op);
    const auto& sv = svd.singularValues();
    int rank = 0;
    for (Eigen::Index r = 0; r < sv.size(); ++r)
      if (sv(r) > 1e-10 * sv(0)) ++rank;
    const int null_dim = m * n * k - rank;
    const int expected = (m - 1) * (n - 1) * k;
    dims_ok = dims_ok && null_dim == expected;
    dims += fmt(" (%d,%d,%d):%d/%d", m, n, d, null_dim, expected);
  }
  const bool pass = idem <= 1e-9 && tang <= 1e-9 && orth <= 1e-8 && gauge <= 1e-12 &&
                    svd_match <= 1e-8 && dims_ok;
  return {pass, fmt("idempotence %.2g, tangency %.2g, orthogonality %.2g, gauge %.2g, "
                    "auto-vs-svd %.2g; null dims%s",
                    idem, tang, orth, gauge, svd_match, dims.c_str())};
}

Outcome barycenter_checks() {
  Rng rng(909);
  // Envelope gradient against central differences of the value function.
  const int n = 3;
  const int d = 2;
  BarycenterProblem problem;
  problem.support = n;
  problem.epsilon = 0.5;
  const Matrix support_pts = 0.5 * rng.gaussian(n, 2);
  for (int l = 0; l < 2; ++l) {
    const int nl = 3 + l;
    problem.inputs.push_back(mild_marginal(rng, nl, d).as_column());
    const Matrix pts = 0.5 * rng.gaussian(nl, 2);
    Matrix dist(n, nl);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < nl; ++j) dist(i, j) = (support_pts.row(i) - pts.row(j)).norm();
    problem.costs.push_back(cost_scaled_identity(dist, d));
  }
  problem.weights = {0.4, 0.6};
  const MwOptions inner = tight_options(1e-10);
  double worst_fd = 0.0;
  for (int t = 0; t < 3; ++t) {
    const BlockMatrix p = mild_marginal(rng, n, d).as_column();
    BlockMatrix s = random_symmetric_blocks(rng, n, 1, d);
    Matrix mean = Matrix::Zero(d, d);
    for (int i = 0; i < n; ++i) mean += s(i, 0) / n;
    for (int i = 0; i < n; ++i) s(i, 0) -= mean;
    const auto g = barycenter_gradient(problem, p, inner);
    const double predicted = g.egrad.dot(s);
    const double h = 1e-4;
    const double fp = barycenter_gradient(problem, p + h * s, inner, &g.couplings).value;
    const double fm = barycenter_gradient(problem, p - h * s, inner, &g.couplings).value;
    const double fd = (fp - fm) / (2.0 * h);
    worst_fd = std::max(worst_fd, std::abs(fd - predicted) / std::abs(predicted));
  }

  // K = 1: the barycenter of a single marginal is that marginal, up to the
  // entropic blur exp(-C/eps) between distinct support points. Equidistant
  // support keeps every off-diagonal block of the inner optimum well above
  // the SPD floor; the blur must shrink as eps decreases.
  const int m = 4;
  const BlockMarginal target = mild_marginal(rng, m, d);
  Matrix dist = Matrix::Constant(m, m, 0.1);
  dist.diagonal().setZero();
  auto recover = [&](double eps, SolveReport* report) {
    BarycenterProblem single;
    single.support = m;
    single.epsilon = eps;
    single.inputs.push_back(target.as_column());
    single.weights = {1.0};
    single.costs.push_back(cost_scaled_identity(dist, d));
    BarycenterOptions opts;
    opts.outer = tight_options(1e-8, 150).solver;
    opts.inner = tight_options(1e-10, 5000);
    const auto r = solve_barycenter(single, opts);
    if (report != nullptr) *report = r.report;
    double worst = 0.0;
    for (int i = 0; i < m; ++i) worst = std::max(worst, (r.barycenter(i, 0) - target[i]).norm());
    return worst;
  };
  SolveReport report;
  const double recovery = recover(1e-3, &report);
  const double coarse = recover(2e-3, nullptr);
  return {worst_fd < 1e-4 && recovery < 1e-3 && recovery < coarse,
          fmt("gradient FD rel err %.3g (<1e-4); K=1 recovery %.3g (<1e-3) at eps=1e-3 vs %.3g at "
              "eps=2e-3, outer %s after %d iterations",
              worst_fd, recovery, coarse, to_string(report.reason), report.iterations)};
}

Outcome gw_closed_form_checks() {
  Rng rng(1010);
  double worst_stationarity = 0.0;
  double worst_increase = 0.0;
  double diag = 0.0;
  bool clipped = false;
  for (auto kind : {GwLossKind::Squared, GwLossKind::Kl}) {
    for (int k : {1, 2}) {
      const int n = 4;
      const int d = 2;
      const GwLoss loss{kind};
      std::vector<GwInput> inputs;
      for (int l = 0; l < k; ++l) {
        const int nl = 3 + 2 * l;
        Matrix dm = DistanceMatrix::from_points(rng.gaussian(nl, 2)).values();
        if (kind == GwLossKind::Kl) dm.array() += 0.5;
        inputs.push_back({DistanceMatrix(dm), mild_marginal(rng, nl, d)});
      }
      const BlockMarginal pbar = mild_marginal(rng, n, d);
      const std::vector<double> weights = k == 1 ? std::vector<double>{1.0}
                                                 : std::vector<double>{0.3, 0.7};
      GwAverageOptions opts;
      opts.sweeps = 10;
      opts.solver.max_iter = 300;
      opts.balance.tol = 1e-12;
      const auto r = gw_average_distance(inputs, pbar, weights, loss, opts);
      clipped = clipped || r.clipped;
      for (std::size_t s = 1; s < r.objective_trace.size(); ++s)
        worst_increase = std::max(worst_increase, (r.objective_trace[s] - r.objective_trace[s - 1]) /
                                                      std::abs(r.objective_trace[s - 1]));
      // Independent evaluation of the total objective for an arbitrary matrix.
      auto total = [&](const Matrix& dbar) {
        double v = 0.0;
        for (int l = 0; l < k; ++l)
          v += weights[l] * brute_mgw(dbar, inputs[l].distances.values(), kind, r.couplings[l]);
        return v;
      };
      const Matrix dbar = r.average.values();
      const double scale = std::abs(total(dbar));
      for (int i = 0; i < n; ++i)
        for (int ip = 0; ip < n; ++ip) {
          if (kind == GwLossKind::Squared && i == ip) {
            diag = std::max(diag, std::abs(dbar(i, i)));
            continue;
          }
          const double h = 1e-5 * (1.0 + dbar(i, ip));
          Matrix plus = dbar;
          Matrix minus = dbar;
          plus(i, ip) += h;
          minus(i, ip) -= h;
          const double partial = (total(plus) - total(minus)) / (2.0 * h);
          worst_stationarity = std::max(worst_stationarity, std::abs(partial) / scale);
        }
    }
  }
  return {worst_stationarity < 1e-8 && worst_increase <= 0.0 && diag == 0.0,
          fmt("max |dJ/dD_ii'|/J %.3g (<1e-8); max relative objective increase over 10 sweeps "
              "%.3g (<=0); squared-loss diagonal %.3g; clipping %s",
              worst_stationarity, worst_increase, diag, clipped ? "activated" : "inactive")};
}

Outcome mds_recovery() {
  Rng rng(1111);
  std::vector<std::pair<const char*, Matrix>> shapes;
  Matrix line(6, 2);
  for (int i = 0; i < 6; ++i) line.row(i) << 0.3 * i - 0.2, 0.5 * (0.3 * i) + 1.0;
  shapes.emplace_back("line", line);
  Matrix square(4, 2);
  square << 0, 0, 1, 0, 1, 1, 0, 1;
  shapes.emplace_back("square", square);
  Matrix ring(12, 2);
  for (int i = 0; i < 12; ++i) {
    const double a = 2.0 * M_PI * i / 12.0;
    ring.row(i) << 2.0 * std::cos(a), std::sin(a);
  }
  shapes.emplace_back("ellipse", ring);
  shapes.emplace_back("random", rng.gaussian(15, 2));
  double worst = 0.0;
  double worst_stress = 0.0;
  for (const auto& [name, pts] : shapes) {
    const auto r = classical_mds(DistanceMatrix::from_points(pts), 2);
    worst = std::max(worst, procrustes_residual(r.points, pts));
    worst_stress = std::max(worst_stress, r.stress);
  }
  return {worst < 1e-8, fmt("max Procrustes residual %.3g (<1e-8) over line, square, ellipse, "
                            "random; max stress %.3g",
                            worst, worst_stress)};
}

Outcome adaptation_trend() {
  double rmot = 0.0;
  double sot = 0.0;
  const int seeds = 20;
  for (int s = 0; s < seeds; ++s) {
    Rng rng(1200 + s);
    AdaptationData data;
    data.skew = 0.5;
    const auto [source, target] = synthesize_adaptation(data, rng);
    AdaptationConfig config;
    config.relative_epsilon = true;
    config.sinkhorn_tol = 1e-6;
    config.solve = tight_options(1e-5, 500);
    const auto r = adapt_and_classify(source, target, 0.05, config);
    rmot += r.accuracy / seeds;
    sot += r.baseline_accuracy / seeds;
  }
  return {rmot >= sot, fmt("mean accuracy over %d seeds: RMOT %.4f, scalar OT %.4f, gap %+.4f (>=0)",
                           seeds, rmot, sot, rmot - sot)};
}

Outcome lyapunov_projection() {
  Rng rng(1313);
  double worst = 0.0;
  int indefinite = 0;
  int sources = 0;
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + rng.index(5);
    const int n = 2 + rng.index(5);
    const int d = 2 + rng.index(3);
    // Any normalized SPD grid is a feasible coupling for its own row sums.
    BlockMatrix g = random_spd_blocks(rng, m, n, d);
    Matrix total = Matrix::Zero(d, d);
    for (int i = 0; i < m; ++i) total += g.row_sum(i);
    const Matrix s = spd_fn(total, MatFn::InvSqrt);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) g(i, j) = sym(s * g(i, j) * s);
    std::vector<Matrix> rows;
    for (int i = 0; i < m; ++i) rows.push_back(g.row_sum(i));
    const BlockMarginal p(rows);
    std::vector<Matrix> targets;
    for (int j = 0; j < n; ++j) targets.push_back(rng.spd(d, 0.1 + rng.uniform()));
    const auto r = barycentric_project(g, p, targets, ProjectionMode::SpdLyapunov);
    for (int i = 0; i < m; ++i) {
      const Matrix& x = r.projected[static_cast<std::size_t>(i)];
      Matrix rhs = Matrix::Zero(d, d);
      for (int j = 0; j < n; ++j) rhs += g(i, j) * targets[static_cast<std::size_t>(j)];
      const Matrix lhs = p[i] * x;
      worst = std::max(worst, (0.5 * (lhs + lhs.transpose()) - 0.5 * (rhs + rhs.transpose())).norm());
      worst = std::max(worst, (x - x.transpose()).norm());
    }
    indefinite += static_cast<int>(r.indefinite.size());
    sources += m;
  }
  return {worst < 1e-10, fmt("max residual %.3g (<1e-10) over 20 instances; %d of %d estimates "
                             "flagged indefinite",
                             worst, indefinite, sources)};
}

Outcome trace_variant() {
  Rng rng(1414);
  double balance_gap = 0.0;
  double idem = 0.0;
  double tang = 0.0;
  double collapse = 0.0;
  for (int t = 0; t < 20; ++t) {
    const int m = 2 + rng.index(4);
    const int n = 2 + rng.index(4);
    const int d = 1 + rng.index(3);
    const auto pw = rng.simplex(m);
    const auto qw = rng.simplex(n);
    const BlockMatrix b = trbalance(random_spd_blocks(rng, m, n, d), pw, qw);
    for (int i = 0; i < m; ++i) balance_gap = std::max(balance_gap, std::abs(b.row_sum(i).trace() - pw[i]));
    for (int j = 0; j < n; ++j) balance_gap = std::max(balance_gap, std::abs(b.col_sum(j).trace() - qw[j]));
    const BlockMatrix s = unit_scale(random_symmetric_blocks(rng, m, n, d));
    const auto pr = project_tangent_trace(b, s);
    const auto again = project_tangent_trace(b, pr.tangent);
    idem = std::max(idem, (again.tangent - pr.tangent).norm() / pr.tangent.norm());
    for (int i = 0; i < m; ++i) tang = std::max(tang, std::abs(pr.tangent.row_sum(i).trace()));
    for (int j = 0; j < n; ++j) tang = std::max(tang, std::abs(pr.tangent.col_sum(j).trace()));

    // d = 1: the trace constraints are the full constraints.
    BlockMatrix a1 = random_spd_blocks(rng, m, n, 1);
    const BlockMatrix t1 = trbalance(a1, pw, qw, 1e-14);
    BalanceOptions tight;
    tight.tol = 1e-14;
    tight.max_iter = 10000;
    const BlockMatrix f1 = mbalance(a1, lifted(pw, 1), lifted(qw, 1), tight).balanced;
    collapse = std::max(collapse, (t1 - f1).max_abs());
    const BlockMatrix s1 = random_symmetric_blocks(rng, m, n, 1);
    collapse = std::max(collapse, (project_tangent_trace(f1, s1).tangent -
                                   project_tangent(f1, s1).tangent).max_abs());
  }
  return {balance_gap <= 1e-10 && idem <= 1e-9 && tang <= 1e-9 && collapse <= 1e-10,
          fmt("trace marginals %.2g (<=1e-10), idempotence %.2g, tangency %.2g, "
              "d=1 collapse %.2g (<=1e-10)",
              balance_gap, idem, tang, collapse)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "kronecker_lift", kronecker_lift},
      {2, "sinkhorn_oracle_d1", sinkhorn_oracle},
      {3, "unique_optimum", unique_optimum},
      {4, "metric_axioms", metric_axioms},
      {5, "retraction_second_order", retraction_order},
      {6, "mbalance_convergence", balance_convergence},
      {7, "gradient_hessian", derivative_checks},
      {8, "projection", projection_checks},
      {9, "barycenter_gradient", barycenter_checks},
      {10, "gw_closed_form", gw_closed_form_checks},
      {11, "mds_recovery", mds_recovery},
      {12, "adaptation_trend", adaptation_trend},
      {13, "lyapunov_projection", lyapunov_projection},
      {14, "trace_variant", trace_variant},
  };
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("[%s] %02d %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                o.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
    if (!o.pass) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
