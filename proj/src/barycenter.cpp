#include "bspdot/barycenter.hpp"

#include "bspdot/error.hpp"
#include "bspdot/parallel.hpp"

#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>

namespace bspdot {

namespace {

BlockMarginal column_marginal(const BlockMatrix& column, const char* what) {
  std::vector<Matrix> blocks;
  blocks.reserve(static_cast<std::size_t>(column.rows()));
  for (int i = 0; i < column.rows(); ++i) blocks.push_back(column(i, 0));
  try {
    return BlockMarginal(std::move(blocks));
  } catch (const Error& e) {
    fail(e.code(), std::string(what) + ": " + e.what());
  }
}

bool identical(const BlockMatrix& a, const BlockMatrix& b) {
  if (!a.same_shape(b)) return false;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j)
      if (a(i, j) != b(i, j)) return false;
  return true;
}

}  // namespace

void BarycenterProblem::validate() const {
  const std::size_t k = inputs.size();
  if (k == 0) fail(ErrorCode::InvalidInput, "barycenter: no input marginals");
  if (weights.size() != k || costs.size() != k)
    fail(ErrorCode::InvalidInput, "barycenter: inputs, weights and costs differ in length");
  if (!(epsilon > 0.0)) fail(ErrorCode::InvalidInput, "barycenter: epsilon must be > 0");
  if (support < 1) fail(ErrorCode::InvalidInput, "barycenter: support size must be >= 1");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w))
      fail(ErrorCode::InvalidInput, "barycenter: weights must be finite and >= 0");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12)
    fail(ErrorCode::InvalidInput, "barycenter: weights must sum to 1");
  const int d = inputs[0].dim();
  for (std::size_t l = 0; l < k; ++l) {
    const auto& in = inputs[l];
    const auto& c = costs[l];
    if (in.cols() != 1 || in.dim() != d)
      fail(ErrorCode::InvalidInput, "barycenter: inputs must be n_l x 1 columns of equal dim");
    if (c.rows() != support || c.cols() != in.rows() || c.dim() != d) {
      std::ostringstream os;
      os << "barycenter: cost " << l << " must be " << support << " x " << in.rows();
      fail(ErrorCode::InvalidInput, os.str());
    }
  }
}

BarycenterGradient barycenter_gradient(const BarycenterProblem& problem, const BlockMatrix& p,
                                       const MwOptions& inner,
                                       const std::vector<BlockMatrix>* warm) {
  problem.validate();
  const int n = problem.support;
  const int d = problem.inputs[0].dim();
  if (p.rows() != n || p.cols() != 1 || p.dim() != d)
    fail(ErrorCode::InvalidInput, "barycenter_gradient: point does not match the support");
  const BlockMarginal pm = column_marginal(p, "barycenter_gradient");
  const std::size_t k = problem.inputs.size();

  BarycenterGradient out;
  out.couplings.resize(k);
  out.duals.resize(k);
  std::vector<double> values(k, 0.0);
  std::vector<long> iterations(k, 0);
  std::vector<std::optional<std::string>> errors(k);
  parallel_for(k, [&](std::size_t l) {
    if (problem.weights[l] == 0.0) return;
    try {
      MwOptions o = inner;
      if (warm != nullptr && l < warm->size() && !(*warm)[l].empty()) o.warm_start = (*warm)[l];
      const RegularizedProblem rp{problem.costs[l], problem.epsilon,
                                  Regularizer::QuantumEntropy};
      const auto r =
          solve_mw(pm, column_marginal(problem.inputs[l], "barycenter input"), rp, o);
      if (r.report.reason == Termination::StalledAtBoundary ||
          r.report.reason == Termination::MaxIter) {
        std::ostringstream os;
        os << to_string(r.report.reason) << " with gradient norm " << r.report.grad_norm.back();
        errors[l] = os.str();
        return;
      }
      out.duals[l] = riemannian_gradient(r.coupling, mw_euclidean_gradient(rp, r.coupling));
      values[l] = r.value;
      iterations[l] = r.report.iterations;
      out.couplings[l] = r.coupling;
    } catch (const Error& e) {
      errors[l] = e.what();
    }
  });
  for (std::size_t l = 0; l < k; ++l) {
    if (errors[l]) {
      std::ostringstream os;
      os << "barycenter: inner solve " << l << " failed: " << *errors[l];
      fail(ErrorCode::InnerSolveFailed, os.str());
    }
  }

  out.egrad = BlockMatrix(n, 1, d);
  for (std::size_t l = 0; l < k; ++l) {
    out.inner_iterations += iterations[l];
    if (problem.weights[l] == 0.0) continue;
    out.value += problem.weights[l] * values[l];
    for (int i = 0; i < n; ++i)
      out.egrad(i, 0) -= problem.weights[l] * out.duals[l].lambda[static_cast<std::size_t>(i)];
  }
  return out;
}

BarycenterResult solve_barycenter(const BarycenterProblem& problem,
                                  const BarycenterOptions& options) {
  problem.validate();
  const int n = problem.support;
  const int d = problem.inputs[0].dim();
  const SpdSimplexManifold manifold(n, d);
  BlockMatrix x0 = options.initial.empty() ? simplex_uniform(n, d) : options.initial;

  MwOptions inner = options.inner;
  std::vector<BlockMatrix> warm;
  std::optional<std::pair<BlockMatrix, BarycenterGradient>> cache;
  long inner_iterations = 0;
  long solves = 0;
  auto solve_at = [&](const BlockMatrix& x) -> const BarycenterGradient& {
    if (!cache || !identical(cache->first, x)) {
      cache.emplace(x, barycenter_gradient(problem, x, inner, &warm));
      inner_iterations += cache->second.inner_iterations;
      ++solves;
    }
    return cache->second;
  };

  Problem outer;
  outer.objective = [&](const BlockMatrix& x) { return solve_at(x).value; };
  outer.euclidean_gradient = [&](const BlockMatrix& x) { return solve_at(x).egrad; };
  outer.on_iterate = [&](int, const BlockMatrix& x, double, double gn) {
    warm = solve_at(x).couplings;
    inner.solver.grad_tol =
        std::max(options.inner_tol_floor, options.inner_tol_ratio * gn);
  };

  BarycenterResult out;
  if (options.fixed_step > 0.0) {
    const auto start = std::chrono::steady_clock::now();
    BlockMatrix x = std::move(x0);
    SolveReport& report = out.report;
    double threshold = 0.0;
    for (int it = 0;; ++it) {
      const auto& sg = solve_at(x);
      const BlockMatrix g = manifold.rgrad(x, sg.egrad);
      const double gn = manifold.norm(x, g);
      if (it == 0) threshold = options.outer.grad_tol * (1.0 + gn);
      report.objective.push_back(sg.value);
      report.grad_norm.push_back(gn);
      outer.on_iterate(it, x, sg.value, gn);
      if (gn <= threshold) {
        report.reason = Termination::Converged;
        break;
      }
      if (it >= options.outer.max_iter) {
        report.reason = Termination::MaxIter;
        break;
      }
      try {
        x = manifold.retract(x, -options.fixed_step * g);
      } catch (const Error&) {
        report.reason = Termination::StalledAtBoundary;
        break;
      }
      ++report.iterations;
    }
    report.objective_evals = report.gradient_evals = solves;
    report.constraint_residual = manifold.residual(x);
    report.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.barycenter = std::move(x);
  } else {
    auto solved = minimize(outer, manifold, std::move(x0), options.outer);
    out.barycenter = std::move(solved.x);
    out.report = std::move(solved.report);
  }
  out.couplings = solve_at(out.barycenter).couplings;
  out.report.inner_iterations = inner_iterations;
  return out;
}

}  // namespace bspdot
