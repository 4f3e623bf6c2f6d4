#pragma once

// First-order Riemannian minimization (steepest descent or Fletcher-Reeves
// conjugate gradient) with Armijo backtracking over any Manifold.

#include "bspdot/block.hpp"
#include "bspdot/manifold.hpp"

#include <functional>
#include <string>
#include <vector>

namespace bspdot {

enum class Method { SteepestDescent, ConjugateGradient };
enum class CgRule { FletcherReeves, PolakRibierePlus };
enum class StepPolicy {
  Doubling,      // twice the last accepted step
  Interpolated,  // 2 (f_prev - f) / |slope|, the quadratic-interpolation guess
};
enum class LineSearch {
  Armijo,  // backtracking on sufficient decrease only
  Wolfe,   // strong Wolfe bracketing; slope-based acceptance once f differences hit round-off
};
enum class Termination { Converged, MaxIter, StalledAtBoundary, LineSearchFailed };

const char* to_string(Method m);
const char* to_string(Termination t);
const char* to_string(CgRule r);
const char* to_string(StepPolicy p);
const char* to_string(LineSearch l);

struct SolverConfig {
  Method method = Method::SteepestDescent;
  int max_iter = 1000;
  /// Stop when ||grad|| <= grad_tol * (1 + ||grad at x0||).
  double grad_tol = 1e-7;
  LineSearch line_search = LineSearch::Armijo;
  double c1 = 1e-4;
  /// Curvature constant for the Wolfe line search.
  double c2 = 0.1;
  double backtrack = 0.5;
  /// Trial steps per line search.
  int max_backtracks = 30;
  /// Upper bound on the initial step multiplier. The first step is
  /// 1 / (1 + ||grad||); later ones follow step_policy.
  double max_step = 1e12;
  /// Upper bound on the Riemannian length of a trial step. Under the
  /// affine-invariant metric this bounds how far any block's eigenvalues can
  /// move in one exponential step.
  double max_step_norm = 1.0;
  StepPolicy step_policy = StepPolicy::Doubling;
  /// Fletcher-Reeves restarts whenever |<g_k, g_{k-1}>| >= 0.2 ||g_k||^2.
  CgRule cg_rule = CgRule::FletcherReeves;
  /// Conjugate-gradient restart period; 0 selects min(m * n, 50).
  int cg_restart = 0;
  /// Starting points with a larger relative constraint residual are rejected.
  double feas_tol = 1e-8;
};

struct SolveReport {
  std::vector<double> objective;
  std::vector<double> grad_norm;
  double constraint_residual = 0.0;
  int iterations = 0;
  double wall_time = 0.0;  // seconds
  Termination reason = Termination::MaxIter;
  long objective_evals = 0;
  long gradient_evals = 0;
  long inner_iterations = 0;
};

struct Problem {
  std::function<double(const BlockMatrix&)> objective;
  /// Blockwise Euclidean partial derivatives.
  std::function<BlockMatrix(const BlockMatrix&)> euclidean_gradient;
  /// Optional; called once per iterate (including x0) before the stopping test.
  std::function<void(int iteration, const BlockMatrix& x, double value, double grad_norm)>
      on_iterate;
};

struct SolveResult {
  BlockMatrix x;
  SolveReport report;
};

SolveResult minimize(const Problem& problem, const Manifold& manifold, BlockMatrix x0,
                     const SolverConfig& config = {});

/// Worst relative error, over the given tangent directions, between
/// <grad F(x), u>_x and central differences of F(R_x(h u)), taking for each
/// direction the best h on a log grid.
double gradient_check(const Problem& problem, const Manifold& manifold, const BlockMatrix& x,
                      const std::vector<BlockMatrix>& directions);

}  // namespace bspdot
