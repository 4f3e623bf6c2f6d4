#include "bspdot/solver.hpp"

#include "bspdot/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <sstream>

namespace bspdot {

const char* to_string(Method m) {
  switch (m) {
    case Method::SteepestDescent: return "steepest_descent";
    case Method::ConjugateGradient: return "conjugate_gradient";
  }
  return "unknown";
}

const char* to_string(Termination t) {
  switch (t) {
    case Termination::Converged: return "Converged";
    case Termination::MaxIter: return "MaxIter";
    case Termination::StalledAtBoundary: return "StalledAtBoundary";
    case Termination::LineSearchFailed: return "LineSearchFailed";
  }
  return "unknown";
}

const char* to_string(CgRule r) {
  switch (r) {
    case CgRule::FletcherReeves: return "fletcher_reeves";
    case CgRule::PolakRibierePlus: return "polak_ribiere_plus";
  }
  return "unknown";
}

const char* to_string(StepPolicy p) {
  switch (p) {
    case StepPolicy::Doubling: return "doubling";
    case StepPolicy::Interpolated: return "interpolated";
  }
  return "unknown";
}

const char* to_string(LineSearch l) {
  switch (l) {
    case LineSearch::Armijo: return "armijo";
    case LineSearch::Wolfe: return "wolfe";
  }
  return "unknown";
}

namespace {

struct Trial {
  double step = 0.0;
  BlockMatrix x;
  double f = 0.0;
  BlockMatrix g;
  double slope = 0.0;  // <grad f(x), P_x(dir)>_x
  bool ok = false;
};

// Minimizer of the cubic through (a, fa, da) and (b, fb, db), kept inside the
// middle 80% of [a, b]; falls back to bisection.
double interpolate(double a, double fa, double da, double b, double fb, double db) {
  const double lo = std::min(a, b);
  const double hi = std::max(a, b);
  const double w = hi - lo;
  double t = 0.5 * (a + b);
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc >= 0.0 && std::isfinite(disc)) {
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double c = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    if (std::isfinite(c)) t = c;
  }
  return std::clamp(t, lo + 0.1 * w, hi - 0.1 * w);
}

class Minimizer {
 public:
  Minimizer(const Problem& problem, const Manifold& manifold, const SolverConfig& config,
            SolveReport& report)
      : problem_(problem), manifold_(manifold), config_(config), report_(report) {}

  double evaluate(const BlockMatrix& x) {
    ++report_.objective_evals;
    return problem_.objective(x);
  }

  BlockMatrix gradient(const BlockMatrix& x) {
    ++report_.gradient_evals;
    return manifold_.rgrad(x, problem_.euclidean_gradient(x));
  }

  Trial probe(const BlockMatrix& x, const BlockMatrix& dir, double step) {
    Trial t;
    t.step = step;
    // A trial outside the objective's domain (retraction or evaluation
    // failure) counts as an infinite value.
    try {
      t.x = manifold_.retract(x, step * dir);
      t.f = evaluate(t.x);
    } catch (const Error&) {
      hit_boundary_ = true;
      return t;
    }
    if (!std::isfinite(t.f)) {
      hit_boundary_ = true;
      return t;
    }
    t.ok = true;
    return t;
  }

  // False when the tangent projection at the trial point breaks down, which
  // only happens next to the SPD boundary.
  bool add_slope(Trial& t, const BlockMatrix& dir) {
    try {
      t.g = gradient(t.x);
      t.slope = manifold_.inner(t.x, t.g, manifold_.project(t.x, dir));
    } catch (const Error&) {
      hit_boundary_ = true;
      t.ok = false;
      return false;
    }
    return true;
  }

  std::optional<Trial> armijo(const BlockMatrix& x, double f, const BlockMatrix& dir,
                              double slope, double step) {
    for (int b = 0; b < config_.max_backtracks; ++b, step *= config_.backtrack) {
      Trial t = probe(x, dir, step);
      if (t.ok && t.f <= f + config_.c1 * step * slope) return t;
    }
    return std::nullopt;
  }

  std::optional<Trial> wolfe(const BlockMatrix& x, double f, const BlockMatrix& dir,
                             double slope, double step, double step_cap) {
    const double noise = 1e-12 * (1.0 + std::abs(f));
    auto decrease_ok = [&](const Trial& t) {
      return t.f <= f + config_.c1 * t.step * slope ||
             (t.f <= f + noise && t.slope <= (1.0 - 2.0 * config_.c1) * -slope);
    };
    Trial lo;
    lo.f = f;
    lo.slope = slope;
    std::optional<Trial> hi;
    for (int k = 0; k < config_.max_backtracks; ++k) {
      if (hi) {
        step = hi->ok ? interpolate(lo.step, lo.f, lo.slope, hi->step, hi->f, hi->slope)
                      : lo.step + 0.5 * (hi->step - lo.step);
      }
      Trial t = probe(x, dir, step);
      if (!t.ok) {
        hi = std::move(t);
        continue;
      }
      if (!add_slope(t, dir)) {
        hi = std::move(t);
        continue;
      }
      const bool worse_than_lo = t.f >= lo.f && std::abs(t.f - lo.f) > noise;
      if (!decrease_ok(t) || worse_than_lo) {
        hi = std::move(t);
        continue;
      }
      if (std::abs(t.slope) <= -config_.c2 * slope) return t;
      if (t.slope > 0.0) {
        hi = std::move(t);
        continue;
      }
      lo = std::move(t);
      if (!hi) {
        if (lo.step >= step_cap) return lo;
        step = std::min(2.0 * lo.step, step_cap);
      }
    }
    if (lo.step > 0.0) return lo;
    return std::nullopt;
  }

  bool hit_boundary() const { return hit_boundary_; }
  void reset_boundary() { hit_boundary_ = false; }

 private:
  const Problem& problem_;
  const Manifold& manifold_;
  const SolverConfig& config_;
  SolveReport& report_;
  bool hit_boundary_ = false;
};

}  // namespace

SolveResult minimize(const Problem& problem, const Manifold& manifold, BlockMatrix x0,
                     const SolverConfig& config) {
  if (!(config.grad_tol > 0.0) || !(config.c1 > 0.0) || !(config.c1 < config.c2) ||
      !(config.c2 < 1.0) || !(config.backtrack > 0.0) || !(config.backtrack < 1.0) ||
      config.max_iter < 0 || config.max_backtracks < 1 || !(config.max_step > 0.0) ||
      !(config.max_step_norm > 0.0))
    fail(ErrorCode::InvalidInput, "minimize: invalid solver configuration");
  const auto start = std::chrono::steady_clock::now();
  const long inner_start = manifold.inner_iterations();

  const double start_residual = manifold.residual(x0);
  if (!(start_residual <= config.feas_tol)) {
    std::ostringstream os;
    os << "minimize: starting point violates constraints by " << start_residual;
    fail(ErrorCode::InfeasibleStart, os.str());
  }

  SolveResult out{std::move(x0), {}};
  BlockMatrix& x = out.x;
  SolveReport& report = out.report;
  Minimizer mz(problem, manifold, config, report);

  double f = mz.evaluate(x);
  BlockMatrix g = mz.gradient(x);
  double gn = manifold.norm(x, g);
  const double threshold = config.grad_tol * (1.0 + gn);
  report.objective.push_back(f);
  report.grad_norm.push_back(gn);

  const int restart_period =
      config.cg_restart > 0 ? config.cg_restart : std::min(x.rows() * x.cols(), 50);
  BlockMatrix previous_dir;
  BlockMatrix previous_g;
  double previous_gn = gn;
  double previous_f = f;
  double last_step = 0.0;
  int since_restart = 0;
  report.reason = Termination::MaxIter;

  for (int it = 0;; ++it) {
    if (problem.on_iterate) problem.on_iterate(it, x, f, gn);
    if (gn <= threshold) {
      report.reason = Termination::Converged;
      break;
    }
    if (it >= config.max_iter) {
      report.reason = Termination::MaxIter;
      break;
    }

    BlockMatrix dir = -1.0 * g;
    if (config.method == Method::ConjugateGradient && !previous_dir.empty() &&
        since_restart < restart_period) {
      const BlockMatrix moved = manifold.project(x, previous_g);
      double beta = (gn * gn) / (previous_gn * previous_gn);
      if (config.cg_rule == CgRule::PolakRibierePlus) {
        beta = std::max(0.0, manifold.inner(x, g, g - moved) / (previous_gn * previous_gn));
      } else if (std::abs(manifold.inner(x, g, moved)) >= 0.2 * gn * gn) {
        // Powell restart: successive gradients far from orthogonal.
        beta = 0.0;
      }
      BlockMatrix candidate = dir + beta * manifold.project(x, previous_dir);
      if (manifold.inner(x, candidate, g) < 0.0) {
        dir = std::move(candidate);
        ++since_restart;
      } else {
        since_restart = 0;
      }
    } else {
      since_restart = 0;
    }
    const double slope = manifold.inner(x, g, dir);
    const double dir_norm = manifold.norm(x, dir);
    const double step_cap = config.max_step_norm / dir_norm;

    double step = 1.0 / (1.0 + gn);
    if (last_step > 0.0) {
      step = 2.0 * last_step;
      if (config.step_policy == StepPolicy::Interpolated && previous_f > f)
        step = 2.0 * (previous_f - f) / -slope;
      step = std::min(step, config.max_step);
    }
    step = std::min(step, step_cap);

    mz.reset_boundary();
    std::optional<Trial> accepted = config.line_search == LineSearch::Wolfe
                                        ? mz.wolfe(x, f, dir, slope, step, step_cap)
                                        : mz.armijo(x, f, dir, slope, step);
    if (!accepted) {
      report.reason =
          mz.hit_boundary() ? Termination::StalledAtBoundary : Termination::LineSearchFailed;
      break;
    }

    if (accepted->g.empty() && !mz.add_slope(*accepted, dir)) {
      report.reason = Termination::StalledAtBoundary;
      break;
    }
    last_step = accepted->step;
    previous_dir = std::move(dir);
    previous_gn = gn;
    previous_f = f;
    previous_g = std::move(g);
    x = std::move(accepted->x);
    f = accepted->f;
    g = std::move(accepted->g);
    gn = manifold.norm(x, g);
    report.objective.push_back(f);
    report.grad_norm.push_back(gn);
    ++report.iterations;
  }

  report.constraint_residual = manifold.residual(x);
  report.inner_iterations = manifold.inner_iterations() - inner_start;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

double gradient_check(const Problem& problem, const Manifold& manifold, const BlockMatrix& x,
                      const std::vector<BlockMatrix>& directions) {
  const BlockMatrix g = manifold.rgrad(x, problem.euclidean_gradient(x));
  const double gn = manifold.norm(x, g);
  double worst = 0.0;
  for (const auto& u : directions) {
    const double un = manifold.norm(x, u);
    if (!(un > 0.0)) fail(ErrorCode::InvalidInput, "gradient_check: zero direction");
    const double predicted = manifold.inner(x, g, u);
    const double denom = std::max({std::abs(predicted), 1e-8 * gn * un, 1e-300});
    double best = std::numeric_limits<double>::infinity();
    for (int e = 1; e <= 8; ++e) {
      for (double mant : {1.0, 0.5, 0.2}) {
        const double h = mant * std::pow(10.0, -e) / un;
        double fd = 0.0;
        try {
          const double fp = problem.objective(manifold.retract(x, h * u));
          const double fm = problem.objective(manifold.retract(x, -h * u));
          fd = (fp - fm) / (2.0 * h);
        } catch (const Error&) {
          continue;
        }
        best = std::min(best, std::abs(fd - predicted) / denom);
      }
    }
    worst = std::max(worst, best);
  }
  return worst;
}

}  // namespace bspdot
