#ifndef SSVOC_LBFGS_HPP
#define SSVOC_LBFGS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "ssvoc/error.hpp"
#include "ssvoc/linalg.hpp"

namespace ssvoc {

enum class SolverMethod { lbfgs, sgd, hybrid };

inline std::string_view to_string(SolverMethod m) {
  switch (m) {
    case SolverMethod::lbfgs: return "lbfgs";
    case SolverMethod::sgd: return "sgd";
    case SolverMethod::hybrid: return "hybrid";
  }
  return "?";
}

inline SolverMethod parse_solver_method(std::string_view s) {
  if (s == "lbfgs") return SolverMethod::lbfgs;
  if (s == "sgd") return SolverMethod::sgd;
  if (s == "hybrid") return SolverMethod::hybrid;
  throw UsageError("unknown solver method '" + std::string(s) + "'");
}

struct SolverConfig {
  SolverMethod method = SolverMethod::lbfgs;
  int max_iters = 50;          // L-BFGS iterations per solve, or SGD epochs
  double grad_tol = 1e-5;      // stop once |grad|_2 <= grad_tol
  int history_size = 10;       // L-BFGS memory
  double sgd_step = 1e-2;      // step on the per-sample mean objective
  std::size_t sgd_batch = 32;  // (initial) mini-batch size
  double hybrid_growth = 2.0;  // batch growth per SGD epoch in the hybrid schedule
  std::uint64_t seed = 0;
  int v_passes = 10;           // alternating (V, W) passes when fine-tuning
  double pass_tol = 1e-4;      // stop alternating below this relative improvement

  void validate() const {
    if (max_iters < 1) throw UsageError("max_iters must be >= 1");
    if (!(grad_tol > 0.0)) throw UsageError("grad_tol must be > 0");
    if (history_size < 1) throw UsageError("history_size must be >= 1");
    if (sgd_batch < 1) throw UsageError("sgd_batch must be >= 1");
    if (!(sgd_step > 0.0)) throw UsageError("sgd_step must be > 0");
    if (!(hybrid_growth > 1.0)) throw UsageError("hybrid_growth must be > 1");
    if (v_passes < 0) throw UsageError("v_passes must be >= 0");
  }
};

/// One line of a training log.
struct LogRecord {
  int iteration = 0;
  double objective = 0.0;
  double grad_norm = 0.0;
  std::string phase;
};

enum class SolverStatus { converged, max_iters, line_search_failed, finished };

inline std::string_view to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::converged: return "converged";
    case SolverStatus::max_iters: return "max_iters";
    case SolverStatus::line_search_failed: return "line_search_failed";
    case SolverStatus::finished: return "finished";
  }
  return "?";
}

struct MinimizeResult {
  Vector x;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  SolverStatus status = SolverStatus::max_iters;
  std::vector<LogRecord> log;
};

/// Returns f(x) and writes the gradient into `grad` (already sized like x).
using ObjectiveFn = std::function<double(const Vector& x, Vector& grad)>;

/// Applies a symmetric positive definite approximation of the inverse Hessian.
using Preconditioner = std::function<Vector(const Vector& v)>;

/// Builds the preconditioner for the current iterate. L-BFGS calls it once per
/// iteration and uses the result as the initial matrix of the two-loop recursion.
using PreconditionerFactory = std::function<Preconditioner(const Vector& x)>;

/// Initial inverse-Hessian model for lbfgs_minimize. When `local` is set the
/// operator is rebuilt from the true curvature at every iterate and no
/// curvature pairs are accumulated on top of it; the iteration is then a
/// line-searched (semismooth) Newton method.
struct InverseHessianModel {
  PreconditionerFactory build;
  bool local = false;

  explicit operator bool() const { return static_cast<bool>(build); }
};

namespace detail {

struct LinePoint {
  double step = 0.0;
  double value = 0.0;
  double slope = 0.0;  // directional derivative
  Vector grad;
};

/// Minimizer of the cubic interpolating (a, fa, da) and (b, fb, db),
/// safeguarded into the interior of [a, b].
inline double cubic_step(const LinePoint& a, const LinePoint& b) {
  const double lo = std::min(a.step, b.step), hi = std::max(a.step, b.step);
  const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
  const double disc = d1 * d1 - a.slope * b.slope;
  double t = std::numeric_limits<double>::quiet_NaN();
  if (disc >= 0.0) {
    const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
    t = b.step - (b.step - a.step) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
  }
  const double margin = 0.1 * (hi - lo);
  if (!std::isfinite(t) || t < lo + margin || t > hi - margin) t = 0.5 * (lo + hi);
  return t;
}

/// Line search satisfying the strong Wolfe conditions (c1 = 1e-4, c2 = 0.9).
/// Returns false if no acceptable step was found; `out` is then unchanged.
inline bool strong_wolfe(const ObjectiveFn& f, const Vector& x, double f0, double slope0, const Vector& dir,
                         double initial_step, LinePoint& out, int& evals) {
  constexpr double c1 = 1e-4, c2 = 0.9;
  constexpr int kMaxBracket = 30, kMaxZoom = 40;
  Vector trial(x.size());
  auto probe = [&](double step) {
    LinePoint pt;
    pt.step = step;
    pt.grad.resize(x.size());
    trial = x + step * dir;
    pt.value = f(trial, pt.grad);
    ++evals;
    pt.slope = std::isfinite(pt.value) && pt.grad.allFinite() ? pt.grad.dot(dir)
                                                               : std::numeric_limits<double>::quiet_NaN();
    if (!std::isfinite(pt.slope)) pt.value = std::numeric_limits<double>::infinity();
    return pt;
  };
  auto armijo_fails = [&](const LinePoint& p) { return !(p.value <= f0 + c1 * p.step * slope0); };
  auto curvature_ok = [&](const LinePoint& p) { return std::abs(p.slope) <= -c2 * slope0; };

  auto zoom = [&](LinePoint lo, LinePoint hi) {
    for (int i = 0; i < kMaxZoom; ++i) {
      double step;
      if (std::isfinite(hi.value))
        step = cubic_step(lo, hi);
      else
        step = 0.5 * (lo.step + hi.step);
      if (std::abs(hi.step - lo.step) < 1e-16 * std::max(1.0, std::abs(lo.step))) break;
      LinePoint pt = probe(step);
      if (armijo_fails(pt) || pt.value >= lo.value) {
        hi = std::move(pt);
      } else {
        if (curvature_ok(pt)) {
          out = std::move(pt);
          return true;
        }
        if (pt.slope * (hi.step - lo.step) >= 0.0) hi = lo;
        lo = std::move(pt);
      }
    }
    // Settle for sufficient decrease if the curvature condition is out of reach.
    if (lo.step > 0.0 && lo.value < f0) {
      out = std::move(lo);
      return true;
    }
    return false;
  };

  LinePoint prev;
  prev.step = 0.0;
  prev.value = f0;
  prev.slope = slope0;
  double step = initial_step;
  for (int i = 0; i < kMaxBracket; ++i) {
    LinePoint pt = probe(step);
    if (armijo_fails(pt) || (i > 0 && pt.value >= prev.value)) return zoom(std::move(prev), std::move(pt));
    if (curvature_ok(pt)) {
      out = std::move(pt);
      return true;
    }
    if (pt.slope >= 0.0) return zoom(std::move(pt), std::move(prev));
    prev = std::move(pt);
    step *= 2.0;
  }
  if (prev.step > 0.0 && prev.value < f0) {
    out = std::move(prev);
    return true;
  }
  return false;
}

}  // namespace detail

/// Limited-memory BFGS with a strong-Wolfe line search. The first step of each
/// search is 1.0. Without a model the initial inverse Hessian is the usual
/// scalar s'y / y'y, and the very first step is scaled by 1/|g|. With one, the
/// recursion starts from the operator built at the current iterate. Each
/// logged objective is no larger than the previous one.
inline MinimizeResult lbfgs_minimize(const ObjectiveFn& f, const Vector& x0, const SolverConfig& cfg,
                                     std::string_view phase = "lbfgs", const InverseHessianModel& model = {}) {
  cfg.validate();
  MinimizeResult res;
  res.x = x0;
  Vector grad(x0.size());
  double value = f(res.x, grad);
  res.evaluations = 1;
  if (!std::isfinite(value) || !grad.allFinite())
    throw SolverError("lbfgs: non-finite objective or gradient at the starting point");

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  const bool local_model = model && model.local;
  const std::string tag(phase);
  res.log.push_back({0, value, grad.norm(), tag});

  Vector dir(x0.size());
  int iter = 0;
  res.status = SolverStatus::max_iters;
  while (true) {
    const double gnorm = grad.norm();
    if (gnorm <= cfg.grad_tol) {
      res.status = SolverStatus::converged;
      break;
    }
    if (iter >= cfg.max_iters) break;
    const Preconditioner precond = model ? model.build(res.x) : Preconditioner{};

    // Two-loop recursion.
    dir = -grad;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t k = s_hist.size(); k-- > 0;) {
      alpha[k] = rho_hist[k] * s_hist[k].dot(dir);
      dir -= alpha[k] * y_hist[k];
    }
    if (precond)
      dir = precond(dir);
    else if (!s_hist.empty())
      dir *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t k = 0; k < s_hist.size(); ++k) {
      const double beta = rho_hist[k] * y_hist[k].dot(dir);
      dir += (alpha[k] - beta) * s_hist[k];
    }
    double slope = grad.dot(dir);
    if (!(slope < 0.0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = precond ? Vector(-precond(grad)) : Vector(-grad);
      slope = grad.dot(dir);
    }
    const double step0 = !precond && iter == 0 ? std::min(1.0, 1.0 / gnorm) : 1.0;

    detail::LinePoint accepted;
    bool ok = detail::strong_wolfe(f, res.x, value, slope, dir, step0, accepted, res.evaluations);
    if (!ok && !s_hist.empty()) {
      // Stale curvature pairs; retry once from the initial inverse Hessian.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = precond ? Vector(-precond(grad)) : Vector(-grad);
      ok = detail::strong_wolfe(f, res.x, value, grad.dot(dir), dir, precond ? 1.0 : std::min(1.0, 1.0 / gnorm),
                                accepted, res.evaluations);
    }
    if (!ok) {
      res.status = SolverStatus::line_search_failed;
      break;
    }
    Vector s = accepted.step * dir;
    Vector y = accepted.grad - grad;
    res.x += s;
    value = accepted.value;
    grad = std::move(accepted.grad);
    ++iter;
    if (!std::isfinite(value) || !grad.allFinite())
      throw SolverError("lbfgs: non-finite objective or gradient at iteration " + std::to_string(iter));
    const double sy = s.dot(y);
    if (!local_model && sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > cfg.history_size) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    res.log.push_back({iter, value, grad.norm(), tag});
  }
  res.value = value;
  res.grad_norm = grad.norm();
  res.iterations = iter;
  return res;
}

}  // namespace ssvoc

#endif  // SSVOC_LBFGS_HPP
