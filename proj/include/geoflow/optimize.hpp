#pragma once

// Gradient descent with Armijo backtracking, generic over the iterate type.

#include <algorithm>
#include <cmath>
#include <vector>

namespace geoflow {

struct DescentOptions {
  double initial_step = 1.0;
  double shrink = 0.5;
  double armijo = 1e-4;
  double tol = 1e-6;  ///< relative energy change
  int max_iters = 500;
  double min_step = 1e-12;
  double max_step = 1e3;  ///< cap on the warm-started trial step
};

struct DescentStep {
  int iter = 0;
  double energy = 0.0;
  double kinetic = 0.0;
  double data = 0.0;
  double step = 0.0;
};

template <class X>
struct DescentResult {
  X x;
  std::vector<DescentStep> trace;
  int iterations = 0;
  bool converged = false;
  bool stalled = false;
};

/// Minimizes an energy by x <- x - a * grad(x).
///
/// `evaluate(x)` returns a record with `.total`, `.kinetic`, `.data` and
/// `.admissible`; inadmissible trial points are treated like failed Armijo
/// tests. `gradient(x)` returns the gradient in the metric used by
/// `sqnorm`, `update(x, g, a)` returns x - a * g.
///
/// The trial step starts at twice the last accepted one, capped at
/// `max_step`.
template <class X, class Eval, class GradFn, class Update, class SqNorm>
DescentResult<X> armijo_descent(X x, Eval&& evaluate, GradFn&& gradient, Update&& update,
                                SqNorm&& sqnorm, const DescentOptions& opt) {
  DescentResult<X> res{x, {}, 0, false, false};
  auto rec = evaluate(x);
  res.trace.push_back({0, rec.total, rec.kinetic, rec.data, 0.0});
  double step = opt.initial_step;

  for (int it = 1; it <= opt.max_iters; ++it) {
    const auto g = gradient(x);
    const double gg = sqnorm(g);
    if (!(gg > 0.0)) {
      res.converged = true;
      break;
    }
    bool accepted = false;
    X trial = x;
    decltype(rec) trial_rec = rec;
    while (step >= opt.min_step) {
      trial = update(x, g, step);
      trial_rec = evaluate(trial);
      if (trial_rec.admissible && std::isfinite(trial_rec.total) &&
          trial_rec.total <= rec.total - opt.armijo * step * gg) {
        accepted = true;
        break;
      }
      step *= opt.shrink;
    }
    if (!accepted) {
      res.stalled = true;
      break;
    }
    const double prev = rec.total;
    x = std::move(trial);
    rec = trial_rec;
    res.iterations = it;
    res.trace.push_back({it, rec.total, rec.kinetic, rec.data, step});
    const double rel = std::abs(prev - rec.total) / std::max(std::abs(prev), 1e-300);
    step = std::min(opt.max_step, 2.0 * step);
    if (rel < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.x = std::move(x);
  return res;
}

}  // namespace geoflow
