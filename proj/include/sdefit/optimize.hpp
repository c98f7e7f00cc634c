/*
 * Copyright 2026 The sdefit Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef SDEFIT_OPTIMIZE_HPP
#define SDEFIT_OPTIMIZE_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <gsl/gsl_multimin.h>
#include <gsl/gsl_vector.h>

#include "sdefit/core.hpp"
#include "sdefit/rng.hpp"

namespace sdefit::opt {

using Objective = std::function<double(const Eigen::VectorXd&)>;
using Bounds = std::vector<std::pair<double, double>>;

/// Shared knobs of the local minimizer and the multi-start driver.
/// `gradient_tol` is interpreted as the simplex-size stopping tolerance of
/// the underlying Nelder-Mead method.
struct OptimizerConfig {
  long max_evals = 40000;
  double gradient_tol = 1e-10;
  Bounds param_bounds;
  int starts = 1;
  std::uint64_t start_seed = 0;
  /// Optional warm start used as the first candidate when its size matches
  /// the parameter count (e.g. the previous depth of a truncation sweep).
  std::vector<double> start_hint;
};

struct MinimizeResult {
  Eigen::VectorXd x;
  double value = std::numeric_limits<double>::infinity();
  bool converged = false;
  long evaluations = 0;
};

namespace detail {

// Box constraints are handled by a smooth logistic reparameterization:
// x = lo + (hi - lo) / (1 + e^{-u}), which keeps the local method
// unconstrained. Bound optima are reached in the limit |u| -> inf.
inline double to_raw(double u, double lo, double hi) { return lo + (hi - lo) / (1.0 + std::exp(-u)); }

inline double to_unbounded(double x, double lo, double hi) {
  const double w = hi - lo;
  double f = (x - lo) / w;
  f = std::min(std::max(f, 1e-12), 1.0 - 1e-12);
  return std::log(f / (1.0 - f));
}

struct GslAdapter {
  const Objective* objective = nullptr;
  const Bounds* bounds = nullptr;
  long evaluations = 0;
  Eigen::VectorXd scratch;

  double eval_u(const gsl_vector* u) {
    for (std::size_t j = 0; j < bounds->size(); ++j)
      scratch(static_cast<long>(j)) =
          to_raw(gsl_vector_get(u, j), (*bounds)[j].first, (*bounds)[j].second);
    ++evaluations;
    double v;
    try {
      v = (*objective)(scratch);
    } catch (const std::exception&) {
      return 1e12;
    }
    return std::isfinite(v) ? v : 1e12;
  }

  static double call(const gsl_vector* u, void* self) {
    return static_cast<GslAdapter*>(self)->eval_u(u);
  }
};

}  // namespace detail

/// Local bounded minimization (Nelder-Mead simplex via GSL, logistic bound
/// transform, deterministic restarts at the incumbent until converged or the
/// evaluation budget is spent).
inline MinimizeResult minimize(const Objective& objective, const Eigen::VectorXd& x0,
                               const Bounds& bounds, const OptimizerConfig& cfg = {}) {
  const std::size_t p = bounds.size();
  if (p == 0 || x0.size() != static_cast<long>(p))
    throw std::invalid_argument("minimize: bounds and x0 must agree in dimension");
  for (const auto& [lo, hi] : bounds)
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi))
      throw std::invalid_argument("minimize: bounds must be finite with lo < hi");
  {
    const double v0 = objective(x0);
    if (!std::isfinite(v0)) throw std::invalid_argument("minimize: objective not finite at x0");
  }

  detail::GslAdapter adapter;
  adapter.objective = &objective;
  adapter.bounds = &bounds;
  adapter.scratch.resize(static_cast<long>(p));

  gsl_multimin_function func;
  func.n = p;
  func.f = &detail::GslAdapter::call;
  func.params = &adapter;

  gsl_vector* u = gsl_vector_alloc(p);
  gsl_vector* step = gsl_vector_alloc(p);
  for (std::size_t j = 0; j < p; ++j)
    gsl_vector_set(u, j, detail::to_unbounded(x0(static_cast<long>(j)), bounds[j].first, bounds[j].second));

  gsl_multimin_fminimizer* mins =
      gsl_multimin_fminimizer_alloc(gsl_multimin_fminimizer_nmsimplex2, p);

  MinimizeResult best;
  best.x = x0;
  bool last_success = false;
  const int max_restarts = 3;
  for (int restart = 0; restart < max_restarts && adapter.evaluations < cfg.max_evals; ++restart) {
    gsl_vector_set_all(step, restart == 0 ? 1.0 : 0.05);
    gsl_multimin_fminimizer_set(mins, &func, u, step);
    int status = GSL_CONTINUE;
    // Plateau detection: on basins flat to machine precision the simplex can
    // stop shrinking long before the size test fires; treat a long streak
    // without meaningful descent as convergence.
    double f_prev = mins->fval;
    const double f_floor = 1e-16 * (1.0 + std::abs(mins->fval));
    int stagnant = 0;
    while (status == GSL_CONTINUE && adapter.evaluations < cfg.max_evals) {
      if (gsl_multimin_fminimizer_iterate(mins) != 0) {
        status = GSL_SUCCESS;  // simplex cannot improve: converged to machine precision
        break;
      }
      status = gsl_multimin_test_size(gsl_multimin_fminimizer_size(mins), cfg.gradient_tol);
      const double progress = f_prev - mins->fval;
      if (progress <= 1e-12 * std::abs(mins->fval) + f_floor) {
        if (++stagnant >= 100) status = GSL_SUCCESS;
      } else {
        stagnant = 0;
      }
      f_prev = mins->fval;
    }
    last_success = status == GSL_SUCCESS;
    const double prev = best.value;
    if (mins->fval < best.value) {
      best.value = mins->fval;
      for (std::size_t j = 0; j < p; ++j)
        best.x(static_cast<long>(j)) =
            detail::to_raw(gsl_vector_get(mins->x, j), bounds[j].first, bounds[j].second);
    }
    gsl_vector_memcpy(u, mins->x);
    // stop polishing once a restart no longer moves the optimum
    if (last_success && restart > 0 &&
        prev - best.value <= 1e-10 * (std::abs(best.value) + 1e-12))
      break;
  }
  gsl_multimin_fminimizer_free(mins);
  gsl_vector_free(step);
  gsl_vector_free(u);

  best.converged = last_success;
  best.evaluations = adapter.evaluations;
  return best;
}

/// Multi-start driver: the supplied x0 is always the first start; the
/// remaining cfg.starts - 1 candidates are sampled uniformly inside the
/// bounds from a deterministic stream. Results are merged by
/// (value, start index), so the outcome does not depend on evaluation order.
inline MinimizeResult minimize_multistart(const Objective& objective, const Eigen::VectorXd& x0,
                                          const OptimizerConfig& cfg) {
  if (cfg.param_bounds.empty())
    throw std::invalid_argument("minimize_multistart: param_bounds required");
  if (cfg.starts < 1) throw std::invalid_argument("minimize_multistart: starts must be >= 1");
  const std::size_t p = cfg.param_bounds.size();
  RandomStream stream(derive_seed(cfg.start_seed, 0, RngStream::optimizer));

  MinimizeResult best;
  long total_evals = 0;
  bool any = false;
  for (int s = 0; s < cfg.starts; ++s) {
    Eigen::VectorXd start(static_cast<long>(p));
    if (s == 0) {
      start = x0;
    } else {
      for (std::size_t j = 0; j < p; ++j)
        start(static_cast<long>(j)) = stream.uniform(cfg.param_bounds[j].first, cfg.param_bounds[j].second);
    }
    double v0;
    try {
      v0 = objective(start);
    } catch (const std::exception&) {
      continue;
    }
    if (!std::isfinite(v0)) continue;
    MinimizeResult r = minimize(objective, start, cfg.param_bounds, cfg);
    total_evals += r.evaluations;
    const bool better =
        !any || r.value < best.value ||
        // prefer a converged result over a non-converged near-tie
        (r.converged && !best.converged &&
         r.value <= best.value + 1e-9 * (1.0 + std::abs(best.value)));
    if (better) {
      best = r;
      any = true;
    }
  }
  if (!any) {
    best.x = x0;
    best.value = std::numeric_limits<double>::infinity();
    best.converged = false;
  }
  best.evaluations = total_evals;
  return best;
}

}  // namespace sdefit::opt

#endif  // SDEFIT_OPTIMIZE_HPP
