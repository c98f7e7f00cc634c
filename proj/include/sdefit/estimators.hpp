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
#ifndef SDEFIT_ESTIMATORS_HPP
#define SDEFIT_ESTIMATORS_HPP

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sdefit/core.hpp"
#include "sdefit/models.hpp"
#include "sdefit/optimize.hpp"

namespace sdefit::estimators {

/// Estimators evaluate masked observations when a mask is supplied (deletion
/// studies); an empty mask means every row is used.
inline bool row_used(const std::vector<char>& mask, int k) {
  return mask.empty() || mask[static_cast<std::size_t>(k)] != 0;
}

// --- OU maximum likelihood ------------------------------------------------------

/// Closed-form OU MLE. a_hat (and with it sigma2_hat) does not exist when
/// rho_hat <= 0, which happens with sizable probability when x0 is close
/// to b; rho_hat itself is always reported.
struct OuMle {
  std::optional<double> a_hat;
  double b_hat = 0.0;
  double rho_hat = 0.0;
  std::optional<double> sigma2_hat;
  int iterations = 0;
};

/// The (b, rho) equations are coupled; they are solved by fixed-point
/// iteration started at the sample mean of y_1..y_n, alternating the rho
/// equation and the b equation until |b step| < 1e-12 (cap 200 iterations).
inline OuMle fit_ou_mle(const std::vector<double>& y, double delta) {
  const int n = static_cast<int>(y.size()) - 1;
  if (n < 2) throw std::invalid_argument("fit_ou_mle: need at least 3 observations");
  if (!(delta > 0.0)) throw std::invalid_argument("fit_ou_mle: delta must be > 0");

  double ybar = 0.0;
  for (int k = 1; k <= n; ++k) ybar += y[k];
  ybar /= n;

  double b = ybar;
  double rho = 0.0;
  int it = 0;
  for (; it < 200; ++it) {
    double num = 0.0, den = 0.0;
    for (int k = 1; k <= n; ++k) {
      num += (y[k] - b) * (y[k - 1] - b);
      den += (y[k - 1] - b) * (y[k - 1] - b);
    }
    if (den <= 0.0) throw std::invalid_argument("fit_ou_mle: degenerate (constant) data");
    rho = num / den;
    if (std::abs(1.0 - rho) < 1e-12)
      throw std::runtime_error("fit_ou_mle: rho at unit root, b equation singular");
    const double b_next = ybar + rho / (n * (1.0 - rho)) * (y[n] - y[0]);
    const double step = std::abs(b_next - b);
    b = b_next;
    if (step < 1e-12) break;
  }

  OuMle out;
  out.b_hat = b;
  out.rho_hat = rho;
  out.iterations = it + 1;
  if (rho > 0.0) {
    const double a = -std::log(rho) / delta;
    out.a_hat = a;
    double ss = 0.0;
    for (int k = 1; k <= n; ++k) {
      const double r = y[k] - y[k - 1] * rho - b * (1.0 - rho);
      ss += r * r;
    }
    out.sigma2_hat = 2.0 * a * ss / (n * (1.0 - rho));
  }
  return out;
}

inline OuMle fit_ou_mle(const Trajectory& obs, double delta) {
  if (obs.dim() != 1) throw std::invalid_argument("fit_ou_mle: scalar observations required");
  if (std::abs(obs.grid.delta - delta) > 1e-12 * delta)
    throw std::invalid_argument("fit_ou_mle: delta does not match the observation grid");
  std::vector<double> y(obs.states.data(), obs.states.data() + obs.points());
  return fit_ou_mle(y, delta);
}

// --- nonlinear least squares for ODE variants -------------------------------------

namespace detail {

inline std::vector<std::string> theta_names(Family family) {
  switch (family) {
    case Family::linear: return {"a", "b"};
    case Family::sir: return {"alpha", "beta"};
    default: return {"alpha", "lambda", "beta"};
  }
}

inline ModelSpec ode_model_from_theta(Family family, const Eigen::VectorXd& theta) {
  switch (family) {
    case Family::linear: return ModelSpec(LinearModel{theta(0), theta(1), 0.0});
    case Family::sir: return ModelSpec(SirModel{theta(0), theta(1), 0.0, 0.0});
    default: return ModelSpec(SeirModel{theta(0), theta(1), theta(2), 0.0, 0.0, 0.0});
  }
}

/// Map observation columns to state components by label.
inline std::vector<int> observed_indices(const Trajectory& obs, const ModelSpec& model) {
  const auto names = model.state_labels();
  std::vector<int> idx;
  for (const auto& l : obs.labels) {
    auto it = std::find(names.begin(), names.end(), l);
    if (it == names.end())
      throw std::invalid_argument("observation label '" + l + "' is not a state component");
    idx.push_back(static_cast<int>(it - names.begin()));
  }
  return idx;
}

}  // namespace detail

/// Nonlinear least squares against the deterministic solution, over the
/// observed components only. The initial state is fixed (not estimated);
/// the residual covariance is estimated afterwards with divisor
/// (#rows used) - dim(theta).
inline EstimateReport fit_ode_lse(const Trajectory& obs, Family family, const Eigen::VectorXd& x0,
                                  opt::OptimizerConfig cfg, const std::vector<char>& row_mask = {}) {
  const auto names = detail::theta_names(family);
  const int p = static_cast<int>(names.size());

  if (cfg.param_bounds.empty()) {
    if (family == Family::linear) {
      const double lo = obs.states.minCoeff(), hi = obs.states.maxCoeff();
      const double span = std::max(1.0, hi - lo);
      cfg.param_bounds = {{1e-4, 10.0}, {lo - span, hi + span}};
    } else {
      cfg.param_bounds.assign(static_cast<std::size_t>(p), {1e-3, 10.0});
    }
  }

  auto objective = [&](const Eigen::VectorXd& theta) {
    const ModelSpec model = detail::ode_model_from_theta(family, theta);
    const Trajectory path = models::ode_solve(model, x0, obs.grid);
    const auto idx = detail::observed_indices(obs, model);
    double ss = 0.0;
    for (int k = 0; k <= obs.grid.n; ++k) {
      if (!row_used(row_mask, k)) continue;
      for (std::size_t j = 0; j < idx.size(); ++j) {
        const double r = obs.states(k, static_cast<int>(j)) - path.states(k, idx[j]);
        ss += r * r;
      }
    }
    return ss;
  };

  Eigen::VectorXd start(p);
  if (cfg.start_hint.size() == static_cast<std::size_t>(p)) {
    for (int j = 0; j < p; ++j) start(j) = cfg.start_hint[static_cast<std::size_t>(j)];
  } else if (family == Family::linear) {
    start << 0.1, obs.states.mean();
    start(1) = std::min(std::max(start(1), cfg.param_bounds[1].first + 1e-9),
                        cfg.param_bounds[1].second - 1e-9);
  } else if (family == Family::sir) {
    start << 0.5, 0.5;
  } else {
    start << 0.5, 1.0, 0.5;
  }
  for (int j = 0; j < p; ++j)
    start(j) = std::min(std::max(start(j), cfg.param_bounds[static_cast<std::size_t>(j)].first + 1e-12),
                        cfg.param_bounds[static_cast<std::size_t>(j)].second - 1e-12);

  const auto res = opt::minimize_multistart(objective, start, cfg);

  EstimateReport report;
  for (int j = 0; j < p; ++j) report.theta_hat[names[static_cast<std::size_t>(j)]] = res.x(j);
  report.objective = res.value;
  report.converged = res.converged;
  report.evaluations = res.evaluations;
  report.starts = cfg.starts;

  int used = 0;
  for (int k = 0; k <= obs.grid.n; ++k)
    if (row_used(row_mask, k)) ++used;
  if (used <= p) throw std::invalid_argument("fit_ode_lse: need more observations than parameters");
  const ModelSpec best = detail::ode_model_from_theta(family, res.x);
  const Trajectory path = models::ode_solve(best, x0, obs.grid);
  const auto idx = detail::observed_indices(obs, best);
  for (std::size_t j = 0; j < idx.size(); ++j) {
    double ss = 0.0;
    for (int k = 0; k <= obs.grid.n; ++k) {
      if (!row_used(row_mask, k)) continue;
      const double r = obs.states(k, static_cast<int>(j)) - path.states(k, idx[j]);
      ss += r * r;
    }
    report.noise_hat["var_" + obs.labels[j]] = ss / (used - p);
  }
  if (!res.converged && report.message.empty())
    report.message = "optimizer stopped before the size tolerance; best found value reported";
  return report;
}

// --- Strang-splitting pseudo-likelihood for the stochastic SIR ----------------------

/// Pseudo negative log-likelihood of (s, i) observations under the Strang
/// splitting of the stochastic SIR model:
///   z_k = F^{-1}(x_k, d/2) - e^{A d} F(x_{k-1}, d/2),  z_k ~ N(0, Omega_d),
/// plus the log-Jacobian of the inverse half flow. Observations that the
/// closed-form flow cannot carry (blow-up before the half step, s <= 0,
/// i >= 1) make the value a +1e10 penalty so optimizers retreat. Data with
/// s + i marginally above 1 (possible under measurement noise) are evaluated
/// by the analytic continuation of the flow, which stays finite there.
inline double strang_negloglik(double alpha, double beta, double sigma1, double sigma2,
                               const Trajectory& obs, double delta) {
  if (obs.dim() != 2) throw std::invalid_argument("strang_negloglik: (s, i) observations required");
  if (std::abs(obs.grid.delta - delta) > 1e-12 * delta)
    throw std::invalid_argument("strang_negloglik: delta does not match the observation grid");
  const int n = obs.grid.n;
  const auto split = models::sir_split(alpha, beta, sigma1, sigma2, delta);
  const double det_omega = split.omega(0, 0) * split.omega(1, 1) - split.omega(0, 1) * split.omega(1, 0);
  if (!(det_omega > 0.0) || !std::isfinite(det_omega))
    throw std::runtime_error("strang_negloglik: Omega_Delta is not invertible");
  Eigen::Matrix2d omega_inv;
  omega_inv << split.omega(1, 1), -split.omega(0, 1), -split.omega(1, 0), split.omega(0, 0);
  omega_inv /= det_omega;

  constexpr double penalty = 1e10;
  const double half = 0.5 * delta;

  auto half_forward = models::detail::sir_flow_eval(obs.states(0, 0), obs.states(0, 1), alpha, half);
  if (!half_forward) return penalty;

  double quad = 0.0, logjac = 0.0;
  for (int k = 1; k <= n; ++k) {
    const double s = obs.states(k, 0), i = obs.states(k, 1);
    if (!(s > 0.0) || !(1.0 - i > 0.0)) return penalty;
    const auto back = models::detail::sir_flow_eval(s, i, alpha, -half);
    if (!back) return penalty;
    const double image = (*back)(0) * (1.0 - (*back)(1));
    if (!(image > 0.0)) return penalty;
    logjac += std::log(image) - std::log(s * (1.0 - i));

    const Eigen::Vector2d z = *back - split.expm * (*half_forward);
    quad += z.dot(omega_inv * z);

    if (k < n) {
      half_forward = models::detail::sir_flow_eval(s, i, alpha, half);
      if (!half_forward) return penalty;
    }
  }
  return 0.5 * n * std::log(det_omega) + 0.5 * quad - logjac;
}

/// Pseudo-MLE of the stochastic SIR model: bounded multi-start minimization
/// of strang_negloglik over (alpha, beta, sigma1, sigma2).
inline EstimateReport fit_sir_strang(const Trajectory& obs, opt::OptimizerConfig cfg) {
  if (obs.dim() != 2) throw std::invalid_argument("fit_sir_strang: (s, i) observations required");
  const double delta = obs.grid.delta;
  if (cfg.param_bounds.empty())
    cfg.param_bounds = {{1e-3, 10.0}, {1e-3, 10.0}, {1e-6, 1.0}, {1e-6, 1.0}};

  // Quadratic-variation start for the diffusions; neutral rates.
  double qv1 = 0.0, qv2 = 0.0;
  for (int k = 1; k <= obs.grid.n; ++k) {
    qv1 += std::pow(obs.states(k, 0) - obs.states(k - 1, 0), 2);
    qv2 += std::pow(obs.states(k, 1) - obs.states(k - 1, 1), 2);
  }
  const double T = obs.grid.horizon();
  Eigen::VectorXd start(4);
  start << 0.5, 0.5, std::sqrt(std::max(qv1 / T, 1e-10)), std::sqrt(std::max(qv2 / T, 1e-10));
  if (cfg.start_hint.size() == 4)
    for (int j = 0; j < 4; ++j) start(j) = cfg.start_hint[static_cast<std::size_t>(j)];
  for (int j = 0; j < 4; ++j)
    start(j) = std::min(std::max(start(j), cfg.param_bounds[static_cast<std::size_t>(j)].first * 1.001),
                        cfg.param_bounds[static_cast<std::size_t>(j)].second * 0.999);

  auto objective = [&](const Eigen::VectorXd& t) {
    return strang_negloglik(t(0), t(1), t(2), t(3), obs, delta);
  };
  const auto res = opt::minimize_multistart(objective, start, cfg);

  EstimateReport report;
  report.theta_hat["alpha"] = res.x(0);
  report.theta_hat["beta"] = res.x(1);
  report.noise_hat["sigma1"] = res.x(2);
  report.noise_hat["sigma2"] = res.x(3);
  report.objective = res.value;
  report.converged = res.converged && res.value < 1e9;
  report.evaluations = res.evaluations;
  report.starts = cfg.starts;
  if (!report.converged) report.message = "no start reached an interior optimum";
  return report;
}

}  // namespace sdefit::estimators

#endif  // SDEFIT_ESTIMATORS_HPP
