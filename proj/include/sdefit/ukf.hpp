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
#ifndef SDEFIT_UKF_HPP
#define SDEFIT_UKF_HPP

#include <cmath>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "sdefit/core.hpp"
#include "sdefit/estimators.hpp"
#include "sdefit/models.hpp"
#include "sdefit/optimize.hpp"

namespace sdefit::ukf {

/// State-space description consumed by the filter. The transition is the
/// Euler-Maruyama discretization of the SDE, refined by `substeps` internal
/// drift steps per observation interval, with process covariance
/// Sigma Sigma' dt added per internal step.
struct UkfSpec {
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> drift;
  Eigen::MatrixXd process_cov_rate;  // Sigma Sigma' per unit time
  std::vector<int> observed;         // state components measured at each step
  double meas_var = 0.0;             // shared Gaussian measurement variance
  Eigen::VectorXd x0_mean;
  Eigen::MatrixXd x0_cov;
  int substeps = 4;
  // Merwe sigma-point scaling; fixed across the artifact.
  double spread = 1e-3;    // alpha
  double secondary = 2.0;  // beta
  double tertiary = 0.0;   // kappa
};

inline UkfSpec ukf_spec_for(const ModelSpec& model, std::vector<int> observed, double meas_var,
                            Eigen::VectorXd x0_mean, Eigen::MatrixXd x0_cov, int substeps = 4) {
  UkfSpec spec;
  spec.drift = [model](const Eigen::VectorXd& x) { return models::drift(model, x); };
  const Eigen::MatrixXd sigma = models::diffusion(model);
  spec.process_cov_rate = sigma * sigma.transpose();
  spec.observed = std::move(observed);
  spec.meas_var = meas_var;
  spec.x0_mean = std::move(x0_mean);
  spec.x0_cov = std::move(x0_cov);
  spec.substeps = substeps;
  return spec;
}

namespace detail {

// Fixed-capacity matrix types (d <= 3, p <= 3, 2d+1 <= 7 sigma points) keep
// the filter loop free of heap allocation.
using StateVec = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 3, 1>;
using StateMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;
using SigmaMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 7>;
using ObsMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 7>;

/// Cholesky with the escalating-jitter policy: 1e-12 I, then x10 per retry
/// up to 1e-6 I, then failure.
inline StateMat robust_cholesky(const StateMat& m, const char* what) {
  Eigen::LLT<StateMat> llt(m);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  for (double jitter = 1e-12; jitter <= 1e-6 + 1e-18; jitter *= 10.0) {
    StateMat shifted = m;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return llt.matrixL();
  }
  throw std::runtime_error(std::string(what) + ": covariance not positive definite after jitter");
}

struct SigmaWeights {
  double lambda;
  double wm0, wc0, wi;
};

inline SigmaWeights merwe_weights(int dim, double spread, double secondary, double tertiary) {
  SigmaWeights w;
  w.lambda = spread * spread * (dim + tertiary) - dim;
  const double denom = dim + w.lambda;
  w.wm0 = w.lambda / denom;
  w.wc0 = w.wm0 + (1.0 - spread * spread + secondary);
  w.wi = 0.5 / denom;
  return w;
}

}  // namespace detail

/// Accumulated negative log innovation likelihood of the partial observations
/// under the spec's state-space model. Rows excluded by `row_mask` contribute
/// prediction only (no update), which is how missing observations propagate.
inline double ukf_negloglik(const UkfSpec& spec, const Trajectory& obs,
                            const std::vector<char>& row_mask = {}) {
  const int dim = static_cast<int>(spec.x0_mean.size());
  const int p = static_cast<int>(spec.observed.size());
  if (dim < 1 || dim > 3) throw std::invalid_argument("ukf_negloglik: state dimension must be 1..3");
  if (obs.dim() != p) throw std::invalid_argument("ukf_negloglik: observation dimension mismatch");
  if (!(spec.meas_var > 0.0)) throw std::invalid_argument("ukf_negloglik: meas_var must be > 0");
  if (!row_mask.empty() && static_cast<int>(row_mask.size()) != obs.points())
    throw std::invalid_argument("ukf_negloglik: row mask size mismatch");

  const auto w = detail::merwe_weights(dim, spec.spread, spec.secondary, spec.tertiary);
  const double scale = std::sqrt(dim + w.lambda);
  const double dt = obs.grid.delta / spec.substeps;
  detail::StateMat q_step = spec.process_cov_rate * dt;

  detail::StateVec x = spec.x0_mean;
  detail::StateMat cov = spec.x0_cov;
  double nll = 0.0;

  const int npts = 2 * dim + 1;
  detail::SigmaMat points(dim, npts);
  Eigen::VectorXd drift_in(dim);
  auto draw_sigma_points = [&]() {
    const detail::StateMat L = detail::robust_cholesky(cov, "ukf_negloglik");
    points.col(0) = x;
    for (int j = 0; j < dim; ++j) {
      points.col(1 + j) = x + scale * L.col(j);
      points.col(1 + dim + j) = x - scale * L.col(j);
    }
  };

  auto predict_substep = [&]() {
    draw_sigma_points();
    for (int c = 0; c < npts; ++c) {
      drift_in = points.col(c);
      points.col(c) += spec.drift(drift_in) * dt;
    }
    x = w.wm0 * points.col(0);
    for (int c = 1; c < npts; ++c) x += w.wi * points.col(c);
    cov = q_step;
    detail::StateVec d = points.col(0) - x;
    cov += w.wc0 * d * d.transpose();
    for (int c = 1; c < npts; ++c) {
      d = points.col(c) - x;
      cov += w.wi * d * d.transpose();
    }
  };

  detail::ObsMat zpts(p, npts);
  detail::StateVec zmean(p), innov(p), dz(p);
  detail::StateMat s_cov(p, p);
  detail::SigmaMat cross(dim, p);
  auto update = [&](int k) {
    draw_sigma_points();
    for (int c = 0; c < npts; ++c)
      for (int j = 0; j < p; ++j) zpts(j, c) = points(spec.observed[static_cast<std::size_t>(j)], c);
    zmean = w.wm0 * zpts.col(0);
    for (int c = 1; c < npts; ++c) zmean += w.wi * zpts.col(c);
    s_cov.setIdentity(p, p);
    s_cov *= spec.meas_var;
    cross.setZero(dim, p);
    dz = zpts.col(0) - zmean;
    s_cov += w.wc0 * dz * dz.transpose();
    cross += w.wc0 * (points.col(0) - x) * dz.transpose();
    for (int c = 1; c < npts; ++c) {
      dz = zpts.col(c) - zmean;
      s_cov += w.wi * dz * dz.transpose();
      cross += w.wi * (points.col(c) - x) * dz.transpose();
    }
    const detail::StateMat l_s = detail::robust_cholesky(s_cov, "ukf_negloglik(innovation)");
    for (int j = 0; j < p; ++j) innov(j) = obs.states(k, j);
    innov -= zmean;
    // Solve with the Cholesky factor; also gives log det S.
    detail::StateVec alpha_v = l_s.triangularView<Eigen::Lower>().solve(innov);
    double logdet = 0.0;
    for (int j = 0; j < p; ++j) logdet += 2.0 * std::log(l_s(j, j));
    nll += 0.5 * (logdet + alpha_v.squaredNorm() + p * std::log(2.0 * std::numbers::pi));

    detail::SigmaMat s_inv_cross = l_s.triangularView<Eigen::Lower>().solve(
        detail::SigmaMat(cross.transpose()));  // L^{-1} cross'
    s_inv_cross = l_s.transpose().triangularView<Eigen::Upper>().solve(s_inv_cross);
    const detail::SigmaMat gain = s_inv_cross.transpose();  // cross S^{-1}
    x += gain * innov;
    cov -= gain * s_cov * gain.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
  };

  if (estimators::row_used(row_mask, 0)) update(0);
  for (int k = 1; k <= obs.grid.n; ++k) {
    for (int s = 0; s < spec.substeps; ++s) predict_substep();
    if (estimators::row_used(row_mask, k)) update(k);
  }
  return nll;
}

// --- partial-observation fitting --------------------------------------------------

/// What to fit when only some compartments are observed.
struct PartialFitSpec {
  Family family = Family::sir;     // sir or seir
  Eigen::VectorXd x0;              // initial compartment proportions (fixed)
  std::vector<int> observed = {};  // defaults to the infectious component
  int substeps = 4;
  bool tie_sigma23 = true;         // SEIR: share sigma2 = sigma3
  double x0_sd = 1e-4;             // prior standard deviation on the initial state
};

namespace detail {

inline ModelSpec sde_model_from_params(const PartialFitSpec& fit, const Eigen::VectorXd& t) {
  if (fit.family == Family::sir) return ModelSpec(SirModel{t(0), t(1), t(2), t(3)});
  if (fit.tie_sigma23)
    return ModelSpec(SeirModel{t(0), t(1), t(2), t(3), t(4), t(4)});
  return ModelSpec(SeirModel{t(0), t(1), t(2), t(3), t(4), t(5)});
}

}  // namespace detail

/// Pseudo-likelihood fit of a partially observed epidemic SDE: bounded
/// multi-start minimization of the UKF negative log-likelihood over the
/// rates, the diffusion scales and the measurement standard deviation.
inline EstimateReport fit_partial_ukf(const Trajectory& obs, const PartialFitSpec& fit,
                                      opt::OptimizerConfig cfg,
                                      const std::vector<char>& row_mask = {}) {
  if (fit.family != Family::sir && fit.family != Family::seir)
    throw std::invalid_argument("fit_partial_ukf: epidemic families only");
  const int dim = fit.family == Family::sir ? 2 : 3;
  if (fit.x0.size() != dim) throw std::invalid_argument("fit_partial_ukf: bad x0 dimension");
  std::vector<int> observed = fit.observed;
  if (observed.empty()) observed = {dim - 1};  // infectious component
  if (static_cast<int>(observed.size()) != obs.dim())
    throw std::invalid_argument("fit_partial_ukf: observation dimension mismatch");

  const bool sir = fit.family == Family::sir;
  const int n_sigma = sir ? 2 : (fit.tie_sigma23 ? 2 : 3);
  const int n_rates = sir ? 2 : 3;
  const int np = n_rates + n_sigma + 1;  // + measurement sd

  if (cfg.param_bounds.empty()) {
    cfg.param_bounds.assign(static_cast<std::size_t>(n_rates), {1e-2, 5.0});
    for (int j = 0; j < n_sigma; ++j) cfg.param_bounds.push_back({1e-7, 0.1});
    cfg.param_bounds.push_back({1e-7, 0.1});  // measurement sd
  }
  if (static_cast<int>(cfg.param_bounds.size()) != np)
    throw std::invalid_argument("fit_partial_ukf: bounds dimension mismatch");

  // Quadratic variation of the observed series seeds the noise scales.
  double qv = 0.0;
  for (int k = 1; k <= obs.grid.n; ++k) qv += std::pow(obs.states(k, 0) - obs.states(k - 1, 0), 2);
  const double sd0 = std::sqrt(std::max(qv / obs.grid.horizon(), 1e-12));
  Eigen::VectorXd start(np);
  for (int j = 0; j < n_rates; ++j) start(j) = 0.5;
  for (int j = n_rates; j < np; ++j) start(j) = sd0;
  if (cfg.start_hint.size() == static_cast<std::size_t>(np))
    for (int j = 0; j < np; ++j) start(j) = cfg.start_hint[static_cast<std::size_t>(j)];
  for (int j = 0; j < np; ++j)
    start(j) = std::min(std::max(start(j), cfg.param_bounds[static_cast<std::size_t>(j)].first * 1.001),
                        cfg.param_bounds[static_cast<std::size_t>(j)].second * 0.999);

  const Eigen::MatrixXd x0_cov = fit.x0_sd * fit.x0_sd * Eigen::MatrixXd::Identity(dim, dim);
  auto objective = [&](const Eigen::VectorXd& t) {
    Eigen::VectorXd model_params(n_rates + n_sigma);
    model_params.head(n_rates) = t.head(n_rates);
    model_params.tail(n_sigma) = t.segment(n_rates, n_sigma);
    const ModelSpec model = detail::sde_model_from_params(fit, model_params);
    const double meas_sd = t(np - 1);
    UkfSpec spec = ukf_spec_for(model, observed, meas_sd * meas_sd, fit.x0, x0_cov, fit.substeps);
    return ukf_negloglik(spec, obs, row_mask);
  };

  const auto res = opt::minimize_multistart(objective, start, cfg);

  EstimateReport report;
  if (sir) {
    report.theta_hat["alpha"] = res.x(0);
    report.theta_hat["beta"] = res.x(1);
    report.noise_hat["sigma1"] = res.x(2);
    report.noise_hat["sigma2"] = res.x(3);
  } else {
    report.theta_hat["alpha"] = res.x(0);
    report.theta_hat["lambda"] = res.x(1);
    report.theta_hat["beta"] = res.x(2);
    report.noise_hat["sigma1"] = res.x(3);
    report.noise_hat["sigma2"] = res.x(4);
    report.noise_hat["sigma3"] = fit.tie_sigma23 ? res.x(4) : res.x(5);
  }
  report.noise_hat["meas_var"] = res.x(np - 1) * res.x(np - 1);
  report.objective = res.value;
  report.converged = res.converged && std::isfinite(res.value);
  report.evaluations = res.evaluations;
  report.starts = cfg.starts;
  return report;
}

}  // namespace sdefit::ukf

#endif  // SDEFIT_UKF_HPP
