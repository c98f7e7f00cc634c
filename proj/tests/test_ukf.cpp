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
#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include <sdefit/models.hpp>
#include <sdefit/sim.hpp>
#include <sdefit/ukf.hpp>

#include "test_support.hpp"

using namespace sdefit;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

TEST_CASE("UKF equals the exact Kalman filter on the scalar linear model") {
  const double a = 0.3, b = 1.0, sigma = 0.4, delta = 0.5, meas_var = 0.05;
  const int n = 60, substeps = 4;

  RandomStream stream(1234);
  const auto path = testsup::ou_exact_path(a, b, sigma, 2.5, delta, n, stream);
  Eigen::MatrixXd obs_states(n + 1, 1);
  for (int k = 0; k <= n; ++k)
    obs_states(k, 0) = path[static_cast<std::size_t>(k)] + std::sqrt(meas_var) * stream.normal();
  const Trajectory obs(TimeGrid(0.0, delta, n), obs_states, {"x"});

  const ModelSpec model(LinearModel{a, b, sigma});
  Eigen::VectorXd x0(1);
  x0 << 2.0;
  Eigen::MatrixXd p0(1, 1);
  p0 << 0.3;
  const auto spec = ukf::ukf_spec_for(model, {0}, meas_var, x0, p0, substeps);
  const double ukf_value = ukf::ukf_negloglik(spec, obs);

  const double dt = delta / substeps;
  Eigen::MatrixXd A(1, 1), Q(1, 1), H(1, 1), R(1, 1);
  A << 1.0 - a * dt;
  Q << sigma * sigma * dt;
  H << 1.0;
  R << meas_var;
  Eigen::VectorXd c(1);
  c << a * b * dt;
  const double kf_value = testsup::kalman_negloglik(A, c, Q, substeps, H, R, x0, p0, obs_states);

  REQUIRE_THAT(ukf_value, WithinRel(kf_value, 1e-6));
}

TEST_CASE("UKF equals the exact Kalman filter on a 2-d affine system, partially observed") {
  // generic stable 2x2 drift f(x) = M (x - mu)
  Eigen::Matrix2d M;
  M << -0.6, 0.2, 0.1, -0.4;
  Eigen::Vector2d mu(1.0, -0.5);
  Eigen::Matrix2d Sigma;
  Sigma << 0.3, 0.0, 0.05, 0.2;
  const double delta = 0.4, meas_var = 0.02;
  const int n = 50, substeps = 3;

  // observations: first component only, synthetic wiggle
  Eigen::MatrixXd obs_states(n + 1, 1);
  RandomStream stream(55);
  for (int k = 0; k <= n; ++k) obs_states(k, 0) = 1.0 + 0.3 * std::sin(0.2 * k) + 0.1 * stream.normal();
  const Trajectory obs(TimeGrid(0.0, delta, n), obs_states, {"x1"});

  ukf::UkfSpec spec;
  spec.drift = [&](const Eigen::VectorXd& x) { return Eigen::VectorXd(M * (x - mu)); };
  spec.process_cov_rate = Sigma * Sigma.transpose();
  spec.observed = {0};
  spec.meas_var = meas_var;
  spec.x0_mean = Eigen::Vector2d(0.8, 0.0);
  spec.x0_cov = 0.1 * Eigen::Matrix2d::Identity();
  spec.substeps = substeps;
  const double ukf_value = ukf::ukf_negloglik(spec, obs);

  const double dt = delta / substeps;
  const Eigen::Matrix2d A = Eigen::Matrix2d::Identity() + M * dt;
  const Eigen::Vector2d c = -M * mu * dt;
  const Eigen::Matrix2d Q = Sigma * Sigma.transpose() * dt;
  Eigen::MatrixXd H(1, 2);
  H << 1.0, 0.0;
  Eigen::MatrixXd R(1, 1);
  R << meas_var;
  const double kf_value =
      testsup::kalman_negloglik(A, c, Q, substeps, H, R, spec.x0_mean, spec.x0_cov, obs_states);

  REQUIRE_THAT(ukf_value, WithinRel(kf_value, 1e-6));
}

TEST_CASE("near-degenerate limit: likelihood over a parameter grid peaks at the truth") {
  // data generated by the same Euler map the filter uses for its transition,
  // so at the true rates the innovations vanish identically
  Eigen::VectorXd x0(2);
  x0 << 0.99, 0.001;
  sim::SimulationPlan plan;
  plan.model = ModelSpec(SirModel{0.5, 0.3, 0.0, 0.0});
  plan.x0 = x0;
  plan.grid = TimeGrid(0.0, 0.5, 80);
  plan.fine_step = 0.125;  // equals delta / substeps below
  plan.seed = 1;
  const auto traj = sim::simulate(plan).trajectory;
  Eigen::MatrixXd i_only = traj.states.col(1);
  const Trajectory obs(traj.grid, i_only, {"i"});

  double best = 1e300;
  double best_alpha = 0.0, best_beta = 0.0;
  for (double alpha : {0.40, 0.45, 0.50, 0.55, 0.60})
    for (double beta : {0.24, 0.27, 0.30, 0.33, 0.36}) {
      const ModelSpec m(SirModel{alpha, beta, 1e-7, 1e-7});
      const auto spec = ukf::ukf_spec_for(m, {1}, 1e-10, x0, 1e-12 * Eigen::Matrix2d::Identity(), 4);
      const double v = ukf::ukf_negloglik(spec, obs);
      if (v < best) {
        best = v;
        best_alpha = alpha;
        best_beta = beta;
      }
    }
  REQUIRE(best_alpha == 0.50);
  REQUIRE(best_beta == 0.30);
}

TEST_CASE("UKF jitter policy keeps a zero initial covariance usable") {
  const ModelSpec model(SirModel{0.5, 0.3, 1e-3, 1e-3});
  Eigen::VectorXd x0(2);
  x0 << 0.99, 0.001;
  Eigen::MatrixXd states(6, 1);
  states << 0.001, 0.0012, 0.0015, 0.0018, 0.002, 0.0024;
  const Trajectory obs(TimeGrid(0.0, 0.5, 5), states, {"i"});
  const auto spec =
      ukf::ukf_spec_for(model, {1}, 1e-8, x0, Eigen::Matrix2d::Zero(), 4);
  REQUIRE(std::isfinite(ukf::ukf_negloglik(spec, obs)));
}

TEST_CASE("masked rows contribute prediction only") {
  const ModelSpec model(SirModel{0.5, 0.3, 1e-3, 1e-3});
  Eigen::VectorXd x0(2);
  x0 << 0.99, 0.001;
  sim::SimulationPlan plan;
  plan.model = model;
  plan.x0 = x0;
  plan.grid = TimeGrid(0.0, 0.5, 40);
  plan.seed = 9;
  const auto traj = sim::simulate(plan).trajectory;
  Eigen::MatrixXd i_only = traj.states.col(1);
  const Trajectory obs(traj.grid, i_only, {"i"});
  const auto spec = ukf::ukf_spec_for(model, {1}, 1e-8, x0, 1e-8 * Eigen::Matrix2d::Identity(), 4);

  const double full = ukf::ukf_negloglik(spec, obs);
  std::vector<char> all(static_cast<std::size_t>(obs.points()), 1);
  REQUIRE(ukf::ukf_negloglik(spec, obs, all) == full);

  std::vector<char> holey = all;
  holey[10] = holey[11] = holey[25] = 0;
  const double masked = ukf::ukf_negloglik(spec, obs, holey);
  REQUIRE(std::isfinite(masked));
  REQUIRE(masked != full);

  // masked rows must be skipped entirely: corrupting them changes nothing
  Trajectory corrupted = obs;
  corrupted.states(10, 0) = 0.9;
  corrupted.states(11, 0) = -0.5;
  corrupted.states(25, 0) = 123.0;
  REQUIRE(ukf::ukf_negloglik(spec, corrupted, holey) == masked);
}

TEST_CASE("fit_partial_ukf recovers SIR rates from the infectious component") {
  // covid-like slow wave, T = 180 days, Delta = 1 day, only i observed
  const double alpha = 0.16, beta = 0.115, s1 = 3e-5, s2 = 3e-5;
  sim::SimulationPlan plan;
  plan.model = ModelSpec(SirModel{alpha, beta, s1, s2});
  plan.x0 = Eigen::Vector2d(0.995, 0.002);
  plan.grid = TimeGrid(0.0, 1.0, 180);
  plan.fine_step = 0.01;
  Trajectory traj;
  for (int attempt = 0;; ++attempt) {
    plan.seed = derive_replicate_seed(2718, 0, static_cast<std::uint64_t>(attempt));
    const auto res = sim::simulate(plan);
    if (!res.premature) {
      traj = res.trajectory;
      break;
    }
    REQUIRE(attempt < 100);
  }
  Eigen::MatrixXd i_only = traj.states.col(1);
  const Trajectory obs(traj.grid, i_only, {"i"});

  ukf::PartialFitSpec fit;
  fit.family = Family::sir;
  fit.x0 = plan.x0;
  opt::OptimizerConfig cfg;
  cfg.starts = 6;
  cfg.start_seed = 31;
  const auto report = ukf::fit_partial_ukf(obs, fit, cfg);
  REQUIRE(report.converged);
  REQUIRE_THAT(report.theta_hat.at("alpha"), WithinRel(alpha, 0.10));
  REQUIRE_THAT(report.theta_hat.at("beta"), WithinRel(beta, 0.10));
}

TEST_CASE("fit_partial_ukf multistart agrees with a single start on a smooth instance") {
  const ModelSpec truth(SirModel{0.5, 0.3, 0.0, 0.0});
  Eigen::VectorXd x0(2);
  x0 << 0.99, 0.001;
  const auto traj = models::ode_solve(truth, x0, TimeGrid(0.0, 0.5, 60));
  Eigen::MatrixXd i_only = traj.states.col(1);
  const Trajectory obs(traj.grid, i_only, {"i"});
  ukf::PartialFitSpec fit;
  fit.family = Family::sir;
  fit.x0 = x0;
  opt::OptimizerConfig one;
  one.starts = 1;
  one.start_seed = 5;
  opt::OptimizerConfig many = one;
  many.starts = 6;
  const auto r1 = ukf::fit_partial_ukf(obs, fit, one);
  const auto rm = ukf::fit_partial_ukf(obs, fit, many);
  REQUIRE_THAT(r1.theta_hat.at("alpha"), WithinAbs(rm.theta_hat.at("alpha"), 2e-3));
  REQUIRE_THAT(r1.theta_hat.at("beta"), WithinAbs(rm.theta_hat.at("beta"), 2e-3));
}
