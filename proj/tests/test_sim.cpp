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

using namespace sdefit;
using Catch::Matchers::WithinAbs;

namespace {

sim::SimulationPlan linear_plan(double sigma, std::uint64_t seed) {
  sim::SimulationPlan plan;
  plan.model = ModelSpec(LinearModel{0.05, 0.0, sigma});
  plan.x0 = Eigen::VectorXd::Constant(1, 5.0);
  plan.grid = TimeGrid(0.0, 1.0, 100);
  plan.fine_step = 0.01;
  plan.seed = seed;
  return plan;
}

}  // namespace

TEST_CASE("ODE simulation tracks the exact linear solution to O(fine_step)") {
  const auto result = sim::simulate(linear_plan(0.0, 3));
  double max_dev = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double exact = 5.0 * std::exp(-0.05 * k);
    max_dev = std::max(max_dev, std::abs(result.trajectory.states(k, 0) - exact));
  }
  REQUIRE(max_dev < 5e-4);
  REQUIRE_FALSE(result.premature);
}

TEST_CASE("seed determinism: identical plans give bit-identical output") {
  const auto a = sim::simulate(linear_plan(0.02, 77));
  const auto b = sim::simulate(linear_plan(0.02, 77));
  REQUIRE(a.trajectory.states == b.trajectory.states);
}

TEST_CASE("zero-size jump is identical to no perturbation") {
  auto plan = linear_plan(0.02, 5);
  auto jumped = plan;
  sim::Jump jump;
  jump.t_p = 50.0;
  jump.h = Eigen::VectorXd::Zero(1);
  jumped.perturbation = jump;
  const auto a = sim::simulate(plan);
  const auto b = sim::simulate(jumped);
  REQUIRE(a.trajectory.states == b.trajectory.states);
}

TEST_CASE("common noise: jump pair identical before t_p, diverges after") {
  auto base = linear_plan(0.0158, 11);
  auto pert = base;
  sim::Jump jump;
  jump.t_p = 50.0;
  jump.h = Eigen::VectorXd::Constant(1, 0.5);
  pert.perturbation = jump;
  const auto [a, b] = sim::with_common_noise(base, pert);
  for (int k = 0; k < 50; ++k) REQUIRE(a.trajectory.states(k, 0) == b.trajectory.states(k, 0));
  // jump lands exactly at t = 50 (a grid node), so the observation at k = 50
  // already carries it
  REQUIRE_THAT(b.trajectory.states(50, 0) - a.trajectory.states(50, 0), WithinAbs(0.5, 1e-12));
  bool diverged = false;
  for (int k = 50; k <= 100; ++k)
    diverged = diverged || a.trajectory.states(k, 0) != b.trajectory.states(k, 0);
  REQUIRE(diverged);
}

TEST_CASE("sigma -> 0 makes the SDE trajectory approach the ODE trajectory") {
  auto ode = linear_plan(0.0, 23);
  auto sde = linear_plan(1e-8, 23);
  const auto [a, b] = sim::with_common_noise(ode, sde);
  REQUIRE((a.trajectory.states - b.trajectory.states).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("one-step moments match the exact OU transition") {
  const double a = 0.5, b = 1.0, sigma = 0.3, delta = 0.5, x0 = 2.0;
  const auto t = models::ou_transition(a, b, sigma, delta);
  const int reps = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    sim::SimulationPlan plan;
    plan.model = ModelSpec(LinearModel{a, b, sigma});
    plan.x0 = Eigen::VectorXd::Constant(1, x0);
    plan.grid = TimeGrid(0.0, delta, 1);
    plan.fine_step = 0.005;
    plan.seed = derive_replicate_seed(99, static_cast<std::uint64_t>(r));
    const double x1 = sim::simulate(plan).trajectory.states(1, 0);
    sum += x1;
    sumsq += x1 * x1;
  }
  const double mean = sum / reps;
  const double var = (sumsq - reps * mean * mean) / (reps - 1);
  const double se_mean = std::sqrt(var / reps);
  const double se_var = var * std::sqrt(2.0 / reps);
  REQUIRE_THAT(mean, WithinAbs(t.cond_mean(x0), 4.0 * se_mean));
  REQUIRE_THAT(var, WithinAbs(t.cond_var, 4.0 * se_var));
}

TEST_CASE("subsampling invariance: same-path EM difference shrinks with the step") {
  // EM on the linear SDE sharing one Brownian path across three resolutions
  // (coarse increments are pairwise sums of fine ones); the RMS endpoint gap
  // between successive resolutions must drop by >= 1.5x per halving.
  const double a = 0.5, b = 0.0, sigma = 0.4, T = 10.0;
  const int n4 = 4000;  // finest resolution
  const double h4 = T / n4;
  RandomStream stream(31);

  double ss1 = 0.0, ss2 = 0.0;
  for (int path = 0; path < 200; ++path) {
    std::vector<double> dw(n4);
    for (auto& v : dw) v = std::sqrt(h4) * stream.normal();
    auto em_at = [&](int coarsen) {
      const double h = h4 * coarsen;
      double x = 3.0;
      for (int j = 0; j < n4; j += coarsen) {
        double inc = 0.0;
        for (int c = 0; c < coarsen; ++c) inc += dw[static_cast<std::size_t>(j + c)];
        x += -a * (x - b) * h + sigma * inc;
      }
      return x;
    };
    const double e4 = em_at(4), e2 = em_at(2), e1 = em_at(1);
    ss1 += (e4 - e2) * (e4 - e2);
    ss2 += (e2 - e1) * (e2 - e1);
  }
  REQUIRE(std::sqrt(ss1 / ss2) >= 1.5);
}

TEST_CASE("random mean: conditional mean unchanged, variance inflated per the formula") {
  const double a = 0.05, b = 0.0, sigma0 = 0.05, delta = 1.0, x0 = 5.0, sigma_b = 1.0;
  const double sigma = noise_match_linear(a, sigma0);
  const auto t = models::ou_transition(a, b, sigma, delta);
  const int reps = 100000;
  double sum = 0.0, sumsq = 0.0;
  for (int r = 0; r < reps; ++r) {
    sim::SimulationPlan plan;
    plan.model = ModelSpec(LinearModel{a, b, sigma});
    plan.x0 = Eigen::VectorXd::Constant(1, x0);
    plan.grid = TimeGrid(0.0, delta, 1);
    plan.fine_step = 0.01;
    plan.perturbation = sim::RandomMean{sigma_b};
    plan.seed = derive_replicate_seed(123, static_cast<std::uint64_t>(r));
    const double x1 = sim::simulate(plan).trajectory.states(1, 0);
    sum += x1;
    sumsq += x1 * x1;
  }
  const double mean = sum / reps;
  const double var = (sumsq - reps * mean * mean) / (reps - 1);
  const double se_mean = std::sqrt(var / reps);
  const double se_var = var * std::sqrt(2.0 / reps);
  REQUIRE_THAT(mean, WithinAbs(t.cond_mean(x0), 4.0 * se_mean));
  const double rho = t.rho;
  const double expected = t.cond_var + sigma_b * sigma_b * (1.0 - rho) * (1.0 - rho);
  REQUIRE_THAT(var, WithinAbs(expected, 4.0 * se_var));
}

TEST_CASE("measurement noise") {
  sim::SimulationPlan plan;
  plan.model = ModelSpec(SirModel{0.5, 0.3, 0.0, 0.0});
  plan.x0 = Eigen::Vector2d(0.99, 0.001);
  plan.grid = TimeGrid(0.0, 0.5, 80);
  plan.seed = 1;
  const auto traj = sim::simulate(plan).trajectory;

  SECTION("zero covariance is the identity on observed components") {
    const auto noisy = sim::add_measurement_noise(traj, MeasurementSpec({0.0, 0.0}, {0, 1}), 9);
    REQUIRE(noisy.states == traj.states);
  }
  SECTION("projection keeps only the observed component") {
    const auto only_i = sim::add_measurement_noise(traj, MeasurementSpec({0.0}, {1}), 9);
    REQUIRE(only_i.dim() == 1);
    REQUIRE(only_i.labels[0] == "i");
    REQUIRE(only_i.states.col(0) == traj.states.col(1));
  }
  SECTION("sample variance of the added noise matches gamma^2") {
    Eigen::MatrixXd wide(10001, 1);
    wide.setZero();
    const Trajectory flat(TimeGrid(0.0, 1.0, 10000), wide, {"x"});
    const double gamma2 = 2.5e-3;
    const auto noisy = sim::add_measurement_noise(flat, MeasurementSpec({gamma2}, {0}), 21);
    const double mean = noisy.states.col(0).mean();
    const double var =
        (noisy.states.col(0).array() - mean).square().sum() / (noisy.points() - 1);
    const double se_var = gamma2 * std::sqrt(2.0 / noisy.points());
    REQUIRE_THAT(var, WithinAbs(gamma2, 4.0 * se_var));
  }
}

TEST_CASE("premature epidemics are flagged") {
  sim::SimulationPlan plan;
  // enormous diffusion so the infection count crosses zero almost surely
  plan.model = ModelSpec(SirModel{0.5, 0.3, 0.0, 0.05});
  plan.x0 = Eigen::Vector2d(0.99, 0.001);
  plan.grid = TimeGrid(0.0, 0.5, 80);
  plan.seed = 2;
  const auto result = sim::simulate(plan);
  REQUIRE(result.premature);
  REQUIRE(result.trajectory.states.allFinite());
}

TEST_CASE("SIR jump that leaves the simplex is rejected at injection") {
  sim::SimulationPlan plan;
  plan.model = ModelSpec(SirModel{0.5, 0.3, 0.0, 0.0});
  plan.x0 = Eigen::Vector2d(0.99, 0.001);
  plan.grid = TimeGrid(0.0, 0.5, 80);
  sim::Jump jump;
  jump.t_p = 10.0;
  jump.h = Eigen::Vector2d(0.5, 0.0);  // pushes s + i above 1
  plan.perturbation = jump;
  plan.seed = 3;
  REQUIRE_THROWS_AS(sim::simulate(plan), std::invalid_argument);
}

TEST_CASE("plan validation") {
  auto plan = linear_plan(0.1, 1);
  plan.fine_step = 0.3;  // does not divide delta = 1
  REQUIRE_THROWS_AS(sim::simulate(plan), std::invalid_argument);
  plan = linear_plan(0.1, 1);
  plan.perturbation = sim::RandomMean{-1.0};
  REQUIRE_THROWS_AS(sim::simulate(plan), std::invalid_argument);
  sim::SimulationPlan sir_plan;
  sir_plan.model = ModelSpec(SirModel{0.5, 0.3, 0.0, 0.0});
  sir_plan.x0 = Eigen::Vector2d(0.99, 0.001);
  sir_plan.grid = TimeGrid(0.0, 0.5, 10);
  sir_plan.perturbation = sim::RandomMean{0.5};  // linear-only perturbation
  REQUIRE_THROWS_AS(sim::simulate(sir_plan), std::invalid_argument);
}

TEST_CASE("SimulationPlan JSON round trip") {
  auto plan = linear_plan(0.02, 99);
  sim::Jump jump;
  jump.t_p = 30.0;
  jump.h = Eigen::VectorXd::Constant(1, -0.2);
  plan.perturbation = jump;
  const json j = plan;
  sim::SimulationPlan back = j.get<sim::SimulationPlan>();
  REQUIRE(back.seed == 99);
  REQUIRE(back.grid.n == plan.grid.n);
  const auto& back_jump = std::get<sim::Jump>(back.perturbation);
  REQUIRE(back_jump.t_p == 30.0);
  REQUIRE(back_jump.h(0) == -0.2);
  const auto a = sim::simulate(plan);
  const auto b = sim::simulate(back);
  REQUIRE(a.trajectory.states == b.trajectory.states);
}
