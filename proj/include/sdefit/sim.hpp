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
#ifndef SDEFIT_SIM_HPP
#define SDEFIT_SIM_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <variant>

#include "sdefit/core.hpp"
#include "sdefit/models.hpp"
#include "sdefit/rng.hpp"

namespace sdefit::sim {

// --- perturbation specifications -----------------------------------------------

struct NoPerturbation {};

/// Instantaneous additive shift of the state by h at the first fine-step node
/// with time >= t_p.
struct Jump {
  double t_p = 0.0;
  Eigen::VectorXd h;
};

/// The long-term level b is redrawn as b_t ~ N(b, sigma_b^2) once per
/// observation interval and held constant inside it. Linear family only.
struct RandomMean {
  double sigma_b = 0.0;
};

/// A quadratic error term gamma_t (x - b)^2 is added to the drift, with
/// gamma_t ~ N(0, sigma_gamma^2) redrawn once per observation interval.
/// Linear family only.
struct QuadraticDrift {
  double sigma_gamma = 0.0;
};

using PerturbationSpec = std::variant<NoPerturbation, Jump, RandomMean, QuadraticDrift>;

inline bool is_none(const PerturbationSpec& p) { return std::holds_alternative<NoPerturbation>(p); }

/// Everything needed to generate one trajectory reproducibly.
struct SimulationPlan {
  ModelSpec model;
  Eigen::VectorXd x0;
  TimeGrid grid;
  double fine_step = 0.01;
  PerturbationSpec perturbation = NoPerturbation{};
  std::uint64_t seed = 0;

  /// Fine steps per observation interval; checks that fine_step divides delta.
  int substeps() const {
    if (!(fine_step > 0.0) || fine_step > grid.delta + 1e-12)
      throw std::invalid_argument("SimulationPlan: need 0 < fine_step <= delta");
    const double ratio = grid.delta / fine_step;
    const int m = static_cast<int>(std::lround(ratio));
    if (m < 1 || std::abs(ratio - m) > 1e-9 * ratio)
      throw std::invalid_argument("SimulationPlan: delta / fine_step must be an integer");
    return m;
  }

  void validate() const {
    model.validate();
    if (x0.size() != model.dim()) throw std::invalid_argument("SimulationPlan: bad x0 dimension");
    (void)substeps();
    if (const auto* j = std::get_if<Jump>(&perturbation)) {
      if (j->h.size() != model.dim())
        throw std::invalid_argument("SimulationPlan: jump vector dimension mismatch");
      if (!(j->t_p > grid.t0) || !(j->t_p <= grid.t0 + grid.horizon()))
        throw std::invalid_argument("SimulationPlan: t_p must lie in (t0, t0 + T]");
    }
    if (const auto* r = std::get_if<RandomMean>(&perturbation)) {
      if (model.family() != Family::linear)
        throw std::invalid_argument("SimulationPlan: RandomMean requires the linear family");
      if (!(r->sigma_b >= 0.0)) throw std::invalid_argument("SimulationPlan: sigma_b must be >= 0");
    }
    if (const auto* q = std::get_if<QuadraticDrift>(&perturbation)) {
      if (model.family() != Family::linear)
        throw std::invalid_argument("SimulationPlan: QuadraticDrift requires the linear family");
      if (!(q->sigma_gamma >= 0.0))
        throw std::invalid_argument("SimulationPlan: sigma_gamma must be >= 0");
    }
  }
};

struct SimResult {
  Trajectory trajectory;
  /// True when an epidemic trajectory left the simplex (e.g. infections hit
  /// zero) before the end of the window; callers typically restart these
  /// replicates on a fresh attempt seed.
  bool premature = false;
};

namespace detail {

inline bool exits_simplex(const ModelSpec& model, const Eigen::VectorXd& x) {
  switch (model.family()) {
    case Family::linear:
      return false;
    case Family::sir:
      return x(0) <= 0.0 || x(1) <= 0.0 || x(0) + x(1) >= 1.0;
    default:
      return x(0) <= 0.0 || x(1) < 0.0 || x(2) <= 0.0 || x(0) + x(1) + x(2) >= 1.0;
  }
}

}  // namespace detail

/// Euler-Maruyama generation at the plan's fine step, subsampled onto the
/// observation grid. The Brownian increments always come from the dedicated
/// brownian stream (one d-vector per fine step, drawn even when the diffusion
/// is zero) so that plans sharing a seed share the identical increment
/// stream; perturbation draws come from their own stream.
inline SimResult simulate(const SimulationPlan& plan) {
  plan.validate();
  const int d = plan.model.dim();
  const int m = plan.substeps();
  const double fine = plan.grid.delta / m;
  const double sqrt_fine = std::sqrt(fine);

  RandomStream brownian(derive_seed(plan.seed, 0, RngStream::brownian));
  RandomStream pert(derive_seed(plan.seed, 0, RngStream::perturbation));

  const Eigen::MatrixXd sigma = models::diffusion(plan.model);
  const auto* jump = std::get_if<Jump>(&plan.perturbation);
  const auto* random_mean = std::get_if<RandomMean>(&plan.perturbation);
  const auto* quad = std::get_if<QuadraticDrift>(&plan.perturbation);

  // First fine node with time >= t_p (the node at which the jump lands).
  long jump_node = -1;
  if (jump) {
    const long total = static_cast<long>(plan.grid.n) * m;
    const double pos = (jump->t_p - plan.grid.t0) / fine;
    jump_node = static_cast<long>(std::ceil(pos - 1e-9));
    if (jump_node < 1) jump_node = 1;
    if (jump_node > total) jump_node = total;
  }

  Eigen::MatrixXd states(plan.grid.n + 1, d);
  Eigen::VectorXd x = plan.x0;
  states.row(0) = x.transpose();
  bool premature = detail::exits_simplex(plan.model, x);
  bool frozen = false;

  ModelSpec local = plan.model;  // holds the interval-local b_t for RandomMean
  Eigen::VectorXd noise(d);
  long node = 0;
  for (int k = 0; k < plan.grid.n; ++k) {
    double gamma_t = 0.0;
    if (random_mean && random_mean->sigma_b > 0.0) {
      auto lin = plan.model.linear();
      lin.b += random_mean->sigma_b * pert.normal();
      local = ModelSpec(lin);
    }
    if (quad) gamma_t = quad->sigma_gamma > 0.0 ? quad->sigma_gamma * pert.normal() : 0.0;

    for (int j = 0; j < m; ++j) {
      for (int c = 0; c < d; ++c) noise(c) = brownian.normal();
      ++node;
      if (!frozen) {
        Eigen::VectorXd f = models::drift(local, x);
        if (quad && gamma_t != 0.0) {
          const double dev = x(0) - plan.model.linear().b;
          f(0) += gamma_t * dev * dev;
        }
        x += f * fine + sigma * (sqrt_fine * noise);
        if (jump && node == jump_node) {
          x += jump->h;
          if (plan.model.family() != Family::linear && x.sum() > 1.0 + 1e-12)
            throw std::invalid_argument("simulate: jump pushes the state out of the simplex");
        }
        if (!premature && detail::exits_simplex(plan.model, x)) {
          premature = true;
          if (plan.model.family() != Family::linear) frozen = true;  // hold state, flag replicate
        }
      }
    }
    states.row(k + 1) = x.transpose();
  }
  return {Trajectory(plan.grid, std::move(states), plan.model.state_labels()), premature};
}

/// Generate two plans against the identical Brownian increment stream.
/// The plans must share grid, fine step and seed; they may differ in
/// perturbation and/or model (same dimension).
inline std::pair<SimResult, SimResult> with_common_noise(const SimulationPlan& plan_a,
                                                         const SimulationPlan& plan_b) {
  if (plan_a.grid.n != plan_b.grid.n || plan_a.grid.delta != plan_b.grid.delta ||
      plan_a.grid.t0 != plan_b.grid.t0)
    throw std::invalid_argument("with_common_noise: plans must share the grid");
  if (plan_a.fine_step != plan_b.fine_step)
    throw std::invalid_argument("with_common_noise: plans must share fine_step");
  if (plan_a.seed != plan_b.seed)
    throw std::invalid_argument("with_common_noise: plans must share the seed");
  if (plan_a.model.dim() != plan_b.model.dim())
    throw std::invalid_argument("with_common_noise: plans must share the state dimension");
  return {simulate(plan_a), simulate(plan_b)};
}

/// y_k = x_k + e_k with independent N(0, gamma_i^2) noise on each observed
/// component; unobserved components are dropped from the output.
inline Trajectory add_measurement_noise(const Trajectory& traj, const MeasurementSpec& meas,
                                        std::uint64_t seed) {
  meas.validate();
  for (int c : meas.observed_components)
    if (c >= traj.dim()) throw std::invalid_argument("add_measurement_noise: component out of range");
  RandomStream stream(derive_seed(seed, 0, RngStream::measurement));
  const int p = static_cast<int>(meas.observed_components.size());
  Eigen::MatrixXd out(traj.points(), p);
  std::vector<std::string> labels(p);
  std::vector<double> sd(p);
  for (int j = 0; j < p; ++j) {
    labels[j] = traj.labels[meas.observed_components[j]];
    sd[j] = std::sqrt(meas.covariance[j]);
  }
  for (int k = 0; k < traj.points(); ++k)
    for (int j = 0; j < p; ++j)
      out(k, j) = traj.states(k, meas.observed_components[j]) + (sd[j] > 0.0 ? sd[j] * stream.normal() : 0.0);
  return Trajectory(traj.grid, std::move(out), std::move(labels));
}

// --- serialization ----------------------------------------------------------------

inline void to_json(json& j, const PerturbationSpec& p) {
  if (std::holds_alternative<NoPerturbation>(p)) {
    j = json{{"kind", "none"}};
  } else if (const auto* v = std::get_if<Jump>(&p)) {
    std::vector<double> h(v->h.data(), v->h.data() + v->h.size());
    j = json{{"kind", "jump"}, {"t_p", v->t_p}, {"h", h}};
  } else if (const auto* v = std::get_if<RandomMean>(&p)) {
    j = json{{"kind", "random_mean"}, {"sigma_b", v->sigma_b}};
  } else {
    j = json{{"kind", "quadratic_drift"}, {"sigma_gamma", std::get<QuadraticDrift>(p).sigma_gamma}};
  }
}

inline void from_json(const json& j, PerturbationSpec& p) {
  const std::string kind = j.at("kind").get<std::string>();
  if (kind == "none") {
    p = NoPerturbation{};
  } else if (kind == "jump") {
    Jump v;
    v.t_p = j.at("t_p");
    const auto h = j.at("h").get<std::vector<double>>();
    v.h = Eigen::Map<const Eigen::VectorXd>(h.data(), static_cast<long>(h.size()));
    p = v;
  } else if (kind == "random_mean") {
    p = RandomMean{j.at("sigma_b")};
  } else if (kind == "quadratic_drift") {
    p = QuadraticDrift{j.at("sigma_gamma")};
  } else {
    throw std::invalid_argument("PerturbationSpec: unknown kind '" + kind + "'");
  }
}

inline void to_json(json& j, const SimulationPlan& p) {
  std::vector<double> x0(p.x0.data(), p.x0.data() + p.x0.size());
  j = json{{"model", p.model},       {"x0", x0},
           {"grid", p.grid},         {"fine_step", p.fine_step},
           {"perturbation", p.perturbation}, {"seed", p.seed}};
}

inline void from_json(const json& j, SimulationPlan& p) {
  p.model = j.at("model").get<ModelSpec>();
  const auto x0 = j.at("x0").get<std::vector<double>>();
  p.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<long>(x0.size()));
  p.grid = j.at("grid").get<TimeGrid>();
  p.fine_step = j.value("fine_step", 0.01);
  p.perturbation = j.value("perturbation", PerturbationSpec{NoPerturbation{}});
  p.seed = j.at("seed").get<std::uint64_t>();
  p.validate();
}

}  // namespace sdefit::sim

#endif  // SDEFIT_SIM_HPP
