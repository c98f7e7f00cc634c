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
#ifndef SDEFIT_EXPERIMENTS_HPP
#define SDEFIT_EXPERIMENTS_HPP

#include <algorithm>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <set>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "sdefit/core.hpp"
#include "sdefit/estimators.hpp"
#include "sdefit/sim.hpp"
#include "sdefit/ukf.hpp"

namespace sdefit::experiments {

enum class FitTag { ode_lse, ou_mle, sir_strang, partial_ukf };

inline std::string to_string(FitTag t) {
  switch (t) {
    case FitTag::ode_lse: return "ode_lse";
    case FitTag::ou_mle: return "ou_mle";
    case FitTag::sir_strang: return "sir_strang";
    default: return "partial_ukf";
  }
}

inline FitTag fit_tag_from_string(const std::string& s) {
  if (s == "ode_lse") return FitTag::ode_lse;
  if (s == "ou_mle") return FitTag::ou_mle;
  if (s == "sir_strang") return FitTag::sir_strang;
  if (s == "partial_ukf") return FitTag::partial_ukf;
  throw std::invalid_argument("unknown fit tag '" + s + "'");
}

/// One Monte Carlo replication design: a data-generating model, the
/// estimators to run on each replicate, and the sampling protocol.
/// Measurement noise belongs to the data-generating model: it is overlaid
/// exactly when the data model is the ODE variant of its family.
struct ScenarioConfig {
  ModelSpec data_model;
  std::vector<FitTag> fit_models;
  sim::PerturbationSpec perturbation = sim::NoPerturbation{};
  TimeGrid grid;
  Eigen::VectorXd x0;
  MeasurementSpec measurement;
  int replicates = 200;
  std::uint64_t master_seed = 0;
  double fine_step = 0.01;
  opt::OptimizerConfig optimizer{};
  int workers = 0;  // 0 = all hardware threads; output does not depend on it

  void validate() const {
    data_model.validate();
    if (replicates < 1) throw std::invalid_argument("ScenarioConfig: replicates must be >= 1");
    if (fit_models.empty()) throw std::invalid_argument("ScenarioConfig: no fit models");
    const Family fam = data_model.family();
    for (FitTag t : fit_models) {
      const bool ok = (fam == Family::linear && (t == FitTag::ode_lse || t == FitTag::ou_mle)) ||
                      (fam == Family::sir && t != FitTag::ou_mle) ||
                      (fam == Family::seir && (t == FitTag::ode_lse || t == FitTag::sir_strang));
      if (!ok)
        throw std::invalid_argument("ScenarioConfig: estimator " + to_string(t) +
                                    " is incompatible with the data family");
    }
    if (data_model.is_ode()) measurement.validate();
  }
};

struct Summary {
  double mean = 0.0;
  double variance = 0.0;
  double q05 = 0.0, q25 = 0.0, q50 = 0.0, q75 = 0.0, q95 = 0.0;
  int count = 0;
};

/// Mean/variance and sort-interpolated quantiles of a sample.
inline Summary summarize(std::vector<double> values) {
  Summary s;
  s.count = static_cast<int>(values.size());
  if (values.empty()) return s;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= s.count;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  s.mean = mean;
  s.variance = s.count > 1 ? var / (s.count - 1) : 0.0;
  std::sort(values.begin(), values.end());
  auto quantile = [&](double q) {
    if (s.count == 1) return values[0];
    const double pos = q * (s.count - 1);
    const int lo = static_cast<int>(std::floor(pos));
    const int hi = std::min(lo + 1, s.count - 1);
    const double w = pos - lo;
    return (1.0 - w) * values[static_cast<std::size_t>(lo)] + w * values[static_cast<std::size_t>(hi)];
  };
  s.q05 = quantile(0.05);
  s.q25 = quantile(0.25);
  s.q50 = quantile(0.50);
  s.q75 = quantile(0.75);
  s.q95 = quantile(0.95);
  return s;
}

using Estimates = std::map<std::string, double>;

struct CellResult {
  FitTag fit{};
  std::vector<Estimates> estimates;  // converged replicates only
  std::map<std::string, Summary> summary;
  int non_converged = 0;
  int premature_restarts = 0;
};

struct ReplicationResult {
  std::vector<CellResult> cells;  // one per fit tag, in config order
  int replicates = 0;
};

namespace detail {

/// (s, e, i) -> (s, p = e + i) with SIR labels; the reduction under which
/// SEIR data are fitted with SIR estimators.
inline Trajectory reduce_seir_to_sir(const Trajectory& traj) {
  if (traj.dim() != 3) throw std::invalid_argument("reduce_seir_to_sir: 3 components required");
  Eigen::MatrixXd states(traj.points(), 2);
  states.col(0) = traj.states.col(0);
  states.col(1) = traj.states.col(1) + traj.states.col(2);
  return Trajectory(traj.grid, std::move(states), {"s", "i"});
}

inline void run_indexed(int count, int workers, const std::function<void(int)>& body) {
  int w = workers > 0 ? workers : static_cast<int>(std::thread::hardware_concurrency());
  w = std::max(1, std::min(w, count));
  if (w == 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::exception_ptr first_error = nullptr;
  std::mutex error_mutex;
  for (int t = 0; t < w; ++t) {
    pool.emplace_back([&, t]() {
      try {
        for (int i = t; i < count; i += w) body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

constexpr int kMaxRestarts = 1000;

struct ReplicateData {
  Trajectory observations;  // what the estimators see
  Eigen::VectorXd x0_fit;   // initial state handed to the fits
  Family fit_family;        // family the estimators assume
  int restarts = 0;
};

/// Simulate one replicate (restarting premature epidemics), overlay
/// measurement noise for ODE data models, and apply the SEIR -> SIR
/// observable reduction when needed.
inline ReplicateData make_replicate(const ScenarioConfig& cfg, int replicate,
                                    const sim::PerturbationSpec& perturbation) {
  sim::SimulationPlan plan;
  plan.model = cfg.data_model;
  plan.x0 = cfg.x0;
  plan.grid = cfg.grid;
  plan.fine_step = cfg.fine_step;
  plan.perturbation = perturbation;

  ReplicateData out;
  sim::SimResult sim_result;
  int attempt = 0;
  for (;; ++attempt) {
    if (attempt > kMaxRestarts)
      throw std::runtime_error("run_scenario: premature-restart cap reached for a replicate");
    plan.seed = derive_replicate_seed(cfg.master_seed, static_cast<std::uint64_t>(replicate),
                                      static_cast<std::uint64_t>(attempt));
    sim_result = sim::simulate(plan);
    if (!sim_result.premature) break;
  }
  out.restarts = attempt;

  Trajectory obs = std::move(sim_result.trajectory);
  if (cfg.data_model.is_ode()) obs = sim::add_measurement_noise(obs, cfg.measurement, plan.seed);

  out.fit_family = cfg.data_model.family();
  out.x0_fit = cfg.x0;
  if (cfg.data_model.family() == Family::seir) {
    obs = reduce_seir_to_sir(obs);
    out.fit_family = Family::sir;
    Eigen::VectorXd x0(2);
    x0 << cfg.x0(0), cfg.x0(1) + cfg.x0(2);
    out.x0_fit = x0;
  }
  out.observations = std::move(obs);
  return out;
}

/// Run one estimator on one replicate. Returns estimates plus a converged
/// flag; parameter names are family-standard so cells are comparable.
inline std::pair<Estimates, bool> run_fit(FitTag tag, const ReplicateData& rep,
                                          const ScenarioConfig& cfg) {
  Estimates est;
  switch (tag) {
    case FitTag::ou_mle: {
      try {
        const auto mle = estimators::fit_ou_mle(rep.observations, cfg.grid.delta);
        est["rho"] = mle.rho_hat;
        est["b"] = mle.b_hat;
        if (mle.a_hat) est["a"] = *mle.a_hat;
        if (mle.sigma2_hat) est["sigma2"] = *mle.sigma2_hat;
        return {est, true};
      } catch (const std::exception&) {
        return {est, false};
      }
    }
    case FitTag::ode_lse: {
      auto cfg_opt = cfg.optimizer;
      cfg_opt.start_seed = cfg.master_seed;
      const auto report = estimators::fit_ode_lse(rep.observations, rep.fit_family, rep.x0_fit, cfg_opt);
      est = report.theta_hat;
      if (rep.fit_family == Family::linear)
        est["rho"] = std::exp(-report.theta_hat.at("a") * cfg.grid.delta);
      return {est, report.converged};
    }
    case FitTag::sir_strang: {
      auto cfg_opt = cfg.optimizer;
      cfg_opt.start_seed = cfg.master_seed;
      const auto report = estimators::fit_sir_strang(rep.observations, cfg_opt);
      est = report.theta_hat;
      est["sigma1"] = report.noise_hat.at("sigma1");
      est["sigma2"] = report.noise_hat.at("sigma2");
      return {est, report.converged};
    }
    default: {  // partial_ukf
      ukf::PartialFitSpec fit;
      fit.family = rep.fit_family;
      fit.x0 = rep.x0_fit;
      fit.observed = cfg.measurement.observed_components;
      auto cfg_opt = cfg.optimizer;
      cfg_opt.start_seed = cfg.master_seed;
      Trajectory partial = rep.observations;
      if (static_cast<int>(fit.observed.size()) != partial.dim()) {
        Eigen::MatrixXd cols(partial.points(), static_cast<int>(fit.observed.size()));
        std::vector<std::string> labels;
        for (std::size_t j = 0; j < fit.observed.size(); ++j) {
          cols.col(static_cast<int>(j)) = partial.states.col(fit.observed[j]);
          labels.push_back(partial.labels[static_cast<std::size_t>(fit.observed[j])]);
        }
        partial = Trajectory(partial.grid, std::move(cols), std::move(labels));
      }
      const auto report = ukf::fit_partial_ukf(partial, fit, cfg_opt);
      est = report.theta_hat;
      return {est, report.converged};
    }
  }
}

inline void summarize_cell(CellResult& cell) {
  std::set<std::string> keys;
  for (const auto& e : cell.estimates)
    for (const auto& [k, v] : e) keys.insert(k);
  for (const auto& k : keys) {
    std::vector<double> vals;
    for (const auto& e : cell.estimates) {
      auto it = e.find(k);
      if (it != e.end()) vals.push_back(it->second);
    }
    cell.summary[k] = summarize(std::move(vals));
  }
}

}  // namespace detail

/// Monte Carlo replication: simulate, restart premature epidemics on fresh
/// attempt seeds, run every requested estimator, and summarize. The result
/// is a pure function of the config; worker count only affects wall time.
inline ReplicationResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const int R = cfg.replicates;
  const int F = static_cast<int>(cfg.fit_models.size());
  std::vector<std::vector<Estimates>> est(static_cast<std::size_t>(F),
                                          std::vector<Estimates>(static_cast<std::size_t>(R)));
  std::vector<std::vector<char>> ok(static_cast<std::size_t>(F),
                                    std::vector<char>(static_cast<std::size_t>(R), 0));
  std::vector<int> restarts(static_cast<std::size_t>(R), 0);

  detail::run_indexed(R, cfg.workers, [&](int r) {
    const auto rep = detail::make_replicate(cfg, r, cfg.perturbation);
    restarts[static_cast<std::size_t>(r)] = rep.restarts;
    for (int f = 0; f < F; ++f) {
      auto [e, good] = detail::run_fit(cfg.fit_models[static_cast<std::size_t>(f)], rep, cfg);
      est[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)] = std::move(e);
      ok[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)] = good ? 1 : 0;
    }
  });

  ReplicationResult out;
  out.replicates = R;
  int total_restarts = 0;
  for (int r = 0; r < R; ++r) total_restarts += restarts[static_cast<std::size_t>(r)];
  for (int f = 0; f < F; ++f) {
    CellResult cell;
    cell.fit = cfg.fit_models[static_cast<std::size_t>(f)];
    cell.premature_restarts = total_restarts;
    for (int r = 0; r < R; ++r) {
      if (ok[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)])
        cell.estimates.push_back(est[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)]);
      else
        ++cell.non_converged;
    }
    detail::summarize_cell(cell);
    out.cells.push_back(std::move(cell));
  }
  return out;
}

/// Per-replicate paired estimates from a perturbed/unperturbed pair that
/// shares the Brownian increments and (for ODE data) the measurement noise.
struct ContrastResult {
  std::vector<CellResult> cells;  // linear: rho_ratio/b_diff; SIR: paired rates
  int replicates = 0;
};

/// Common-random-number contrast in the sense of the perturbation studies:
/// each replicate is simulated with and without the perturbation on the same
/// noise streams. Linear family cells carry rho_hat/rho_hat0 and
/// b_hat - b_hat0; SIR cells carry the paired (alpha, beta) estimates.
inline ContrastResult run_contrast(const ScenarioConfig& cfg) {
  cfg.validate();
  if (cfg.data_model.family() == Family::seir)
    throw std::invalid_argument("run_contrast: linear or SIR family required");
  if (sim::is_none(cfg.perturbation))
    throw std::invalid_argument("run_contrast: a perturbation is required");

  const int R = cfg.replicates;
  const int F = static_cast<int>(cfg.fit_models.size());
  std::vector<std::vector<Estimates>> est(static_cast<std::size_t>(F),
                                          std::vector<Estimates>(static_cast<std::size_t>(R)));
  std::vector<std::vector<char>> ok(static_cast<std::size_t>(F),
                                    std::vector<char>(static_cast<std::size_t>(R), 0));

  detail::run_indexed(R, cfg.workers, [&](int r) {
    // Restart until both members of the pair complete; the pair shares the
    // attempt seed so the common-noise contract holds.
    sim::SimulationPlan base, pert;
    base.model = pert.model = cfg.data_model;
    base.x0 = pert.x0 = cfg.x0;
    base.grid = pert.grid = cfg.grid;
    base.fine_step = pert.fine_step = cfg.fine_step;
    base.perturbation = sim::NoPerturbation{};
    pert.perturbation = cfg.perturbation;

    Trajectory obs_base, obs_pert;
    for (int attempt = 0;; ++attempt) {
      if (attempt > detail::kMaxRestarts)
        throw std::runtime_error("run_contrast: premature-restart cap reached");
      base.seed = pert.seed = derive_replicate_seed(cfg.master_seed, static_cast<std::uint64_t>(r),
                                                    static_cast<std::uint64_t>(attempt));
      auto [rb, rp] = sim::with_common_noise(base, pert);
      if (rb.premature || rp.premature) continue;
      obs_base = std::move(rb.trajectory);
      obs_pert = std::move(rp.trajectory);
      break;
    }
    if (cfg.data_model.is_ode()) {
      obs_base = sim::add_measurement_noise(obs_base, cfg.measurement, base.seed);
      obs_pert = sim::add_measurement_noise(obs_pert, cfg.measurement, base.seed);
    }

    detail::ReplicateData rep_base{obs_base, cfg.x0, cfg.data_model.family(), 0};
    detail::ReplicateData rep_pert{obs_pert, cfg.x0, cfg.data_model.family(), 0};
    for (int f = 0; f < F; ++f) {
      const FitTag tag = cfg.fit_models[static_cast<std::size_t>(f)];
      auto [e0, good0] = detail::run_fit(tag, rep_base, cfg);
      auto [e1, good1] = detail::run_fit(tag, rep_pert, cfg);
      Estimates joint;
      bool good = good0 && good1;
      if (good) {
        if (cfg.data_model.family() == Family::linear) {
          joint["rho_ratio"] = e1.at("rho") / e0.at("rho");
          joint["b_diff"] = e1.at("b") - e0.at("b");
          joint["rho"] = e1.at("rho");
          joint["rho0"] = e0.at("rho");
        } else {
          joint["alpha"] = e1.at("alpha");
          joint["beta"] = e1.at("beta");
          joint["alpha0"] = e0.at("alpha");
          joint["beta0"] = e0.at("beta");
        }
      }
      est[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)] = std::move(joint);
      ok[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)] = good ? 1 : 0;
    }
  });

  ContrastResult out;
  out.replicates = R;
  for (int f = 0; f < F; ++f) {
    CellResult cell;
    cell.fit = cfg.fit_models[static_cast<std::size_t>(f)];
    for (int r = 0; r < R; ++r) {
      if (ok[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)])
        cell.estimates.push_back(est[static_cast<std::size_t>(f)][static_cast<std::size_t>(r)]);
      else
        ++cell.non_converged;
    }
    detail::summarize_cell(cell);
    out.cells.push_back(std::move(cell));
  }
  return out;
}

// --- data-reduction robustness sweeps ---------------------------------------------

/// Refit callback: given the (sub)trajectory, an optional row mask and the
/// warm-start parameter values from the previous fit, produce new estimates.
using WaveRefit = std::function<EstimateReport(const Trajectory& obs, const std::vector<char>& mask,
                                               const Estimates& warm)>;

struct NamedRefit {
  std::string name;
  WaveRefit refit;
};

struct TruncationPoint {
  int drop_head = 0;
  int drop_tail = 0;
  std::map<std::string, Estimates> estimates;  // per fit name
  std::map<std::string, bool> converged;
};

namespace detail {

inline Trajectory subrange(const Trajectory& obs, int drop_head, int drop_tail) {
  const int n_new = obs.grid.n - drop_head - drop_tail;
  if (n_new < 2) throw std::invalid_argument("subrange: too few points left");
  TimeGrid grid(obs.grid.time_of(drop_head), obs.grid.delta, n_new);
  Eigen::MatrixXd states = obs.states.middleRows(drop_head, n_new + 1);
  return Trajectory(grid, std::move(states), obs.labels);
}

}  // namespace detail

/// Sequential truncation: first from the tail (0..max_drop_tail points
/// removed), then from the head. Each refit is warm-started from the
/// previous depth's estimates (depth 0 = full data).
inline std::vector<TruncationPoint> truncation_study(const Trajectory& obs,
                                                     const std::vector<NamedRefit>& fits,
                                                     int max_drop_head, int max_drop_tail) {
  std::vector<TruncationPoint> out;
  std::map<std::string, Estimates> warm_tail;

  auto run_depth = [&](int head, int tail, std::map<std::string, Estimates>& warm) {
    TruncationPoint pt;
    pt.drop_head = head;
    pt.drop_tail = tail;
    const Trajectory sub = detail::subrange(obs, head, tail);
    for (const auto& fit : fits) {
      const auto report = fit.refit(sub, {}, warm[fit.name]);
      pt.estimates[fit.name] = report.theta_hat;
      pt.converged[fit.name] = report.converged;
      if (report.converged) warm[fit.name] = report.theta_hat;
    }
    out.push_back(pt);
  };

  for (int tail = 0; tail <= max_drop_tail; ++tail) run_depth(0, tail, warm_tail);
  std::map<std::string, Estimates> warm_head = out.front().estimates;
  for (int head = 1; head <= max_drop_head; ++head) run_depth(head, 0, warm_head);
  return out;
}

struct DeletionPoint {
  int k = 0;                                                // observations removed
  std::map<std::string, std::vector<Estimates>> estimates;  // per fit name, per resample
};

/// Random deletion: for k = 1..k_max, remove k interior observations
/// uniformly without replacement, `resamples` times, and refit on the masked
/// grid (estimators skip masked rows natively). Warm starts come from the
/// full-data fit.
inline std::vector<DeletionPoint> deletion_study(const Trajectory& obs,
                                                 const std::vector<NamedRefit>& fits, int k_max,
                                                 int resamples, std::uint64_t seed) {
  const int points = obs.points();
  if (k_max >= points - 2) throw std::invalid_argument("deletion_study: k_max too large");

  std::map<std::string, Estimates> warm;
  for (const auto& fit : fits) {
    const auto report = fit.refit(obs, {}, {});
    if (report.converged) warm[fit.name] = report.theta_hat;
  }

  std::vector<DeletionPoint> out;
  for (int k = 1; k <= k_max; ++k) {
    DeletionPoint pt;
    pt.k = k;
    for (int s = 0; s < resamples; ++s) {
      RandomStream stream(derive_seed(seed, static_cast<std::uint64_t>(k) * 100003 + s,
                                      RngStream::deletion));
      std::vector<char> mask(static_cast<std::size_t>(points), 1);
      int removed = 0;
      while (removed < k) {
        const int idx = 1 + static_cast<int>(stream.uniform(0.0, 1.0) * (points - 1));
        const int j = std::min(idx, points - 1);
        if (mask[static_cast<std::size_t>(j)]) {
          mask[static_cast<std::size_t>(j)] = 0;
          ++removed;
        }
      }
      for (const auto& fit : fits) {
        const auto report = fit.refit(obs, mask, warm[fit.name]);
        if (report.converged) pt.estimates[fit.name].push_back(report.theta_hat);
      }
    }
    out.push_back(std::move(pt));
  }
  return out;
}

// --- result output -----------------------------------------------------------------

inline void to_json(json& j, const Summary& s) {
  j = json{{"mean", s.mean}, {"variance", s.variance}, {"q05", s.q05}, {"q25", s.q25},
           {"q50", s.q50},   {"q75", s.q75},           {"q95", s.q95}, {"count", s.count}};
}

inline void to_json(json& j, const CellResult& c) {
  j = json{{"fit", to_string(c.fit)},
           {"summary", c.summary},
           {"non_converged", c.non_converged},
           {"premature_restarts", c.premature_restarts}};
}

/// One CSV per cell (columns = parameter names, one row per replicate),
/// plus summary.json; the plotting interface for the replication studies.
inline void write_cell_csv(const CellResult& cell, const std::string& path) {
  std::set<std::string> keys;
  for (const auto& e : cell.estimates)
    for (const auto& [k, v] : e) keys.insert(k);
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_cell_csv: cannot open " + path);
  bool first = true;
  for (const auto& k : keys) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  os << "\n";
  for (const auto& e : cell.estimates) {
    first = true;
    for (const auto& k : keys) {
      os << (first ? "" : ",");
      auto it = e.find(k);
      if (it != e.end()) os << sdefit::detail::fmt17(it->second);
      first = false;
    }
    os << "\n";
  }
}

inline void write_results(const ReplicationResult& result, const std::string& out_dir,
                          const std::string& prefix) {
  std::filesystem::create_directories(out_dir);
  json summary;
  summary["replicates"] = result.replicates;
  for (const auto& cell : result.cells) {
    write_cell_csv(cell, out_dir + "/" + prefix + "_" + to_string(cell.fit) + ".csv");
    summary["cells"].push_back(cell);
  }
  std::ofstream os(out_dir + "/" + prefix + "_summary.json");
  os << summary.dump(2) << "\n";
}

// --- scenario JSON ----------------------------------------------------------------

inline void to_json(json& j, const ScenarioConfig& cfg) {
  std::vector<std::string> tags;
  for (FitTag t : cfg.fit_models) tags.push_back(to_string(t));
  std::vector<double> x0(cfg.x0.data(), cfg.x0.data() + cfg.x0.size());
  j = json{{"data_model", cfg.data_model},
           {"fit_models", tags},
           {"perturbation", cfg.perturbation},
           {"grid", cfg.grid},
           {"x0", x0},
           {"measurement", cfg.measurement},
           {"replicates", cfg.replicates},
           {"master_seed", cfg.master_seed},
           {"fine_step", cfg.fine_step},
           {"optimizer_starts", cfg.optimizer.starts}};
}

inline void from_json(const json& j, ScenarioConfig& cfg) {
  cfg.data_model = j.at("data_model").get<ModelSpec>();
  cfg.fit_models.clear();
  for (const auto& t : j.at("fit_models")) cfg.fit_models.push_back(fit_tag_from_string(t));
  cfg.perturbation = j.value("perturbation", sim::PerturbationSpec{sim::NoPerturbation{}});
  cfg.grid = j.at("grid").get<TimeGrid>();
  const auto x0 = j.at("x0").get<std::vector<double>>();
  cfg.x0 = Eigen::Map<const Eigen::VectorXd>(x0.data(), static_cast<long>(x0.size()));
  if (j.contains("measurement")) cfg.measurement = j.at("measurement").get<MeasurementSpec>();
  cfg.replicates = j.value("replicates", 200);
  cfg.master_seed = j.value("master_seed", std::uint64_t{0});
  cfg.fine_step = j.value("fine_step", 0.01);
  cfg.optimizer.starts = j.value("optimizer_starts", 1);
}

}  // namespace sdefit::experiments

#endif  // SDEFIT_EXPERIMENTS_HPP
