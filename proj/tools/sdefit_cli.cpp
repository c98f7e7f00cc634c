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

// Command-line front end. Every subcommand is a thin shell over one library
// operation; machine output goes to files, progress to stderr, so stdout
// stays clean for piping.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <sdefit/sdefit.hpp>

namespace {

constexpr const char* kVersion = "sdefit 0.1.0";

std::vector<double> parse_list(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(std::strtod(cell.c_str(), nullptr));
  return out;
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<long>(v.size()));
}

sdefit::json read_json_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  sdefit::json j;
  is >> j;
  return j;
}

void write_json_file(const sdefit::json& j, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path);
  os << j.dump(2) << "\n";
}

struct SimulateArgs {
  std::string model = "linear";
  double a = 0.1, b = 0.0, sigma = 0.0;
  double alpha = 0.5, beta = 0.3, lambda = 1.0;
  double sigma1 = 0.0, sigma2 = 0.0, sigma3 = 0.0;
  std::string x0_csv;
  double t0 = 0.0, T = 0.0, delta = 1.0, fine_step = 0.01;
  std::uint64_t seed = 0;
  double jump_t = 0.0;
  std::string jump_h_csv;
  double random_mean_sd = 0.0, quad_drift_sd = 0.0;
  std::string meas_sd_csv;
  std::string out;
};

int run_simulate(const SimulateArgs& args) {
  sdefit::sim::SimulationPlan plan;
  if (args.model == "linear") {
    plan.model = sdefit::ModelSpec(sdefit::LinearModel{args.a, args.b, args.sigma});
  } else if (args.model == "sir") {
    plan.model = sdefit::ModelSpec(sdefit::SirModel{args.alpha, args.beta, args.sigma1, args.sigma2});
  } else if (args.model == "seir") {
    plan.model = sdefit::ModelSpec(
        sdefit::SeirModel{args.alpha, args.lambda, args.beta, args.sigma1, args.sigma2, args.sigma3});
  } else {
    throw CLI::ValidationError("--model must be linear, sir or seir");
  }
  const auto x0 = parse_list(args.x0_csv);
  plan.x0 = to_vector(x0);
  const int n = static_cast<int>(std::lround(args.T / args.delta));
  plan.grid = sdefit::TimeGrid(args.t0, args.delta, n);
  plan.fine_step = args.fine_step;
  plan.seed = args.seed;
  if (!args.jump_h_csv.empty()) {
    sdefit::sim::Jump jump;
    jump.t_p = args.jump_t;
    jump.h = to_vector(parse_list(args.jump_h_csv));
    plan.perturbation = jump;
  } else if (args.random_mean_sd > 0.0) {
    plan.perturbation = sdefit::sim::RandomMean{args.random_mean_sd};
  } else if (args.quad_drift_sd > 0.0) {
    plan.perturbation = sdefit::sim::QuadraticDrift{args.quad_drift_sd};
  }

  auto result = sdefit::sim::simulate(plan);
  if (result.premature)
    std::cerr << "warning: trajectory left the simplex before T (flagged premature)\n";
  sdefit::Trajectory out = std::move(result.trajectory);
  if (!args.meas_sd_csv.empty()) {
    const auto sds = parse_list(args.meas_sd_csv);
    std::vector<double> cov;
    for (double s : sds) cov.push_back(s * s);
    out = sdefit::sim::add_measurement_noise(out, sdefit::MeasurementSpec::all_of(plan.model, cov),
                                             plan.seed);
  }
  sdefit::write_csv(out, args.out);
  std::cerr << "wrote " << args.out << " (" << out.points() << " rows)\n";
  return 0;
}

struct FitArgs {
  std::string input, estimator, family = "linear", out;
  std::string x0_csv;
  std::string observed_csv;
  int starts = 1;
  int substeps = 4;
  std::uint64_t seed = 0;
};

int run_fit(const FitArgs& args) {
  const auto obs = sdefit::read_csv_file(args.input);
  sdefit::opt::OptimizerConfig cfg;
  cfg.starts = args.starts;
  cfg.start_seed = args.seed;
  sdefit::EstimateReport report;
  if (args.estimator == "ou_mle") {
    const auto mle = sdefit::estimators::fit_ou_mle(obs, obs.grid.delta);
    report.theta_hat["b"] = mle.b_hat;
    report.theta_hat["rho"] = mle.rho_hat;
    if (mle.a_hat) report.theta_hat["a"] = *mle.a_hat;
    if (mle.sigma2_hat) report.noise_hat["sigma2"] = *mle.sigma2_hat;
    report.converged = true;
    report.evaluations = mle.iterations;
    report.starts = 1;
  } else if (args.estimator == "ode_lse") {
    sdefit::Family family = args.family == "linear" ? sdefit::Family::linear
                            : args.family == "sir"  ? sdefit::Family::sir
                                                    : sdefit::Family::seir;
    report = sdefit::estimators::fit_ode_lse(obs, family, to_vector(parse_list(args.x0_csv)), cfg);
  } else if (args.estimator == "sir_strang") {
    report = sdefit::estimators::fit_sir_strang(obs, cfg);
  } else if (args.estimator == "partial_ukf") {
    sdefit::ukf::PartialFitSpec fit;
    fit.family = args.family == "sir" ? sdefit::Family::sir : sdefit::Family::seir;
    fit.x0 = to_vector(parse_list(args.x0_csv));
    fit.substeps = args.substeps;
    if (!args.observed_csv.empty())
      for (double v : parse_list(args.observed_csv)) fit.observed.push_back(static_cast<int>(v));
    report = sdefit::ukf::fit_partial_ukf(obs, fit, cfg);
  } else {
    throw CLI::ValidationError("--estimator must be ode_lse, ou_mle, sir_strang or partial_ukf");
  }
  write_json_file(sdefit::json(report), args.out);
  std::cerr << "wrote " << args.out << "\n";
  return 0;
}

struct ReplicateArgs {
  std::string config, out;
  int workers = 0;
  std::optional<int> replicates;
  std::optional<std::uint64_t> seed;
  bool contrast = false;
};

int run_replicate(const ReplicateArgs& args) {
  auto cfg = read_json_file(args.config).get<sdefit::experiments::ScenarioConfig>();
  cfg.workers = args.workers;
  if (args.replicates) cfg.replicates = *args.replicates;  // flags win over the file
  if (args.seed) cfg.master_seed = *args.seed;
  std::filesystem::create_directories(args.out);
  if (args.contrast) {
    const auto result = sdefit::experiments::run_contrast(cfg);
    sdefit::json summary;
    summary["replicates"] = result.replicates;
    for (const auto& cell : result.cells) {
      sdefit::experiments::write_cell_csv(
          cell, args.out + "/contrast_" + to_string(cell.fit) + ".csv");
      summary["cells"].push_back(cell);
    }
    write_json_file(summary, args.out + "/contrast_summary.json");
  } else {
    const auto result = sdefit::experiments::run_scenario(cfg);
    sdefit::experiments::write_results(result, args.out, "cell");
  }
  std::cerr << "wrote results to " << args.out << "\n";
  return 0;
}

struct MomentsArgs {
  std::string scenario, sweep, out;
  double jump_h = 0.0, jump_tp = 0.0, sigma_b = -1.0;
};

int run_moments(const MomentsArgs& args) {
  auto base = read_json_file(args.scenario).get<sdefit::moments::LinearScenario>();
  std::vector<sdefit::moments::LinearScenario> grid{base};
  if (!args.sweep.empty()) {
    const auto eq = args.sweep.find('=');
    if (eq == std::string::npos) throw CLI::ValidationError("--sweep expects KEY=lo:hi:step");
    const std::string key = args.sweep.substr(0, eq);
    double lo, hi, step;
    if (std::sscanf(args.sweep.c_str() + eq + 1, "%lf:%lf:%lf", &lo, &hi, &step) != 3 || step <= 0)
      throw CLI::ValidationError("--sweep expects KEY=lo:hi:step");
    grid.clear();
    for (double v = lo; v <= hi + 1e-12; v += step) {
      auto sc = base;
      if (key == "T")
        sc.n = static_cast<int>(std::lround(v / sc.delta));
      else if (key == "delta")
        sc.delta = v;
      else if (key == "a")
        sc.a = v;
      else if (key == "x0")
        sc.x0 = v;
      else if (key == "sigma0")
        sc.sigma0 = v;
      else if (key == "sigma")
        sc.sigma = v;
      else if (key == "n")
        sc.n = static_cast<int>(std::lround(v));
      else
        throw CLI::ValidationError("--sweep key must be T, delta, a, x0, sigma, sigma0 or n");
      grid.push_back(sc);
    }
  }
  sdefit::json out = sdefit::json::array();
  for (const auto& sc : grid) {
    sdefit::json row;
    row["scenario"] = sc;
    row["moments_ode"] = sdefit::moments::moments_yz_ode(sc);
    row["expect_rho_ode"] = sdefit::moments::expect_rho_ode(sc);
    row["var_rho_ode"] = sdefit::moments::var_rho_ode(sc);
    if (sc.sigma > 0.0) {
      row["moments_sde"] = sdefit::moments::moments_yz_sde(sc);
      row["expect_rho_sde"] = sdefit::moments::expect_rho_sde(sc);
      row["var_rho_sde"] = sdefit::moments::var_rho_sde(sc);
    }
    const auto b_ode = sdefit::moments::b_hat_moments(sc, sdefit::moments::DataModel::ode);
    row["b_hat_ode"] = {{"mean", b_ode.first}, {"variance", b_ode.second}};
    if (sc.sigma > 0.0) {
      const auto b_sde = sdefit::moments::b_hat_moments(sc, sdefit::moments::DataModel::sde);
      row["b_hat_sde"] = {{"mean", b_sde.first}, {"variance", b_sde.second}};
    }
    if (args.jump_h != 0.0) {
      row["moments_ode_jump"] = sdefit::moments::moments_yz_ode_perturbed(sc, args.jump_h, args.jump_tp);
      row["expect_rho_ode_jump"] =
          sdefit::moments::expect_rho_ode_perturbed(sc, args.jump_h, args.jump_tp);
      row["b_hat_jump_bias"] = sdefit::moments::b_hat_jump_bias(sc, args.jump_h, args.jump_tp);
      if (sc.sigma > 0.0)
        row["moments_sde_jump"] =
            sdefit::moments::moments_yz_sde_perturbed(sc, args.jump_h, args.jump_tp);
    }
    if (args.sigma_b >= 0.0) {
      row["random_mean_cond_var_ode"] =
          sdefit::moments::random_mean_cond_var(sc, args.sigma_b, sdefit::moments::DataModel::ode);
      if (sc.sigma > 0.0)
        row["random_mean_cond_var_sde"] =
            sdefit::moments::random_mean_cond_var(sc, args.sigma_b, sdefit::moments::DataModel::sde);
    }
    out.push_back(row);
  }
  write_json_file(out, args.out);
  std::cerr << "wrote " << args.out << " (" << out.size() << " scenario rows)\n";
  return 0;
}

struct CovidFitArgs {
  std::string input, start, end, out;
  std::string family = "sir", variant = "sde";
  double population = 5.86e6;
  int starts = 8, substeps = 4, paths = 50;
  std::uint64_t band_seed = 1;
  std::string band;
};

int run_covid_fit(const CovidFitArgs& args) {
  const auto series = sdefit::covid::read_case_csv(args.input, args.population);
  const auto family = args.family == "sir" ? sdefit::Family::sir : sdefit::Family::seir;
  const auto window = sdefit::covid::build_window(series, sdefit::covid::Date::parse(args.start),
                                                  sdefit::covid::Date::parse(args.end), family);
  sdefit::opt::OptimizerConfig cfg;
  cfg.starts = args.starts;
  const auto variant =
      args.variant == "ode" ? sdefit::covid::Variant::ode : sdefit::covid::Variant::sde;
  const auto report = sdefit::covid::fit_wave(window, family, variant, cfg, {}, args.substeps);
  write_json_file(sdefit::json(report), args.out);
  std::cerr << "wrote " << args.out << "\n";

  if (!args.band.empty()) {
    sdefit::ModelSpec model = [&]() -> sdefit::ModelSpec {
      const double alpha = report.theta_hat.at("alpha");
      const double beta = report.theta_hat.at("beta");
      if (family == sdefit::Family::sir) {
        const double s1 = variant == sdefit::covid::Variant::sde ? report.noise_hat.at("sigma1") : 0.0;
        const double s2 = variant == sdefit::covid::Variant::sde ? report.noise_hat.at("sigma2") : 0.0;
        return sdefit::ModelSpec(sdefit::SirModel{alpha, beta, s1, s2});
      }
      const double lambda = report.theta_hat.at("lambda");
      const double s1 = variant == sdefit::covid::Variant::sde ? report.noise_hat.at("sigma1") : 0.0;
      const double s2 = variant == sdefit::covid::Variant::sde ? report.noise_hat.at("sigma2") : 0.0;
      const double s3 = variant == sdefit::covid::Variant::sde ? report.noise_hat.at("sigma3") : 0.0;
      return sdefit::ModelSpec(sdefit::SeirModel{alpha, lambda, beta, s1, s2, s3});
    }();
    const auto band = sdefit::covid::predict_band(window, model, args.paths, args.band_seed);
    sdefit::covid::write_band_csv(band, args.band);
    std::cerr << "wrote " << args.band << "\n";
  }
  return 0;
}

struct CovidRobustnessArgs {
  std::string input, start, end, out;
  std::string family = "sir", mode = "truncate";
  double population = 5.86e6;
  int drop_head = 50, drop_tail = 70;
  int k_max = 30, resamples = 100;
  int starts = 4, substeps = 4;
  std::uint64_t seed = 1;
};

int run_covid_robustness(const CovidRobustnessArgs& args) {
  const auto series = sdefit::covid::read_case_csv(args.input, args.population);
  const auto family = args.family == "sir" ? sdefit::Family::sir : sdefit::Family::seir;
  const auto start = sdefit::covid::Date::parse(args.start);
  const auto end = sdefit::covid::Date::parse(args.end);
  const auto window = sdefit::covid::build_window(series, start, end, family);
  sdefit::opt::OptimizerConfig cfg;
  cfg.starts = args.starts;
  const auto refits = sdefit::covid::make_wave_refits(series, start, end, family, cfg, args.substeps);
  std::filesystem::create_directories(args.out);

  if (args.mode == "truncate") {
    const auto points = sdefit::experiments::truncation_study(window.i_series, refits,
                                                              args.drop_head, args.drop_tail);
    std::ofstream os(args.out + "/truncation.csv");
    os << "drop_head,drop_tail,fit,alpha,beta,R0,converged\n";
    for (const auto& pt : points)
      for (const auto& [name, est] : pt.estimates) {
        os << pt.drop_head << "," << pt.drop_tail << "," << name;
        for (const char* key : {"alpha", "beta", "R0"}) {
          os << ",";
          if (est.count(key)) os << sdefit::detail::fmt17(est.at(key));
        }
        os << "," << (pt.converged.at(name) ? 1 : 0) << "\n";
      }
    std::cerr << "wrote " << args.out << "/truncation.csv\n";
  } else if (args.mode == "delete") {
    const auto points = sdefit::experiments::deletion_study(window.i_series, refits, args.k_max,
                                                            args.resamples, args.seed);
    std::ofstream os(args.out + "/deletion.csv");
    os << "k,fit,resample,alpha,beta,R0\n";
    for (const auto& pt : points)
      for (const auto& [name, rows] : pt.estimates)
        for (std::size_t s = 0; s < rows.size(); ++s) {
          os << pt.k << "," << name << "," << s;
          for (const char* key : {"alpha", "beta", "R0"}) {
            os << ",";
            if (rows[s].count(key)) os << sdefit::detail::fmt17(rows[s].at(key));
          }
          os << "\n";
        }
    std::cerr << "wrote " << args.out << "/deletion.csv\n";
  } else {
    throw CLI::ValidationError("--mode must be truncate or delete");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Simulation and estimator-robustness toolkit for ODE/SDE models"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  SimulateArgs sim_args;
  auto* sim_cmd = app.add_subcommand("simulate", "Generate one trajectory to CSV");
  sim_cmd->add_option("--model", sim_args.model, "linear | sir | seir")->required();
  sim_cmd->add_option("--a", sim_args.a);
  sim_cmd->add_option("--b", sim_args.b);
  sim_cmd->add_option("--sigma", sim_args.sigma);
  sim_cmd->add_option("--alpha", sim_args.alpha);
  sim_cmd->add_option("--beta", sim_args.beta);
  sim_cmd->add_option("--lambda", sim_args.lambda);
  sim_cmd->add_option("--sigma1", sim_args.sigma1);
  sim_cmd->add_option("--sigma2", sim_args.sigma2);
  sim_cmd->add_option("--sigma3", sim_args.sigma3);
  sim_cmd->add_option("--x0", sim_args.x0_csv, "initial state, comma separated")->required();
  sim_cmd->add_option("--t0", sim_args.t0);
  sim_cmd->add_option("--T", sim_args.T, "time horizon")->required();
  sim_cmd->add_option("--delta", sim_args.delta, "observation step")->required();
  sim_cmd->add_option("--fine-step", sim_args.fine_step);
  sim_cmd->add_option("--seed", sim_args.seed);
  sim_cmd->add_option("--jump-t", sim_args.jump_t);
  sim_cmd->add_option("--jump-h", sim_args.jump_h_csv, "jump vector, comma separated");
  sim_cmd->add_option("--random-mean-sd", sim_args.random_mean_sd);
  sim_cmd->add_option("--quad-drift-sd", sim_args.quad_drift_sd);
  sim_cmd->add_option("--meas-sd", sim_args.meas_sd_csv, "measurement sd per component");
  sim_cmd->add_option("--out", sim_args.out)->required();

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand("fit", "Fit one estimator to a trajectory CSV");
  fit_cmd->add_option("--input", fit_args.input)->required();
  fit_cmd->add_option("--estimator", fit_args.estimator, "ode_lse | ou_mle | sir_strang | partial_ukf")
      ->required();
  fit_cmd->add_option("--family", fit_args.family);
  fit_cmd->add_option("--x0", fit_args.x0_csv);
  fit_cmd->add_option("--observed", fit_args.observed_csv, "observed state components");
  fit_cmd->add_option("--starts", fit_args.starts);
  fit_cmd->add_option("--substeps", fit_args.substeps);
  fit_cmd->add_option("--seed", fit_args.seed);
  fit_cmd->add_option("--out", fit_args.out)->required();

  ReplicateArgs rep_args;
  auto* rep_cmd = app.add_subcommand("replicate", "Monte Carlo replication study from a JSON config");
  rep_cmd->add_option("--config", rep_args.config)->required();
  rep_cmd->add_option("--out", rep_args.out)->required();
  rep_cmd->add_option("--workers", rep_args.workers);
  int rep_replicates = -1;
  std::int64_t rep_seed = -1;
  rep_cmd->add_option("--replicates", rep_replicates, "override the config");
  rep_cmd->add_option("--seed", rep_seed, "override the config master seed");

  ReplicateArgs con_args;
  con_args.contrast = true;
  auto* con_cmd = app.add_subcommand("contrast", "Common-random-number perturbation contrast");
  con_cmd->add_option("--config", con_args.config)->required();
  con_cmd->add_option("--out", con_args.out)->required();
  con_cmd->add_option("--workers", con_args.workers);
  int con_replicates = -1;
  std::int64_t con_seed = -1;
  con_cmd->add_option("--replicates", con_replicates);
  con_cmd->add_option("--seed", con_seed);

  MomentsArgs mom_args;
  auto* mom_cmd = app.add_subcommand("moments", "Evaluate the bias/variance approximations");
  mom_cmd->add_option("--scenario", mom_args.scenario, "LinearScenario JSON")->required();
  mom_cmd->add_option("--sweep", mom_args.sweep, "KEY=lo:hi:step");
  mom_cmd->add_option("--jump-h", mom_args.jump_h);
  mom_cmd->add_option("--jump-tp", mom_args.jump_tp);
  mom_cmd->add_option("--sigma-b", mom_args.sigma_b);
  mom_cmd->add_option("--out", mom_args.out)->required();

  CovidFitArgs cf_args;
  auto* cf_cmd = app.add_subcommand("covid-fit", "Fit an epidemic wave from daily case counts");
  cf_cmd->add_option("--input", cf_args.input, "CSV with header date,positives")->required();
  cf_cmd->add_option("--population", cf_args.population);
  cf_cmd->add_option("--start", cf_args.start, "YYYY-MM-DD")->required();
  cf_cmd->add_option("--end", cf_args.end, "YYYY-MM-DD")->required();
  cf_cmd->add_option("--family", cf_args.family, "sir | seir");
  cf_cmd->add_option("--variant", cf_args.variant, "ode | sde");
  cf_cmd->add_option("--starts", cf_args.starts);
  cf_cmd->add_option("--substeps", cf_args.substeps);
  cf_cmd->add_option("--out", cf_args.out)->required();
  cf_cmd->add_option("--band", cf_args.band, "also write a prediction-band CSV here");
  cf_cmd->add_option("--paths", cf_args.paths);
  cf_cmd->add_option("--band-seed", cf_args.band_seed);

  CovidRobustnessArgs cr_args;
  auto* cr_cmd = app.add_subcommand("covid-robustness", "Truncation / deletion stability sweeps");
  cr_cmd->add_option("--input", cr_args.input)->required();
  cr_cmd->add_option("--population", cr_args.population);
  cr_cmd->add_option("--start", cr_args.start)->required();
  cr_cmd->add_option("--end", cr_args.end)->required();
  cr_cmd->add_option("--family", cr_args.family);
  cr_cmd->add_option("--mode", cr_args.mode, "truncate | delete")->required();
  cr_cmd->add_option("--drop-head", cr_args.drop_head);
  cr_cmd->add_option("--drop-tail", cr_args.drop_tail);
  cr_cmd->add_option("--k-max", cr_args.k_max);
  cr_cmd->add_option("--resamples", cr_args.resamples);
  cr_cmd->add_option("--starts", cr_args.starts);
  cr_cmd->add_option("--substeps", cr_args.substeps);
  cr_cmd->add_option("--seed", cr_args.seed);
  cr_cmd->add_option("--out", cr_args.out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? 2 : 0;
  }

  try {
    if (*sim_cmd) return run_simulate(sim_args);
    if (*fit_cmd) return run_fit(fit_args);
    if (*rep_cmd) {
      if (rep_replicates > 0) rep_args.replicates = rep_replicates;
      if (rep_seed >= 0) rep_args.seed = static_cast<std::uint64_t>(rep_seed);
      return run_replicate(rep_args);
    }
    if (*con_cmd) {
      if (con_replicates > 0) con_args.replicates = con_replicates;
      if (con_seed >= 0) con_args.seed = static_cast<std::uint64_t>(con_seed);
      return run_replicate(con_args);
    }
    if (*mom_cmd) return run_moments(mom_args);
    if (*cf_cmd) return run_covid_fit(cf_args);
    if (*cr_cmd) return run_covid_robustness(cr_args);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
