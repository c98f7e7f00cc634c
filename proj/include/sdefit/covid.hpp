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
#ifndef SDEFIT_COVID_HPP
#define SDEFIT_COVID_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sdefit/core.hpp"
#include "sdefit/estimators.hpp"
#include "sdefit/experiments.hpp"
#include "sdefit/sim.hpp"
#include "sdefit/ukf.hpp"

namespace sdefit::covid {

// --- calendar dates -----------------------------------------------------------------

/// Proleptic Gregorian calendar date with serial-day arithmetic
/// (days_from_civil / civil_from_days).
struct Date {
  int y = 1970;
  int m = 1;
  int d = 1;

  static Date parse(const std::string& iso) {
    Date out;
    if (std::sscanf(iso.c_str(), "%d-%d-%d", &out.y, &out.m, &out.d) != 3)
      throw std::invalid_argument("Date: expected YYYY-MM-DD, got '" + iso + "'");
    if (out.m < 1 || out.m > 12 || out.d < 1 || out.d > 31)
      throw std::invalid_argument("Date: out of range '" + iso + "'");
    return out;
  }

  int serial() const {
    int yy = y - (m <= 2);
    const int era = (yy >= 0 ? yy : yy - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(yy - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                         static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return era * 146097 + static_cast<int>(doe) - 719468;
  }

  static Date from_serial(int z) {
    z += 719468;
    const int era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const int yy = static_cast<int>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    const unsigned dd = doy - (153 * mp + 2) / 5 + 1;
    const unsigned mm = mp < 10 ? mp + 3 : mp - 9;
    return Date{yy + (mm <= 2), static_cast<int>(mm), static_cast<int>(dd)};
  }

  Date plus_days(int n) const { return from_serial(serial() + n); }

  std::string str() const {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
    return buf;
  }

  friend bool operator==(const Date& a, const Date& b) { return a.serial() == b.serial(); }
  friend bool operator<(const Date& a, const Date& b) { return a.serial() < b.serial(); }
};

// --- case data -----------------------------------------------------------------------

/// Daily positive-test counts for a population of size N.
struct CaseSeries {
  std::vector<Date> dates;            // strictly increasing, daily
  std::vector<double> daily_positives;
  double population = 0.0;

  void validate() const {
    if (dates.size() != daily_positives.size() || dates.empty())
      throw std::invalid_argument("CaseSeries: dates and counts must match and be non-empty");
    if (!(population > 0.0)) throw std::invalid_argument("CaseSeries: population must be > 0");
    for (std::size_t i = 1; i < dates.size(); ++i)
      if (dates[i].serial() != dates[i - 1].serial() + 1)
        throw std::invalid_argument("CaseSeries: dates must be consecutive days");
    for (double c : daily_positives)
      if (!(c >= 0.0)) throw std::invalid_argument("CaseSeries: counts must be >= 0");
  }

  int index_of(const Date& d) const {
    const int offset = d.serial() - dates.front().serial();
    if (offset < 0 || offset >= static_cast<int>(dates.size()))
      throw std::invalid_argument("CaseSeries: date " + d.str() + " outside the record");
    return offset;
  }
};

/// Input CSV: header `date,positives`, one row per day.
inline CaseSeries read_case_csv(const std::string& path, double population) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_case_csv: cannot open " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_case_csv: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "date,positives")
    throw std::runtime_error("read_case_csv: header must be 'date,positives'");
  CaseSeries series;
  series.population = population;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::runtime_error("read_case_csv: bad row '" + line + "'");
    series.dates.push_back(Date::parse(line.substr(0, comma)));
    series.daily_positives.push_back(std::strtod(line.c_str() + comma + 1, nullptr));
  }
  series.validate();
  return series;
}

inline void write_case_csv(const CaseSeries& series, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_case_csv: cannot open " + path);
  os << "date,positives\n";
  for (std::size_t i = 0; i < series.dates.size(); ++i)
    os << series.dates[i].str() << "," << sdefit::detail::fmt17(series.daily_positives[i]) << "\n";
}

// --- ingestion -----------------------------------------------------------------------

constexpr int kInfectiousWindowDays = 9;

/// Infectious proportion: the positives accumulated over the trailing
/// `window` days (including the current day), divided by N. The first
/// window - 1 days carry no value and are dropped.
inline std::pair<std::vector<Date>, std::vector<double>> rolling_infectious(
    const CaseSeries& series, int window = kInfectiousWindowDays) {
  series.validate();
  if (window < 1) throw std::invalid_argument("rolling_infectious: window must be >= 1");
  const int len = static_cast<int>(series.dates.size());
  if (len < window) throw std::invalid_argument("rolling_infectious: series shorter than the window");
  std::vector<Date> dates;
  std::vector<double> values;
  double acc = 0.0;
  for (int t = 0; t < len; ++t) {
    acc += series.daily_positives[static_cast<std::size_t>(t)];
    if (t >= window) acc -= series.daily_positives[static_cast<std::size_t>(t - window)];
    if (t >= window - 1) {
      dates.push_back(series.dates[static_cast<std::size_t>(t)]);
      values.push_back(acc / series.population);
    }
  }
  return {std::move(dates), std::move(values)};
}

/// One fitting window: the observed infectious proportions on a daily grid
/// plus the initial compartment proportions at the start date.
struct EpidemicWindow {
  Date start_date;
  Date end_date;
  Trajectory i_series;      // label "i", delta = 1 day, t0 = 0
  Eigen::VectorXd initial;  // (s0, i0) or (s0, e0, i0); r0 completes to 1
  double r0 = 0.0;
  Family family = Family::sir;

  void validate() const {
    double sum = initial.sum() + r0;
    if (std::abs(sum - 1.0) > 1e-9)
      throw std::invalid_argument("EpidemicWindow: initial proportions must sum to 1");
  }
};

/// Initial conditions per the ingestion protocol: i0 is the rolling value at
/// the start date, r0 the cumulative positives strictly before the 9-day
/// window, both as proportions; SEIR assumes e0 = 0.5 i0.
inline EpidemicWindow build_window(const CaseSeries& series, const Date& start, const Date& end,
                                   Family family, int window = kInfectiousWindowDays) {
  series.validate();
  if (family != Family::sir && family != Family::seir)
    throw std::invalid_argument("build_window: epidemic families only");
  if (!(start < end)) throw std::invalid_argument("build_window: start must precede end");
  const int start_idx = series.index_of(start);
  (void)series.index_of(end);
  if (start_idx < window - 1)
    throw std::invalid_argument("build_window: not enough history before the start date");

  const auto [dates, values] = rolling_infectious(series, window);
  const int roll_offset = start.serial() - dates.front().serial();
  const int n = end.serial() - start.serial();
  if (roll_offset < 0 || roll_offset + n >= static_cast<int>(values.size()) + 1)
    throw std::invalid_argument("build_window: window outside the rolled record");

  const double i0 = values[static_cast<std::size_t>(roll_offset)];
  double before = 0.0;
  for (int t = 0; t < start_idx - (window - 1); ++t)
    before += series.daily_positives[static_cast<std::size_t>(t)];
  const double r0 = before / series.population;

  EpidemicWindow win;
  win.start_date = start;
  win.end_date = end;
  win.family = family;
  win.r0 = r0;
  if (family == Family::sir) {
    win.initial = Eigen::Vector2d(1.0 - i0 - r0, i0);
  } else {
    const double e0 = 0.5 * i0;
    Eigen::VectorXd x0(3);
    x0 << 1.0 - e0 - i0 - r0, e0, i0;
    win.initial = x0;
  }

  Eigen::MatrixXd states(n + 1, 1);
  for (int t = 0; t <= n; ++t) states(t, 0) = values[static_cast<std::size_t>(roll_offset + t)];
  win.i_series = Trajectory(TimeGrid(0.0, 1.0, n), std::move(states), {"i"});
  win.validate();
  return win;
}

// --- fitting -------------------------------------------------------------------------

enum class Variant { ode, sde };

/// Fit one wave: nonlinear least squares on the observed I compartment for
/// the ODE variant, UKF pseudo-likelihood for the SDE variant. The report
/// carries R0 = alpha_hat / beta_hat.
inline EstimateReport fit_wave(const EpidemicWindow& window, Family family, Variant variant,
                               opt::OptimizerConfig cfg, const std::vector<char>& mask = {},
                               int substeps = 4) {
  window.validate();
  EstimateReport report;
  if (variant == Variant::ode) {
    report = estimators::fit_ode_lse(window.i_series, family, window.initial, cfg, mask);
  } else {
    ukf::PartialFitSpec fit;
    fit.family = family;
    fit.x0 = window.initial;
    fit.observed = {family == Family::sir ? 1 : 2};
    fit.substeps = substeps;
    report = ukf::fit_partial_ukf(window.i_series, fit, cfg, mask);
  }
  if (report.theta_hat.count("alpha") && report.theta_hat.count("beta"))
    report.theta_hat["R0"] = report.theta_hat.at("alpha") / report.theta_hat.at("beta");
  return report;
}

// --- prediction bands -----------------------------------------------------------------

struct PredictionBand {
  TimeGrid grid;
  std::vector<double> median;
  std::vector<double> lo;
  std::vector<double> hi;
};

/// Pointwise median and min-max envelope of the infectious component over
/// n_paths stochastic simulations (a single deterministic path for the ODE
/// variant). Premature paths are restarted on fresh sub-seeds.
inline PredictionBand predict_band(const EpidemicWindow& window, const ModelSpec& model,
                                   int n_paths, std::uint64_t seed, double fine_step = 0.01) {
  if (n_paths < 1) throw std::invalid_argument("predict_band: n_paths must be >= 1");
  const TimeGrid grid = window.i_series.grid;
  const int i_col = model.family() == Family::sir ? 1 : 2;

  PredictionBand band;
  band.grid = grid;
  const int points = grid.n + 1;
  band.median.resize(static_cast<std::size_t>(points));
  band.lo.resize(static_cast<std::size_t>(points));
  band.hi.resize(static_cast<std::size_t>(points));

  if (model.is_ode()) {
    const Trajectory path = models::ode_solve(model, window.initial, grid);
    for (int k = 0; k < points; ++k)
      band.median[static_cast<std::size_t>(k)] = band.lo[static_cast<std::size_t>(k)] =
          band.hi[static_cast<std::size_t>(k)] = path.states(k, i_col);
    return band;
  }

  std::vector<std::vector<double>> paths(static_cast<std::size_t>(n_paths));
  for (int p = 0; p < n_paths; ++p) {
    sim::SimulationPlan plan;
    plan.model = model;
    plan.x0 = window.initial;
    plan.grid = grid;
    plan.fine_step = fine_step;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 1000) throw std::runtime_error("predict_band: restart cap reached");
      plan.seed = derive_replicate_seed(seed, static_cast<std::uint64_t>(p),
                                        static_cast<std::uint64_t>(attempt));
      const auto result = sim::simulate(plan);
      if (result.premature) continue;
      auto& dst = paths[static_cast<std::size_t>(p)];
      dst.resize(static_cast<std::size_t>(points));
      for (int k = 0; k < points; ++k)
        dst[static_cast<std::size_t>(k)] = result.trajectory.states(k, i_col);
      break;
    }
  }
  std::vector<double> column(static_cast<std::size_t>(n_paths));
  for (int k = 0; k < points; ++k) {
    for (int p = 0; p < n_paths; ++p)
      column[static_cast<std::size_t>(p)] = paths[static_cast<std::size_t>(p)][static_cast<std::size_t>(k)];
    std::sort(column.begin(), column.end());
    band.lo[static_cast<std::size_t>(k)] = column.front();
    band.hi[static_cast<std::size_t>(k)] = column.back();
    const int mid = n_paths / 2;
    band.median[static_cast<std::size_t>(k)] =
        n_paths % 2 ? column[static_cast<std::size_t>(mid)]
                    : 0.5 * (column[static_cast<std::size_t>(mid - 1)] + column[static_cast<std::size_t>(mid)]);
  }
  return band;
}

inline void write_band_csv(const PredictionBand& band, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_band_csv: cannot open " + path);
  os << "t,median,lo,hi\n";
  for (int k = 0; k <= band.grid.n; ++k)
    os << sdefit::detail::fmt17(band.grid.time_of(k)) << ","
       << sdefit::detail::fmt17(band.median[static_cast<std::size_t>(k)]) << ","
       << sdefit::detail::fmt17(band.lo[static_cast<std::size_t>(k)]) << ","
       << sdefit::detail::fmt17(band.hi[static_cast<std::size_t>(k)]) << "\n";
}

// --- robustness sweeps ------------------------------------------------------------------

/// Refit closures for the truncation/deletion sweeps. Truncated windows
/// rebuild their initial conditions from the case series (a later start date
/// moves mass from S and I into R); deletions keep the window and mask rows.
inline std::vector<experiments::NamedRefit> make_wave_refits(const CaseSeries& series,
                                                             const Date& start, const Date& end,
                                                             Family family,
                                                             const opt::OptimizerConfig& base_cfg,
                                                             int substeps = 4) {
  auto make = [&, family, substeps](Variant variant) {
    const std::string name = variant == Variant::ode ? "ode" : "sde";
    const CaseSeries series_copy = series;
    const Date start0 = start, end0 = end;
    const opt::OptimizerConfig cfg0 = base_cfg;
    experiments::WaveRefit refit = [=](const Trajectory& obs, const std::vector<char>& mask,
                                       const experiments::Estimates& warm) {
      const Date sub_start = start0.plus_days(static_cast<int>(std::lround(obs.grid.t0)));
      const Date sub_end = sub_start.plus_days(obs.grid.n);
      EpidemicWindow win = build_window(series_copy, sub_start, sub_end, family);
      opt::OptimizerConfig cfg = cfg0;
      if (!warm.empty()) {
        cfg.start_hint.clear();
        if (family == Family::sir) {
          if (warm.count("alpha") && warm.count("beta"))
            cfg.start_hint = {warm.at("alpha"), warm.at("beta")};
        } else if (warm.count("alpha") && warm.count("lambda") && warm.count("beta")) {
          cfg.start_hint = {warm.at("alpha"), warm.at("lambda"), warm.at("beta")};
        }
        if (variant == Variant::sde && !cfg.start_hint.empty()) {
          // UKF parameter vector continues with diffusion and measurement sd.
          if (warm.count("sigma1")) cfg.start_hint.push_back(warm.at("sigma1"));
          if (warm.count("sigma2")) cfg.start_hint.push_back(warm.at("sigma2"));
          if (warm.count("meas_sd")) cfg.start_hint.push_back(warm.at("meas_sd"));
          const std::size_t need = family == Family::sir ? 5 : 6;
          if (cfg.start_hint.size() != need) cfg.start_hint.clear();
        }
        cfg.starts = cfg.start_hint.empty() ? cfg0.starts : 1;
      }
      EstimateReport report = fit_wave(win, family, variant, cfg, mask, substeps);
      if (variant == Variant::sde) {
        // Carry the nuisance scales so the next depth can warm-start fully.
        if (report.noise_hat.count("sigma1")) report.theta_hat["sigma1"] = report.noise_hat.at("sigma1");
        if (report.noise_hat.count("sigma2")) report.theta_hat["sigma2"] = report.noise_hat.at("sigma2");
        if (report.noise_hat.count("meas_var"))
          report.theta_hat["meas_sd"] = std::sqrt(report.noise_hat.at("meas_var"));
      }
      return report;
    };
    return experiments::NamedRefit{name, refit};
  };
  return {make(Variant::ode), make(Variant::sde)};
}

}  // namespace sdefit::covid

#endif  // SDEFIT_COVID_HPP
