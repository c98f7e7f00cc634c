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
#ifndef SDEFIT_CORE_HPP
#define SDEFIT_CORE_HPP

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace sdefit {

using json = nlohmann::json;

/// Equidistant observation grid t_k = t0 + k*delta, k = 0..n.
/// Times are always reconstructed as t0 + k*delta, never accumulated,
/// so long grids carry no summation drift.
struct TimeGrid {
  double t0 = 0.0;
  double delta = 1.0;
  int n = 1;

  TimeGrid() = default;
  TimeGrid(double t0_, double delta_, int n_) : t0(t0_), delta(delta_), n(n_) {
    if (!(delta > 0.0)) throw std::invalid_argument("TimeGrid: delta must be > 0");
    if (n < 1) throw std::invalid_argument("TimeGrid: n must be >= 1");
  }

  int points() const { return n + 1; }
  double time_of(int k) const { return t0 + k * delta; }
  double horizon() const { return n * delta; }

  int index_of(double t) const {
    const int k = static_cast<int>(std::lround((t - t0) / delta));
    if (k < 0 || k > n || std::abs(time_of(k) - t) > 1e-9 * std::max(1.0, std::abs(t)))
      throw std::invalid_argument("TimeGrid: time not on grid");
    return k;
  }
};

/// Observed (or simulated) states on a TimeGrid. Rows are time points,
/// columns the state components named in `labels`.
struct Trajectory {
  TimeGrid grid;
  Eigen::MatrixXd states;  // (n+1) x d
  std::vector<std::string> labels;

  Trajectory() = default;
  Trajectory(TimeGrid g, Eigen::MatrixXd s, std::vector<std::string> l)
      : grid(g), states(std::move(s)), labels(std::move(l)) {
    validate();
  }

  int dim() const { return static_cast<int>(states.cols()); }
  int points() const { return static_cast<int>(states.rows()); }

  void validate() const {
    if (states.rows() != grid.n + 1)
      throw std::invalid_argument("Trajectory: row count must equal grid.n + 1");
    if (states.cols() < 1 || states.cols() > 3)
      throw std::invalid_argument("Trajectory: dimension must be 1..3");
    if (static_cast<int>(labels.size()) != states.cols())
      throw std::invalid_argument("Trajectory: one label per component required");
    if (!states.allFinite())
      throw std::invalid_argument("Trajectory: non-finite state entry");
  }
};

// --- model specifications -------------------------------------------------

struct LinearModel {
  double a = 0.0;      // mean-reversion rate, > 0
  double b = 0.0;      // long-term level
  double sigma = 0.0;  // diffusion, >= 0 (0 = ODE variant)
};

struct SirModel {
  double alpha = 0.0;  // contact rate, > 0
  double beta = 0.0;   // removal rate, > 0
  double sigma1 = 0.0;
  double sigma2 = 0.0;
};

struct SeirModel {
  double alpha = 0.0;
  double lambda = 0.0;  // exposed-state exit rate, > 0
  double beta = 0.0;
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double sigma3 = 0.0;
};

enum class Family { linear, sir, seir };

/// Tagged parameter set for one of the three model families. A spec whose
/// diffusion coefficients are all zero is the ODE variant of the family.
struct ModelSpec {
  std::variant<LinearModel, SirModel, SeirModel> value;

  ModelSpec() : value(LinearModel{1.0, 0.0, 0.0}) {}
  ModelSpec(LinearModel m) : value(m) { validate(); }
  ModelSpec(SirModel m) : value(m) { validate(); }
  ModelSpec(SeirModel m) : value(m) { validate(); }

  Family family() const {
    if (std::holds_alternative<LinearModel>(value)) return Family::linear;
    if (std::holds_alternative<SirModel>(value)) return Family::sir;
    return Family::seir;
  }

  int dim() const {
    switch (family()) {
      case Family::linear: return 1;
      case Family::sir: return 2;
      default: return 3;
    }
  }

  bool is_ode() const {
    if (const auto* m = std::get_if<LinearModel>(&value)) return m->sigma == 0.0;
    if (const auto* m = std::get_if<SirModel>(&value)) return m->sigma1 == 0.0 && m->sigma2 == 0.0;
    const auto& m = std::get<SeirModel>(value);
    return m.sigma1 == 0.0 && m.sigma2 == 0.0 && m.sigma3 == 0.0;
  }

  std::vector<std::string> state_labels() const {
    switch (family()) {
      case Family::linear: return {"x"};
      case Family::sir: return {"s", "i"};
      default: return {"s", "e", "i"};
    }
  }

  const LinearModel& linear() const { return std::get<LinearModel>(value); }
  const SirModel& sir() const { return std::get<SirModel>(value); }
  const SeirModel& seir() const { return std::get<SeirModel>(value); }

  void validate() const {
    auto pos = [](double v, const char* what) {
      if (!(v > 0.0)) throw std::invalid_argument(std::string("ModelSpec: ") + what + " must be > 0");
    };
    auto nonneg = [](double v, const char* what) {
      if (!(v >= 0.0)) throw std::invalid_argument(std::string("ModelSpec: ") + what + " must be >= 0");
    };
    if (const auto* m = std::get_if<LinearModel>(&value)) {
      pos(m->a, "a");
      nonneg(m->sigma, "sigma");
    } else if (const auto* m = std::get_if<SirModel>(&value)) {
      pos(m->alpha, "alpha");
      pos(m->beta, "beta");
      nonneg(m->sigma1, "sigma1");
      nonneg(m->sigma2, "sigma2");
    } else {
      const auto& se = std::get<SeirModel>(value);
      pos(se.alpha, "alpha");
      pos(se.lambda, "lambda");
      pos(se.beta, "beta");
      nonneg(se.sigma1, "sigma1");
      nonneg(se.sigma2, "sigma2");
      nonneg(se.sigma3, "sigma3");
    }
  }
};

/// Diagonal Gaussian measurement-noise description plus the index set of
/// state components that are actually observed.
struct MeasurementSpec {
  std::vector<double> covariance;       // gamma_i^2 for each observed component
  std::vector<int> observed_components; // indices into the state vector

  MeasurementSpec() = default;
  MeasurementSpec(std::vector<double> cov, std::vector<int> obs)
      : covariance(std::move(cov)), observed_components(std::move(obs)) {
    validate();
  }

  static MeasurementSpec all_of(const ModelSpec& model, std::vector<double> cov) {
    std::vector<int> idx;
    for (int i = 0; i < model.dim(); ++i) idx.push_back(i);
    return MeasurementSpec(std::move(cov), std::move(idx));
  }

  void validate() const {
    if (observed_components.empty())
      throw std::invalid_argument("MeasurementSpec: observed_components must be non-empty");
    if (covariance.size() != observed_components.size())
      throw std::invalid_argument("MeasurementSpec: one variance per observed component");
    for (double v : covariance)
      if (!(v >= 0.0)) throw std::invalid_argument("MeasurementSpec: variances must be >= 0");
    for (int c : observed_components)
      if (c < 0 || c > 2) throw std::invalid_argument("MeasurementSpec: component index out of range");
  }
};

/// Result of one fitting procedure. Parameters are keyed by name so that ODE
/// and SDE fits of the same family can be compared directly.
struct EstimateReport {
  std::map<std::string, double> theta_hat;
  std::map<std::string, double> noise_hat;
  double objective = 0.0;
  bool converged = false;
  long evaluations = 0;
  int starts = 0;
  std::string message;
};

// --- operations -----------------------------------------------------------

/// sigma such that the OU asymptotic variance sigma^2/(2a) equals the
/// measurement variance sigma0^2.
inline double noise_match_linear(double a, double sigma0) {
  if (!(a > 0.0)) throw std::invalid_argument("noise_match_linear: a must be > 0");
  if (!(sigma0 >= 0.0)) throw std::invalid_argument("noise_match_linear: sigma0 must be >= 0");
  return sigma0 * std::sqrt(2.0 * a);
}

// --- serialization ----------------------------------------------------------

namespace detail {
inline std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_csv(const Trajectory& traj, std::ostream& os) {
  os << "t";
  for (const auto& l : traj.labels) os << "," << l;
  os << "\n";
  for (int k = 0; k <= traj.grid.n; ++k) {
    os << detail::fmt17(traj.grid.time_of(k));
    for (int j = 0; j < traj.dim(); ++j) os << "," << detail::fmt17(traj.states(k, j));
    os << "\n";
  }
}

inline void write_csv(const Trajectory& traj, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_csv: cannot open " + path);
  write_csv(traj, os);
}

inline Trajectory read_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("read_csv: empty input");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> labels;
  {
    std::stringstream ss(line);
    std::string cell;
    bool first = true;
    while (std::getline(ss, cell, ',')) {
      if (first) {
        if (cell != "t") throw std::runtime_error("read_csv: first column must be 't'");
        first = false;
      } else {
        labels.push_back(cell);
      }
    }
  }
  if (labels.empty()) throw std::runtime_error("read_csv: no state columns");
  std::vector<double> times;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
    if (row.size() != labels.size() + 1) throw std::runtime_error("read_csv: ragged row");
    times.push_back(row[0]);
    row.erase(row.begin());
    rows.push_back(std::move(row));
  }
  if (times.size() < 2) throw std::runtime_error("read_csv: need at least two rows");
  const int n = static_cast<int>(times.size()) - 1;
  const double delta = (times.back() - times.front()) / n;
  TimeGrid grid(times.front(), delta, n);
  for (int k = 0; k <= n; ++k)
    if (std::abs(grid.time_of(k) - times[k]) > 1e-9 * std::max(1.0, std::abs(times[k])))
      throw std::runtime_error("read_csv: time column is not equidistant");
  Eigen::MatrixXd states(n + 1, static_cast<int>(labels.size()));
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j < states.cols(); ++j) states(k, j) = rows[k][j];
  return Trajectory(grid, std::move(states), std::move(labels));
}

inline Trajectory read_csv_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("read_csv: cannot open " + path);
  return read_csv(is);
}

inline void to_json(json& j, const TimeGrid& g) { j = json{{"t0", g.t0}, {"delta", g.delta}, {"n", g.n}}; }
inline void from_json(const json& j, TimeGrid& g) {
  g = TimeGrid(j.value("t0", 0.0), j.at("delta").get<double>(), j.at("n").get<int>());
}

inline void to_json(json& j, const ModelSpec& m) {
  switch (m.family()) {
    case Family::linear: {
      const auto& v = m.linear();
      j = json{{"family", "linear"}, {"a", v.a}, {"b", v.b}, {"sigma", v.sigma}};
      break;
    }
    case Family::sir: {
      const auto& v = m.sir();
      j = json{{"family", "sir"}, {"alpha", v.alpha}, {"beta", v.beta},
               {"sigma1", v.sigma1}, {"sigma2", v.sigma2}};
      break;
    }
    case Family::seir: {
      const auto& v = m.seir();
      j = json{{"family", "seir"}, {"alpha", v.alpha}, {"lambda", v.lambda}, {"beta", v.beta},
               {"sigma1", v.sigma1}, {"sigma2", v.sigma2}, {"sigma3", v.sigma3}};
      break;
    }
  }
}

inline void from_json(const json& j, ModelSpec& m) {
  const std::string fam = j.at("family").get<std::string>();
  if (fam == "linear") {
    m = ModelSpec(LinearModel{j.at("a"), j.at("b"), j.value("sigma", 0.0)});
  } else if (fam == "sir") {
    m = ModelSpec(SirModel{j.at("alpha"), j.at("beta"), j.value("sigma1", 0.0), j.value("sigma2", 0.0)});
  } else if (fam == "seir") {
    m = ModelSpec(SeirModel{j.at("alpha"), j.at("lambda"), j.at("beta"),
                            j.value("sigma1", 0.0), j.value("sigma2", 0.0), j.value("sigma3", 0.0)});
  } else {
    throw std::invalid_argument("ModelSpec: unknown family '" + fam + "'");
  }
}

inline void to_json(json& j, const MeasurementSpec& m) {
  j = json{{"covariance", m.covariance}, {"observed_components", m.observed_components}};
}
inline void from_json(const json& j, MeasurementSpec& m) {
  m = MeasurementSpec(j.at("covariance").get<std::vector<double>>(),
                      j.at("observed_components").get<std::vector<int>>());
}

inline void to_json(json& j, const EstimateReport& r) {
  j = json{{"theta_hat", r.theta_hat},   {"noise_hat", r.noise_hat}, {"objective", r.objective},
           {"converged", r.converged},   {"evaluations", r.evaluations}, {"starts", r.starts},
           {"message", r.message}};
}
inline void from_json(const json& j, EstimateReport& r) {
  r.theta_hat = j.at("theta_hat").get<std::map<std::string, double>>();
  r.noise_hat = j.at("noise_hat").get<std::map<std::string, double>>();
  r.objective = j.at("objective");
  r.converged = j.at("converged");
  r.evaluations = j.at("evaluations");
  r.starts = j.at("starts");
  r.message = j.value("message", "");
}

}  // namespace sdefit

#endif  // SDEFIT_CORE_HPP
