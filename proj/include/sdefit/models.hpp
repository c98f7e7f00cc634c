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
#ifndef SDEFIT_MODELS_HPP
#define SDEFIT_MODELS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>

#include "sdefit/core.hpp"

namespace sdefit::models {

// --- drift ------------------------------------------------------------------

/// Drift field f(x, theta) of the family.
inline Eigen::VectorXd drift(const ModelSpec& model, const Eigen::VectorXd& state) {
  if (state.size() != model.dim())
    throw std::invalid_argument("drift: state dimension does not match family");
  Eigen::VectorXd f(state.size());
  switch (model.family()) {
    case Family::linear: {
      const auto& m = model.linear();
      f(0) = -m.a * (state(0) - m.b);
      break;
    }
    case Family::sir: {
      const auto& m = model.sir();
      const double s = state(0), i = state(1);
      f(0) = -m.alpha * s * i;
      f(1) = m.alpha * s * i - m.beta * i;
      break;
    }
    case Family::seir: {
      const auto& m = model.seir();
      const double s = state(0), e = state(1), i = state(2);
      f(0) = -m.alpha * s * i;
      f(1) = m.alpha * s * i - m.lambda * e;
      f(2) = m.lambda * e - m.beta * i;
      break;
    }
  }
  return f;
}

/// Diagonal diffusion matrix Sigma of the family.
inline Eigen::MatrixXd diffusion(const ModelSpec& model) {
  switch (model.family()) {
    case Family::linear: {
      Eigen::MatrixXd s(1, 1);
      s(0, 0) = model.linear().sigma;
      return s;
    }
    case Family::sir: {
      const auto& m = model.sir();
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2, 2);
      s(0, 0) = m.sigma1;
      s(1, 1) = m.sigma2;
      return s;
    }
    default: {
      const auto& m = model.seir();
      Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
      s(0, 0) = m.sigma1;
      s(1, 1) = m.sigma2;
      s(2, 2) = m.sigma3;
      return s;
    }
  }
}

// --- OU transition ------------------------------------------------------------

/// Exact one-step transition of the OU process on a grid with step delta.
struct OuTransition {
  double rho = 0.0;       // one-lag autocorrelation e^{-a delta}
  double b = 0.0;
  double cond_var = 0.0;  // sigma^2 (1 - rho^2) / (2a)

  double cond_mean(double x) const { return rho * x + b * (1.0 - rho); }
};

inline OuTransition ou_transition(double a, double b, double sigma, double delta) {
  if (!(a > 0.0)) throw std::invalid_argument("ou_transition: a must be > 0");
  if (!(delta > 0.0)) throw std::invalid_argument("ou_transition: delta must be > 0");
  OuTransition t;
  t.rho = std::exp(-a * delta);
  t.b = b;
  t.cond_var = sigma * sigma * (1.0 - t.rho * t.rho) / (2.0 * a);
  return t;
}

// --- SIR splitting ingredients ------------------------------------------------

/// Linear-subsystem quantities of the SIR splitting scheme: the drift matrix
/// A, its exponential over one step, and the exact one-step noise covariance
/// Omega_Delta of the OU part.
struct SirSplit {
  Eigen::Matrix2d a_matrix;
  Eigen::Matrix2d expm;   // e^{A delta}
  Eigen::Matrix2d omega;  // integral of e^{A(delta-u)} Sigma Sigma' e^{A'(delta-u)} du
};

/// A = [[-alpha, 0], [alpha, -beta]] is lower triangular, so e^{A delta} and
/// Omega_delta have elementary closed forms. The generic entries divide by
/// beta - alpha and lose precision by cancellation as the rates approach each
/// other; below |alpha - beta| = 1e-5 the analytic limit forms
/// ((e^{-a d} - e^{-b d})/(b - a) -> d e^{-a d} etc.) take over.
inline SirSplit sir_split(double alpha, double beta, double sigma1, double sigma2, double delta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("sir_split: rates must be > 0");
  if (!(delta > 0.0)) throw std::invalid_argument("sir_split: delta must be > 0");
  SirSplit out;
  out.a_matrix << -alpha, 0.0, alpha, -beta;

  const double ea = std::exp(-alpha * delta);
  const double eb = std::exp(-beta * delta);
  const double s1 = sigma1 * sigma1;
  const double s2 = sigma2 * sigma2;
  const bool degenerate = std::abs(alpha - beta) < 1e-5;

  out.expm.setZero();
  out.expm(0, 0) = ea;
  out.expm(1, 1) = eb;
  out.expm(1, 0) = degenerate ? alpha * delta * ea : alpha * (ea - eb) / (beta - alpha);

  // I_c = int_0^delta e^{-c u} du and the first two moments against u.
  const double i2a = -std::expm1(-2.0 * alpha * delta) / (2.0 * alpha);
  const double i2b = -std::expm1(-2.0 * beta * delta) / (2.0 * beta);
  const double iab = -std::expm1(-(alpha + beta) * delta) / (alpha + beta);

  out.omega(0, 0) = s1 * i2a;
  if (!degenerate) {
    const double r = alpha / (beta - alpha);
    out.omega(0, 1) = s1 * r * (i2a - iab);
    out.omega(1, 1) = s1 * r * r * (i2a - 2.0 * iab + i2b) + s2 * i2b;
  } else {
    const double e2a = std::exp(-2.0 * alpha * delta);
    const double j1 = (1.0 - (1.0 + 2.0 * alpha * delta) * e2a) / (4.0 * alpha * alpha);
    const double j2 =
        (2.0 - (2.0 + 4.0 * alpha * delta + 4.0 * alpha * alpha * delta * delta) * e2a) /
        (8.0 * alpha * alpha * alpha);
    out.omega(0, 1) = s1 * alpha * j1;
    out.omega(1, 1) = s1 * alpha * alpha * j2 + s2 * i2a;
  }
  out.omega(1, 0) = out.omega(0, 1);
  return out;
}

// --- closed-form flow of the nonlinear SIR subsystem ---------------------------

namespace detail {

/// Closed-form flow of ds = alpha s (1 - i) dt, di = -alpha s (1 - i) dt over
/// time `delta` (any sign), in the cancellation-free form
///   s' = u s / (u - (1 - i) expm1(alpha delta u)),  u = s + i - 1.
/// Returns nullopt when the trajectory blows up before `delta` (the
/// denominator changes sign) or the inputs are unusable.
inline std::optional<Eigen::Vector2d> sir_flow_eval(double s, double i, double alpha, double delta) {
  if (!(s > 0.0) || !std::isfinite(s) || !std::isfinite(i)) return std::nullopt;
  const double u = s + i - 1.0;
  double s_next;
  if (u == 0.0) {
    const double den = 1.0 - s * alpha * delta;
    if (!(den > 0.0)) return std::nullopt;
    s_next = s / den;
  } else {
    const double den = u - (1.0 - i) * std::expm1(alpha * delta * u);
    if (!std::isfinite(den) || den * u <= 0.0) return std::nullopt;
    s_next = u * s / den;
  }
  if (!std::isfinite(s_next) || !(s_next > 0.0)) return std::nullopt;
  Eigen::Vector2d out;
  out << s_next, (s + i) - s_next;
  return out;
}

}  // namespace detail

/// Flow F(x, delta) of the nonlinear SIR subsystem. Conserves s + i.
/// States with c1 = s + i >= 1 or s <= 0 are rejected; i may be negative
/// (the flow itself drives i below zero, so compositions pass through such
/// states).
inline Eigen::Vector2d sir_flow(const Eigen::Vector2d& state, double alpha, double delta) {
  const double s = state(0), i = state(1);
  if (!(s > 0.0) || !(s + i < 1.0))
    throw std::invalid_argument("sir_flow: need s > 0 and s + i < 1");
  auto out = detail::sir_flow_eval(s, i, alpha, delta);
  if (!out) throw std::invalid_argument("sir_flow: flow leaves its domain before delta");
  return *out;
}

/// F^{-1}(x, delta) = F(x, -delta): the subsystem is autonomous, so the
/// inverse flow is the time-reversed flow. The backward flow never blows up
/// inside the domain, but the image of F may carry i < 0, so only s > 0 and
/// s + i < 1 are required here.
inline Eigen::Vector2d sir_flow_inverse(const Eigen::Vector2d& state, double alpha, double delta) {
  const double s = state(0), i = state(1);
  if (!(s > 0.0) || !(s + i < 1.0))
    throw std::invalid_argument("sir_flow_inverse: need s > 0, s + i < 1");
  auto out = detail::sir_flow_eval(s, i, alpha, -delta);
  if (!out) throw std::invalid_argument("sir_flow_inverse: input outside the flow image");
  return *out;
}

/// Analytic Jacobian d F(x, delta) / dx of the flow, with a central
/// finite-difference fallback (step 1e-7) near the removable u = 0 point
/// where the closed form degenerates to 0/0.
inline Eigen::Matrix2d sir_flow_jacobian(const Eigen::Vector2d& state, double alpha, double delta) {
  const double s = state(0), i = state(1);
  const double u = s + i - 1.0;
  const double expm1w = std::expm1(alpha * delta * u);
  // E = e^{alpha delta u} (1 - i) / s, so that s' = u / (1 - E).
  const double E = (1.0 + expm1w) * (1.0 - i) / s;
  if (std::abs(1.0 - E) > 1e-6) {
    const double ws = alpha * delta - 1.0 / s;
    const double wi = alpha * delta - 1.0 / (1.0 - i);
    const double d = 1.0 - E;
    Eigen::Matrix2d J;
    J(0, 0) = (d + u * E * ws) / (d * d);
    J(0, 1) = (d + u * E * wi) / (d * d);
    J(1, 0) = 1.0 - J(0, 0);
    J(1, 1) = 1.0 - J(0, 1);
    return J;
  }
  const double h = 1e-7;
  Eigen::Matrix2d J;
  for (int c = 0; c < 2; ++c) {
    Eigen::Vector2d xp = state, xm = state;
    xp(c) += h;
    xm(c) -= h;
    auto fp = detail::sir_flow_eval(xp(0), xp(1), alpha, delta);
    auto fm = detail::sir_flow_eval(xm(0), xm(1), alpha, delta);
    if (!fp || !fm) throw std::invalid_argument("sir_flow_jacobian: state outside flow domain");
    J.col(c) = (*fp - *fm) / (2.0 * h);
  }
  return J;
}

/// log |det dF(x, delta)/dx| via the Liouville identity
/// det = s'(1 - i') / (s (1 - i)); exact and stable for all valid states.
inline double sir_flow_logdet(const Eigen::Vector2d& state, double alpha, double delta) {
  auto out = detail::sir_flow_eval(state(0), state(1), alpha, delta);
  if (!out) throw std::invalid_argument("sir_flow_logdet: state outside flow domain");
  const double num = (*out)(0) * (1.0 - (*out)(1));
  const double den = state(0) * (1.0 - state(1));
  if (!(num > 0.0) || !(den > 0.0))
    throw std::invalid_argument("sir_flow_logdet: determinant not positive");
  return std::log(num) - std::log(den);
}

// --- SIR equilibrium ------------------------------------------------------------

/// Root s* in (0, s0) of (alpha/beta)(1 - s) + ln(s / s0) = 0.
/// Bisection in log s (the equation is monotone there below beta/alpha and
/// the root goes exponentially small for large alpha/beta), then a Newton
/// polish; residual below 1e-12 or failure.
inline double sir_equilibrium(double alpha, double beta, double s0) {
  if (!(alpha > 0.0) || !(beta > 0.0)) throw std::invalid_argument("sir_equilibrium: rates must be > 0");
  if (!(s0 > 0.0) || !(s0 <= 1.0)) throw std::invalid_argument("sir_equilibrium: need 0 < s0 <= 1");
  const double r = alpha / beta;
  auto g_log = [&](double u) { return r * (1.0 - std::exp(u)) + u - std::log(s0); };
  double lo = std::log(1e-300), hi = std::log(s0);
  if (!(g_log(lo) < 0.0) || !(g_log(hi) > 0.0))
    throw std::runtime_error("sir_equilibrium: bracketing failed");
  for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, std::abs(hi)); ++it) {
    const double mid = 0.5 * (lo + hi);
    (g_log(mid) < 0.0 ? lo : hi) = mid;
  }
  double s = std::exp(0.5 * (lo + hi));
  auto g = [&](double v) { return r * (1.0 - v) + std::log(v / s0); };
  for (int it = 0; it < 8; ++it) {
    const double gp = -r + 1.0 / s;
    const double next = s - g(s) / gp;
    if (next > 0.0 && next < s0) s = next;
  }
  if (std::abs(g(s)) > 1e-12) throw std::runtime_error("sir_equilibrium: residual above 1e-12");
  return s;
}

/// Measurement standard deviations that put the ODE observation noise on the
/// scale of the SDE terminal variability: gamma1 = sigma1 sqrt(T) and
/// gamma2 = sigma2 / sqrt(2 (beta - alpha s*)).
inline std::pair<double, double> noise_match_sir(double alpha, double beta, double sigma1,
                                                 double sigma2, double s0, double T) {
  if (!(T > 0.0)) throw std::invalid_argument("noise_match_sir: T must be > 0");
  const double gamma1 = sigma1 * std::sqrt(T);
  const double s_star = sir_equilibrium(alpha, beta, s0);
  const double denom = 2.0 * (beta - alpha * s_star);
  if (!(denom > 0.0))
    throw std::runtime_error("noise_match_sir: equilibrium not attracting (beta <= alpha s*)");
  return {gamma1, sigma2 / std::sqrt(denom)};
}

// --- SEIR reduction ---------------------------------------------------------------

/// Effective SIR rates seen when a SEIR epidemic is observed through
/// (s, p = e + i): alpha' = lambda alpha / (lambda + beta),
/// beta' = lambda beta / (lambda + beta). The ratio alpha'/beta' = alpha/beta
/// is preserved exactly.
struct SeirReduction {
  double alpha_prime;
  double beta_prime;
};

inline SeirReduction seir_reduce(double alpha, double lambda, double beta) {
  if (!(alpha > 0.0) || !(lambda > 0.0) || !(beta > 0.0))
    throw std::invalid_argument("seir_reduce: rates must be > 0");
  return {lambda * alpha / (lambda + beta), lambda * beta / (lambda + beta)};
}

/// e_t, i_t and p_t = e_t + i_t expressed through s_t for a SEIR epidemic
/// started at (s0, i0) with r0 = 0. p is exact along deterministic SEIR
/// trajectories (s + e + i - (beta/alpha) ln s is conserved); the e/i split
/// additionally assumes the exposed/infectious ratio has equilibrated.
struct SeirConserved {
  double e;
  double i;
  double p;
};

inline SeirConserved seir_conserved(double s, double s0, double i0, double alpha, double lambda,
                                    double beta) {
  if (!(s > 0.0)) throw std::invalid_argument("seir_conserved: s must be > 0");
  if (!(s <= s0)) throw std::invalid_argument("seir_conserved: need s <= s0");
  const double lb = lambda + beta;
  const double logratio = std::log(s / s0);
  SeirConserved out;
  out.e = 1.0 - i0 - lambda / lb * s0 - beta / lb * (s - beta / alpha * logratio);
  out.i = i0 - lambda / lb * (s - s0) + beta / alpha * lambda / lb * logratio;
  out.p = 1.0 - s + beta / alpha * logratio;
  return out;
}

// --- deterministic solve ------------------------------------------------------------

namespace detail {

inline void check_simplex(const ModelSpec& model, const Eigen::VectorXd& x, double t) {
  if (model.family() == Family::linear) return;
  double sum = 0.0;
  for (int j = 0; j < x.size(); ++j) {
    if (x(j) < -1e-9)
      throw std::runtime_error("ode_solve: component " + std::to_string(j) + " left the simplex at t=" +
                               std::to_string(t));
    sum += x(j);
  }
  if (sum > 1.0 + 1e-9)
    throw std::runtime_error("ode_solve: component sum left the simplex at t=" + std::to_string(t));
}

inline Eigen::VectorXd rk4_step(const ModelSpec& model, const Eigen::VectorXd& x, double h) {
  const Eigen::VectorXd k1 = drift(model, x);
  const Eigen::VectorXd k2 = drift(model, x + 0.5 * h * k1);
  const Eigen::VectorXd k3 = drift(model, x + 0.5 * h * k2);
  const Eigen::VectorXd k4 = drift(model, x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace detail

/// Deterministic solution of the ODE variant on the grid. The linear family
/// uses the exact solution b + (x0 - b) e^{-a t}; SIR/SEIR use fixed-step RK4
/// with internal step min(delta, 0.01) for cross-platform reproducibility.
inline Trajectory ode_solve(const ModelSpec& model, const Eigen::VectorXd& x0, const TimeGrid& grid) {
  if (!model.is_ode()) throw std::invalid_argument("ode_solve: model must have zero diffusion");
  if (x0.size() != model.dim()) throw std::invalid_argument("ode_solve: bad initial state dimension");
  Eigen::MatrixXd states(grid.n + 1, model.dim());

  if (model.family() == Family::linear) {
    const auto& m = model.linear();
    for (int k = 0; k <= grid.n; ++k)
      states(k, 0) = m.b + (x0(0) - m.b) * std::exp(-m.a * (grid.time_of(k) - grid.t0));
    return Trajectory(grid, std::move(states), model.state_labels());
  }

  const int substeps = std::max(1, static_cast<int>(std::ceil(grid.delta / 0.01 - 1e-12)));
  const double h = grid.delta / substeps;
  Eigen::VectorXd x = x0;
  detail::check_simplex(model, x, grid.t0);
  states.row(0) = x.transpose();
  for (int k = 1; k <= grid.n; ++k) {
    for (int j = 0; j < substeps; ++j) x = detail::rk4_step(model, x, h);
    detail::check_simplex(model, x, grid.time_of(k));
    states.row(k) = x.transpose();
  }
  return Trajectory(grid, std::move(states), model.state_labels());
}

}  // namespace sdefit::models

#endif  // SDEFIT_MODELS_HPP
