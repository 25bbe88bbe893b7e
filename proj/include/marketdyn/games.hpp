#pragma once

// Game lifecycles: potential buyers B become players P at intensity a(t, P)
// and players quit into Q at intensity b(t, Q); c(t) moves buyers straight to
// Q. B + P + Q = N throughout, so every solver carries only what it needs and
// reconstructs the rest from the conservation law.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "marketdyn/error.hpp"
#include "marketdyn/monopoly.hpp"
#include "marketdyn/numerics.hpp"

namespace marketdyn::games {

using monopoly::RateSchedule;
using numerics::State;
using numerics::Trajectory;

struct BpqState {
  double B = 0.0;
  double P = 0.0;
  double Q = 0.0;

  double N() const { return B + P + Q; }
  friend bool operator==(const BpqState&, const BpqState&) = default;
};

// a(t), b(t), c(t) schedules; a fresh market.
struct Case1 {
  RateSchedule a;
  RateSchedule b;
  RateSchedule c = RateSchedule::constant(0.0);
  friend bool operator==(const Case1&, const Case1&) = default;
};
// a = beta P, b constant: the SIR model.
struct Case2 {
  double beta = 0.0;
  double b = 0.0;
  friend bool operator==(const Case2&, const Case2&) = default;
};
// a + beta P, b constant.
struct Case3 {
  double a = 0.0;
  double beta = 0.0;
  double b = 0.0;
  friend bool operator==(const Case3&, const Case3&) = default;
};
// beta P, quitting gamma Q.
struct Case4 {
  double beta = 0.0;
  double gamma = 0.0;
  friend bool operator==(const Case4&, const Case4&) = default;
};
// a constant, quitting gamma Q.
struct Case5 {
  double a = 0.0;
  double gamma = 0.0;
  friend bool operator==(const Case5&, const Case5&) = default;
};
// a constant, quitting b + gamma Q.
struct Case6 {
  double a = 0.0;
  double b = 0.0;
  double gamma = 0.0;
  friend bool operator==(const Case6&, const Case6&) = default;
};

using CaseParams = std::variant<Case1, Case2, Case3, Case4, Case5, Case6>;

struct BpqCase {
  CaseParams params;
  BpqState initial;
  friend bool operator==(const BpqCase&, const BpqCase&) = default;
};

struct PeakMetrics {
  double T_m = 0.0;
  double P_m = 0.0;
  double C_inf = 0.0;
  bool interior = true;  // false when P only declines from t = 0
};

struct GameRun {
  Trajectory trajectory;
  bool numeric_fallback = false;
};

namespace detail {

inline void positive(double v, const char* what) {
  require(std::isfinite(v) && v > 0.0, ErrorCode::parameter, std::string(what) + " must be > 0");
}
inline void nonnegative(double v, const char* what) {
  require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter, std::string(what) + " must be >= 0");
}

inline void validate_state(const BpqState& s) {
  nonnegative(s.B, "B0");
  nonnegative(s.P, "P0");
  nonnegative(s.Q, "Q0");
  require(s.N() > 0.0, ErrorCode::parameter, "population B0 + P0 + Q0 must be > 0");
}

inline Trajectory make_path() { return Trajectory({"B", "P", "Q", "D", "C"}); }

inline void append(Trajectory& out, double t, double B, double P, double N, double D, double C) {
  out.append(t, {B, P, N - B - P, D, C});
}

}  // namespace detail

inline void validate(const BpqCase& c) {
  detail::validate_state(c.initial);
  const auto& s = c.initial;
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Case1>) {
          p.a.validate();
          p.b.validate();
          p.c.validate();
        } else if constexpr (std::is_same_v<T, Case2>) {
          detail::positive(p.beta, "beta");
          detail::positive(p.b, "b");
          if (!(s.P > 0.0)) {
            throw Error(ErrorCode::initiation,
                        "P(0) > 0 required: with no players there are no players in the future");
          }
        } else if constexpr (std::is_same_v<T, Case3>) {
          detail::nonnegative(p.a, "a");
          detail::nonnegative(p.beta, "beta");
          detail::nonnegative(p.b, "b");
        } else if constexpr (std::is_same_v<T, Case4>) {
          detail::positive(p.beta, "beta");
          detail::positive(p.gamma, "gamma");
          if (!(s.P > 0.0)) throw Error(ErrorCode::initiation, "P(0) > 0 required for any players at all");
          if (!(s.Q > 0.0)) {
            throw Error(ErrorCode::initiation, "Q(0) > 0 required: there must be an initial population of quitters");
          }
        } else if constexpr (std::is_same_v<T, Case5>) {
          detail::positive(p.a, "a");
          detail::positive(p.gamma, "gamma");
          if (!(s.Q > 0.0)) {
            throw Error(ErrorCode::initiation, "Q(0) > 0 required: there must be an initial population of quitters");
          }
        } else {
          detail::positive(p.a, "a");
          detail::nonnegative(p.b, "b");
          detail::nonnegative(p.gamma, "gamma");
        }
      },
      c.params);
}

/// Right-hand side of the full three-compartment system for any case.
inline numerics::VectorField bpq_field(const BpqCase& c) {
  return {3, [params = c.params](double t, const State& y) {
            const double B = y[0], P = y[1], Q = y[2];
            double adopt = 0.0, quit = 0.0, skip = 0.0;
            std::visit(
                [&](const auto& p) {
                  using T = std::decay_t<decltype(p)>;
                  if constexpr (std::is_same_v<T, Case1>) {
                    adopt = p.a.rate(t);
                    quit = p.b.rate(t);
                    skip = p.c.rate(t);
                  } else if constexpr (std::is_same_v<T, Case2>) {
                    adopt = p.beta * P;
                    quit = p.b;
                  } else if constexpr (std::is_same_v<T, Case3>) {
                    adopt = p.a + p.beta * P;
                    quit = p.b;
                  } else if constexpr (std::is_same_v<T, Case4>) {
                    adopt = p.beta * P;
                    quit = p.gamma * Q;
                  } else if constexpr (std::is_same_v<T, Case5>) {
                    adopt = p.a;
                    quit = p.gamma * Q;
                  } else {
                    adopt = p.a;
                    quit = p.b + p.gamma * Q;
                  }
                },
                params);
            return State{-(adopt + skip) * B, adopt * B - quit * P, quit * P + skip * B};
          }};
}

// Adoption intensity a(t, P).
inline double adoption_rate(const CaseParams& params, double t, double P) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Case1>) return p.a.rate(t);
        else if constexpr (std::is_same_v<T, Case2>) return p.beta * P;
        else if constexpr (std::is_same_v<T, Case3>) return p.a + p.beta * P;
        else if constexpr (std::is_same_v<T, Case4>) return p.beta * P;
        else return p.a;
      },
      params);
}

// Quitting intensity b(t, Q).
inline double quit_rate(const CaseParams& params, double t, double Q) {
  return std::visit(
      [&](const auto& p) -> double {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Case1>) return p.b.rate(t);
        else if constexpr (std::is_same_v<T, Case2>) return p.b;
        else if constexpr (std::is_same_v<T, Case3>) return p.b;
        else if constexpr (std::is_same_v<T, Case4>) return p.gamma * Q;
        else if constexpr (std::is_same_v<T, Case5>) return p.gamma * Q;
        else return p.b + p.gamma * Q;
      },
      params);
}

/// Direct RK4 on the three-compartment system; Q is re-derived from the
/// conservation law at every sample. C is the cumulative demand.
inline Trajectory bpq_rk4(const BpqCase& c, std::span<const double> grid, double max_step = 0.0) {
  validate(c);
  require(grid.size() >= 2, ErrorCode::parameter, "grid needs at least two points");
  if (max_step <= 0.0) max_step = (grid.back() - grid.front()) / 1e4;
  const double N = c.initial.N();
  // Fourth channel integrates the demand a(t, P) B.
  const auto base = bpq_field(c);
  numerics::VectorField field{4, [base, params = c.params](double t, const State& y) {
                                State d = base.eval(t, {y[0], y[1], y[2]});
                                d.push_back(adoption_rate(params, t, y[1]) * y[0]);
                                return d;
                              }};
  const auto raw = numerics::integrate_on_grid(
      field, {c.initial.B, c.initial.P, c.initial.Q, 0.0}, grid, max_step);
  Trajectory out = detail::make_path();
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const auto& y = raw.states()[k];
    const double t = raw.times()[k];
    detail::append(out, t, y[0], y[1], N, adoption_rate(c.params, t, y[1]) * y[0], y[3]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case 1

namespace detail {

inline bool is_clean(const BpqState& s) { return s.P == 0.0 && s.Q == 0.0; }

// Linear schedules with zero slope count as constants.
inline std::optional<double> constant_value(const RateSchedule& s) {
  if (const auto* c = std::get_if<monopoly::ConstantRate>(&s.kind())) return c->a;
  if (const auto* l = std::get_if<monopoly::LinearRate>(&s.kind()); l && l->a1 == 0.0) return l->a0;
  return std::nullopt;
}
inline std::optional<monopoly::LinearRate> sloped(const RateSchedule& s) {
  if (const auto* l = std::get_if<monopoly::LinearRate>(&s.kind()); l && l->a1 > 0.0) return *l;
  return std::nullopt;
}

inline double constants_P(double a, double b, double c, double N, double t) {
  const double k = a + c - b;
  if (std::abs(k) <= 1e-9 * (a + b + c)) return N * a * t * std::exp(-b * t);
  // e^{-bt} - e^{-(a+c)t} = -e^{-bt} expm1(-k t)
  return -a * N / k * std::exp(-b * t) * std::expm1(-k * t);
}

// P for a(t) = a0 + a1 t with constant b, c. Uses erf when the scaled offset K
// keeps e^{K^2} and the erf difference well conditioned.
inline std::optional<double> a_linear_P(double a0, double a1, double b, double c, double N, double t) {
  const double q = std::sqrt(0.5 * a1);
  const double K = (a0 + c - b) / std::sqrt(2.0 * a1);
  if (K < -4.0 || K > 25.0) return std::nullopt;
  const double diff = std::erfc(K) - std::erfc(K + q * t);
  const double erf_part = std::sqrt(std::numbers::pi / (2.0 * a1)) * (b - c) * std::exp(K * K - b * t) * diff;
  const double exp_part = -std::exp(-b * t) * std::expm1(-q * t * (2.0 * K + q * t));
  return N * (erf_part + exp_part);
}

}  // namespace detail

enum class Case1Branch { constants, a_linear, b_linear, numeric };

inline Case1Branch case1_branch(const Case1& p, const BpqState& s) {
  if (!detail::is_clean(s)) return Case1Branch::numeric;
  const auto a = detail::constant_value(p.a);
  const auto b = detail::constant_value(p.b);
  const auto c = detail::constant_value(p.c);
  if (!c) return Case1Branch::numeric;
  if (a && b) return Case1Branch::constants;
  if (!a && b && detail::sloped(p.a)) return Case1Branch::a_linear;
  if (a && !b && detail::sloped(p.b)) return Case1Branch::b_linear;
  return Case1Branch::numeric;
}

/// Case 1 by closed forms: constants, a(t) linear (erf form) or b(t) linear
/// (one quadrature per grid interval). Other schedule combinations or a
/// market that does not start fresh fall back to RK4 and set the flag.
inline GameRun case1_closed_form(const BpqCase& c, std::span<const double> grid) {
  validate(c);
  const auto& p = std::get<Case1>(c.params);
  const double N = c.initial.N();
  const auto branch = case1_branch(p, c.initial);
  if (branch == Case1Branch::numeric) return {bpq_rk4(c, grid), true};

  const double cc = *detail::constant_value(p.c);
  Trajectory out = detail::make_path();
  auto B_of = [&](double t) { return N * std::exp(-(p.a.cumulative(t) + cc * t)); };

  if (branch == Case1Branch::constants) {
    const double a = *detail::constant_value(p.a);
    const double b = *detail::constant_value(p.b);
    for (double t : grid) {
      const double B = N * std::exp(-(a + cc) * t);
      const double P = detail::constants_P(a, b, cc, N, t);
      const double C = a + cc > 0.0 ? -a * N / (a + cc) * std::expm1(-(a + cc) * t) : 0.0;
      detail::append(out, t, B, P, N, a * B, C);
    }
    return {out, false};
  }

  if (branch == Case1Branch::a_linear) {
    const auto lin = *detail::sloped(p.a);
    const double b = *detail::constant_value(p.b);
    bool closed = true;
    for (double t : grid) closed = closed && detail::a_linear_P(lin.a0, lin.a1, b, cc, N, t).has_value();
    if (!closed) return {bpq_rk4(c, grid), true};
    // C = integral of a B; equals N - B when c = 0.
    double C = 0.0;
    double t_prev = grid.front();
    for (double t : grid) {
      const double B = B_of(t);
      if (cc == 0.0) {
        C = N - B;
      } else if (t > t_prev) {
        C += numerics::quadrature([&](double x) { return p.a.rate(x) * B_of(x); }, t_prev, t, 1e-12);
      }
      t_prev = t;
      detail::append(out, t, B, *detail::a_linear_P(lin.a0, lin.a1, b, cc, N, t), N, p.a.rate(t) * B, C);
    }
    return {out, false};
  }

  // b(t) = b0 + b1 t: P(t) = N a integral_0^t exp[-(a + c) u - (Bq(t) - Bq(u))] du with
  // Bq the cumulative quit rate, advanced across grid intervals.
  const double a = *detail::constant_value(p.a);
  double P = 0.0;
  double t_prev = 0.0;
  for (double t : grid) {
    if (t > t_prev) {
      const double bt = p.b.cumulative(t);
      const double carried = P * std::exp(-(bt - p.b.cumulative(t_prev)));
      const double fresh = numerics::quadrature(
          [&](double u) { return a * N * std::exp(-(a + cc) * u - (bt - p.b.cumulative(u))); }, t_prev,
          t, 1e-13);
      P = carried + fresh;
      t_prev = t;
    }
    const double B = N * std::exp(-(a + cc) * t);
    const double C = a + cc > 0.0 ? -a * N / (a + cc) * std::expm1(-(a + cc) * t) : 0.0;
    detail::append(out, t, B, P, N, a * B, C);
  }
  return {out, false};
}

/// Peak of P for constant rates starting from a fresh market.
inline PeakMetrics case1_peak(double a, double b, double c, double N) {
  detail::positive(a, "a");
  detail::positive(b, "b");
  detail::nonnegative(c, "c");
  detail::positive(N, "N");
  const double s = a + c;
  const double T = std::abs(s - b) <= 1e-12 * (s + b) ? 1.0 / b : (std::log(s) - std::log(b)) / (s - b);
  return {T, detail::constants_P(a, b, c, N, T), a * N / s, true};
}

// a + c from a chosen peak time and ratio rho = (a + c) / b.
inline double case1_calibrate_total_rate(double T_m, double rho) {
  detail::positive(T_m, "T_m");
  detail::positive(rho, "ratio");
  if (std::abs(rho - 1.0) <= 1e-12) return 1.0 / T_m;
  const double b = std::log(rho) / (T_m * (rho - 1.0));
  return rho * b;
}

// ---------------------------------------------------------------------------
// Case 2: SIR

struct SirRelations {
  double B_inf = 0.0;
  double Q_inf = 0.0;
  double B_Tm = 0.0;
  double Q_Tm = 0.0;
  double P_Tm = 0.0;
  bool interior_peak = true;

  double B0 = 0.0;
  double Q0 = 0.0;
  double N = 0.0;
  double ratio = 0.0;  // b / beta

  double B_of_Q(double Q) const { return B0 * std::exp(-(Q - Q0) / ratio); }
  // N - Q - B(Q) as a function of the gap d = Q_inf - Q, accurate as P -> 0.
  double P_of_gap(double d) const { return d - B_inf * std::expm1(d / ratio); }
  double P_of_B(double B) const { return N - B - Q0 + ratio * std::log(B / B0); }
};

inline SirRelations sir_relations(const Case2& p, const BpqState& s) {
  validate(BpqCase{p, s});
  SirRelations r;
  r.B0 = s.B;
  r.Q0 = s.Q;
  r.N = s.N();
  r.ratio = p.b / p.beta;
  const double x = r.ratio;
  if (s.B == 0.0) {
    r.B_inf = 0.0;
  } else {
    // B = B0 exp(-(N - B - Q0)/x) at the end of the epidemic.
    auto g = [&](double B) { return B - s.B * std::exp(-(r.N - B - s.Q) / x); };
    r.B_inf = numerics::solve_root(g, 0.0, std::min(s.B, x), 1e-15 * r.N);
  }
  r.Q_inf = r.N - r.B_inf;
  if (p.beta * s.B > p.b) {
    r.B_Tm = x;
    r.Q_Tm = s.Q + x * std::log(p.beta * s.B / p.b);
    r.P_Tm = r.N - r.B_Tm - r.Q_Tm;
  } else {
    r.interior_peak = false;
    r.B_Tm = s.B;
    r.Q_Tm = s.Q;
    r.P_Tm = s.P;
  }
  return r;
}

/// Time for Q to grow from Q(0) to `Q_target`: (1/b) integral of dQ / P(Q).
inline double sir_time_of(double Q_target, const Case2& p, const BpqState& s) {
  const auto r = sir_relations(p, s);
  require(Q_target >= s.Q && Q_target < r.Q_inf, ErrorCode::domain,
          "Q target outside the reachable range [Q0, Q_inf)");
  if (Q_target == s.Q) return 0.0;
  return numerics::quadrature([&](double u) { return 1.0 / r.P_of_gap(r.Q_inf - u); }, s.Q, Q_target,
                              1e-12) /
         p.b;
}

inline PeakMetrics sir_peak(const Case2& p, const BpqState& s) {
  const auto r = sir_relations(p, s);
  const double T = r.interior_peak ? sir_time_of(r.Q_Tm, p, s) : 0.0;
  return {T, r.P_Tm, s.B - r.B_inf, r.interior_peak};
}

inline Trajectory sir_path(const Case2& p, const BpqState& s, std::span<const double> grid) {
  const auto r = sir_relations(p, s);
  const double N = r.N;
  auto table = numerics::PassageTimeTable::from_gap_speed(
      [&r, b = p.b](double d) { return b * r.P_of_gap(d); }, s.Q, r.Q_inf, 512, 1e-11);
  Trajectory out = detail::make_path();
  for (double t : grid) {
    const double Q = t <= 0.0 ? s.Q : table.state_at(t);
    const double B = r.B_of_Q(Q);
    const double P = N - B - Q;
    detail::append(out, t, B, P, N, p.beta * P * B, s.B - B);
  }
  return out;
}

// b / beta and b reproducing a peak (T_m, P_Tm) of a fresh outbreak from (B0, P0).
struct SirCalibration {
  double b = 0.0;
  double beta = 0.0;
};

inline SirCalibration sir_calibrate(double T_m, double P_Tm, const BpqState& s) {
  detail::positive(T_m, "T_m");
  require(s.Q == 0.0, ErrorCode::calibration_infeasible, "calibration assumes Q(0) = 0");
  require(s.P > 0.0, ErrorCode::calibration_infeasible, "calibration needs P(0) > 0");
  const double N = s.N();
  const double B0 = s.B;
  if (!(P_Tm > s.P && P_Tm < N)) {
    throw Error(ErrorCode::calibration_infeasible, "peak players must lie in (P0, N)");
  }
  auto f = [&](double x) { return N - x - x * std::log(B0 / x) - P_Tm; };
  const double x = numerics::solve_root(f, 1e-12 * B0, B0, 1e-14 * B0);
  const double Q_Tm = x * std::log(B0 / x);
  const double integral = numerics::quadrature(
      [&](double u) { return 1.0 / (N - u - B0 * std::exp(-u / x)); }, 0.0, Q_Tm, 1e-12);
  const double b = integral / T_m;
  return {b, b / x};
}

// ---------------------------------------------------------------------------
// Case 3

namespace detail {

inline double p_dot(const CaseParams& params, double t, double B, double P, double N) {
  const double Q = N - B - P;
  return adoption_rate(params, t, P) * B - quit_rate(params, t, Q) * P;
}

// Locates the maximum of P near the grid argmax by solving dP/dt = 0, with
// local RK4 re-integration from the neighbouring sample.
inline PeakMetrics refine_numeric_peak(const BpqCase& c, const Trajectory& path, double max_step) {
  const auto P = path.channel("P");
  const auto B = path.channel("B");
  const auto& ts = path.times();
  const double N = c.initial.N();
  const std::size_t k = static_cast<std::size_t>(std::max_element(P.begin(), P.end()) - P.begin());
  PeakMetrics m{ts[k], P[k], 0.0, k > 0};
  if (k == 0 || k + 1 >= P.size()) return m;
  const auto field = bpq_field(c);
  const State start{B[k - 1], P[k - 1], N - B[k - 1] - P[k - 1]};
  auto state_at = [&](double t) {
    if (t <= ts[k - 1]) return start;
    const double span = t - ts[k - 1];
    const auto steps = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(span / max_step)));
    State y = start;
    const double h = span / static_cast<double>(steps);
    for (std::size_t i = 0; i < steps; ++i) y = numerics::rk4_step(field, ts[k - 1] + h * i, y, h);
    return y;
  };
  auto slope = [&](double t) {
    const auto y = state_at(t);
    return p_dot(c.params, t, y[0], y[1], N);
  };
  const double lo = ts[k - 1];
  const double hi = ts[k + 1];
  if (!(slope(lo) > 0.0 && slope(hi) < 0.0)) return m;
  const double T = numerics::solve_root(slope, lo, hi, 1e-13 * std::max(1.0, hi));
  const auto y = state_at(T);
  return {T, y[1], 0.0, true};
}

}  // namespace detail

inline Trajectory case3_path(const BpqCase& c, std::span<const double> grid, double max_step = 0.0) {
  validate(c);
  require(std::holds_alternative<Case3>(c.params), ErrorCode::parameter, "case3_path needs case 3");
  return bpq_rk4(c, grid, max_step);
}

// ---------------------------------------------------------------------------
// Case 4

struct Case4Relations {
  double B0 = 0.0;
  double Q0 = 0.0;
  double N = 0.0;
  double exponent = 0.0;  // beta / gamma
  double Q_inf = 0.0;
  double Q_Tm = 0.0;
  double P_Tm = 0.0;
  bool interior_peak = true;

  double B_inf = 0.0;

  double B_of_Q(double Q) const { return B0 * std::pow(Q0 / Q, exponent); }
  double P_of_gap(double d) const {
    return d - B_inf * std::expm1(exponent * std::log1p(d / (Q_inf - d)));
  }
};

inline Case4Relations case4_relations(const Case4& p, const BpqState& s) {
  validate(BpqCase{p, s});
  Case4Relations r;
  r.B0 = s.B;
  r.Q0 = s.Q;
  r.N = s.N();
  r.exponent = p.beta / p.gamma;
  auto h = [&](double Q) { return r.N - r.B_of_Q(Q) - Q; };
  r.Q_inf = s.B == 0.0 ? r.N : numerics::solve_root(h, s.Q, r.N, 1e-15 * r.N);
  r.B_inf = r.N - r.Q_inf;
  const double peak_Q =
      std::pow(p.beta * s.B * std::pow(s.Q, r.exponent) / p.gamma, p.gamma / (p.beta + p.gamma));
  if (peak_Q > s.Q && s.B > 0.0) {
    r.Q_Tm = peak_Q;
    r.P_Tm = r.N - (1.0 + p.gamma / p.beta) * peak_Q;
  } else {
    r.interior_peak = false;
    r.Q_Tm = s.Q;
    r.P_Tm = s.P;
  }
  return r;
}

inline Trajectory case4_path(const Case4& p, const BpqState& s, std::span<const double> grid,
                             PeakMetrics* peak = nullptr) {
  const auto r = case4_relations(p, s);
  const double N = r.N;
  auto table = numerics::PassageTimeTable::from_gap_speed(
      [&r, g = p.gamma](double d) { return g * (r.Q_inf - d) * r.P_of_gap(d); }, s.Q, r.Q_inf, 512,
      1e-11);
  if (peak) {
    *peak = {r.interior_peak ? table.time_to(r.Q_Tm) : 0.0, r.P_Tm, s.B - r.B_of_Q(r.Q_inf),
             r.interior_peak};
  }
  Trajectory out = detail::make_path();
  for (double t : grid) {
    const double Q = t <= 0.0 ? s.Q : table.state_at(t);
    const double B = r.B_of_Q(Q);
    const double P = N - B - Q;
    detail::append(out, t, B, P, N, p.beta * P * B, s.B - B);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Case 5: Riccati equation through the transform Q = 1 / w

namespace detail {

// ln Phi(t) = gamma * integral_0^t (N - B0 e^{-a x}) dx
inline double case5_log_phi(const Case5& p, double N, double B0, double t) {
  return p.gamma * N * t + p.gamma * B0 / p.a * std::expm1(-p.a * t);
}

// w(t1) from w(t0): w' = -gamma (N - B) w + gamma.
inline double case5_advance(const Case5& p, double N, double B0, double w, double t0, double t1) {
  if (t1 <= t0) return w;
  const double l1 = case5_log_phi(p, N, B0, t1);
  const double carried = w * std::exp(case5_log_phi(p, N, B0, t0) - l1);
  const double fresh = p.gamma * numerics::quadrature(
                                     [&](double x) { return std::exp(case5_log_phi(p, N, B0, x) - l1); },
                                     t0, t1, 1e-13);
  return carried + fresh;
}

}  // namespace detail

inline Trajectory case5_path(const Case5& p, const BpqState& s, std::span<const double> grid,
                             PeakMetrics* peak = nullptr) {
  validate(BpqCase{p, s});
  const double N = s.N();
  const double B0 = s.B;
  Trajectory out = detail::make_path();
  double w = 1.0 / s.Q;
  double t_prev = 0.0;
  std::vector<double> ws;
  for (double t : grid) {
    w = detail::case5_advance(p, N, B0, w, t_prev, t);
    t_prev = std::max(t_prev, t);
    ws.push_back(w);
    const double B = B0 * std::exp(-p.a * t);
    const double Q = 1.0 / w;
    const double P = N - B - Q;
    detail::append(out, t, B, P, N, p.a * B, B0 - B);
  }
  if (peak) {
    const auto P = out.channel("P");
    const auto& ts = out.times();
    const std::size_t k = static_cast<std::size_t>(std::max_element(P.begin(), P.end()) - P.begin());
    *peak = {ts[k], P[k], B0, k > 0};
    if (k > 0 && k + 1 < P.size()) {
      auto slope = [&](double t) {
        const double wt = detail::case5_advance(p, N, B0, ws[k - 1], ts[k - 1], t);
        const double B = B0 * std::exp(-p.a * t);
        const double Q = 1.0 / wt;
        return p.a * B - p.gamma * (N - B - Q) * Q;
      };
      if (slope(ts[k - 1]) > 0.0 && slope(ts[k + 1]) < 0.0) {
        const double T = numerics::solve_root(slope, ts[k - 1], ts[k + 1], 1e-13 * std::max(1.0, ts[k + 1]));
        const double wt = detail::case5_advance(p, N, B0, ws[k - 1], ts[k - 1], T);
        peak->T_m = T;
        peak->P_m = N - B0 * std::exp(-p.a * T) - 1.0 / wt;
      }
    }
  }
  return out;
}

// Peak height implied by the peak time: the larger root of the balance quadratic.
inline double case5_peak_players(const Case5& p, double N, double B0, double T_m) {
  const double y = N - B0 * std::exp(-p.a * T_m);
  const double disc = y * y - 4.0 * p.a / p.gamma * B0 * std::exp(-p.a * T_m);
  require(disc >= 0.0, ErrorCode::domain, "no real peak for this peak time");
  return 0.5 * (y + std::sqrt(disc));
}

// ---------------------------------------------------------------------------
// Case 6: Riccati equation integrated directly

inline Trajectory case6_path(const Case6& p, const BpqState& s, std::span<const double> grid,
                             double max_step = 0.0) {
  validate(BpqCase{p, s});
  require(grid.size() >= 2, ErrorCode::parameter, "grid needs at least two points");
  if (max_step <= 0.0) max_step = (grid.back() - grid.front()) / 1e4;
  const double N = s.N();
  const double B0 = s.B;
  numerics::VectorField field{1, [p, N, B0](double t, const State& y) {
                                const double B = B0 * std::exp(-p.a * t);
                                const double P = y[0];
                                return State{p.gamma * P * P - (p.b + p.gamma * (N - B)) * P + p.a * B};
                              }};
  const auto raw = numerics::integrate_on_grid(field, {s.P}, grid, max_step);
  Trajectory out = detail::make_path();
  for (std::size_t k = 0; k < raw.size(); ++k) {
    const double t = raw.times()[k];
    const double B = B0 * std::exp(-p.a * t);
    detail::append(out, t, B, raw.states()[k][0], N, p.a * B, B0 - B);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dispatch

inline GameRun bpq_solve(const BpqCase& c, std::span<const double> grid, double max_step = 0.0) {
  validate(c);
  require(!grid.empty() && grid.front() >= 0.0, ErrorCode::parameter, "grid must start at t >= 0");
  return std::visit(
      [&](const auto& p) -> GameRun {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, Case1>) return case1_closed_form(c, grid);
        else if constexpr (std::is_same_v<T, Case2>) return {sir_path(p, c.initial, grid), false};
        else if constexpr (std::is_same_v<T, Case3>) return {case3_path(c, grid, max_step), false};
        else if constexpr (std::is_same_v<T, Case4>) return {case4_path(p, c.initial, grid), false};
        else if constexpr (std::is_same_v<T, Case5>) return {case5_path(p, c.initial, grid), false};
        else return {case6_path(p, c.initial, grid, max_step), false};
      },
      c.params);
}

inline Trajectory bpq_path(const BpqCase& c, std::span<const double> grid) {
  return bpq_solve(c, grid).trajectory;
}

/// Peak of P: closed forms where they exist, otherwise the grid maximum
/// refined by solving dP/dt = 0 between its neighbours.
inline PeakMetrics bpq_peak(const BpqCase& c, std::span<const double> grid) {
  validate(c);
  const double N = c.initial.N();
  if (const auto* p2 = std::get_if<Case2>(&c.params)) return sir_peak(*p2, c.initial);
  if (const auto* p4 = std::get_if<Case4>(&c.params)) {
    PeakMetrics m;
    case4_path(*p4, c.initial, grid.first(1), &m);
    return m;
  }
  if (const auto* p5 = std::get_if<Case5>(&c.params)) {
    PeakMetrics m;
    case5_path(*p5, c.initial, grid, &m);
    return m;
  }
  if (const auto* p1 = std::get_if<Case1>(&c.params);
      p1 && case1_branch(*p1, c.initial) == Case1Branch::constants) {
    const double a = *detail::constant_value(p1->a);
    const double b = *detail::constant_value(p1->b);
    const double cc = *detail::constant_value(p1->c);
    if (a > 0.0 && b > 0.0) return case1_peak(a, b, cc, N);
  }
  const auto run = bpq_solve(c, grid);
  const double max_step = (grid.back() - grid.front()) / 1e4;
  auto m = detail::refine_numeric_peak(c, run.trajectory, max_step);
  m.C_inf = run.trajectory.channel("C").back();
  return m;
}

// ---------------------------------------------------------------------------
// Complementary games

// Game 1 adopts at intensity g * P_c(t), where P_c counts the players of a
// complementary game launched tau time units earlier (later if tau < 0).
struct ComplementarySpec {
  double g = 0.0;
  double b = 0.0;
  double a_c = 0.0;
  double b_c = 0.0;
  double tau = 0.0;
  double N = 1.0;
  std::optional<double> N_c;

  double complementary_population() const { return N_c.value_or(N); }
  void validate() const {
    detail::nonnegative(g, "g");
    detail::nonnegative(b, "b");
    detail::positive(a_c, "a_c");
    detail::positive(b_c, "b_c");
    require(std::isfinite(tau), ErrorCode::parameter, "tau must be finite");
    detail::positive(N, "N");
    if (N_c) detail::positive(*N_c, "N_c");
  }
  friend bool operator==(const ComplementarySpec&, const ComplementarySpec&) = default;
};

namespace detail {

inline bool comp_confluent(const ComplementarySpec& s) {
  return std::abs(s.b_c - s.a_c) <= 1e-9 * (s.a_c + s.b_c);
}

// Players of game 2 at age x (time since its launch); zero before launch.
inline double comp_players(const ComplementarySpec& s, double x) {
  if (x <= 0.0) return 0.0;
  const double Nc = s.complementary_population();
  if (comp_confluent(s)) return Nc * s.a_c * x * std::exp(-s.a_c * x);
  // e^{-a x} - e^{-b x} = e^{-a x} (1 - e^{-(b - a) x})
  return -Nc * s.a_c / (s.b_c - s.a_c) * std::exp(-s.a_c * x) * std::expm1(-(s.b_c - s.a_c) * x);
}

// Integral of comp_players over ages [0, x].
inline double comp_players_integral(const ComplementarySpec& s, double x) {
  if (x <= 0.0) return 0.0;
  const double Nc = s.complementary_population();
  const double a = s.a_c;
  if (comp_confluent(s)) return Nc / a * (1.0 - std::exp(-a * x) * (1.0 + a * x));
  const double b = s.b_c;
  return Nc * a / (b - a) * (-std::expm1(-a * x) / a + std::expm1(-b * x) / b);
}

// A(t) - A(0) for alpha = g P_c.
inline double comp_exposure(const ComplementarySpec& s, double t) {
  return s.g * (comp_players_integral(s, t + s.tau) - comp_players_integral(s, s.tau));
}

}  // namespace detail

/// Both games: channels B, P, Q, D, C for game 1 and Bc, Pc, Qc for game 2.
inline Trajectory complementary_path(const ComplementarySpec& s, std::span<const double> grid) {
  s.validate();
  require(!grid.empty() && grid.front() >= 0.0, ErrorCode::parameter, "grid must start at t >= 0");
  const double N = s.N;
  const double Nc = s.complementary_population();
  Trajectory out({"B", "P", "Q", "D", "C", "Bc", "Pc", "Qc"});
  // J(t) = integral_0^t a(u) exp(-(A(u) - A(0)) - b (t - u)) du with a = g P_c, advanced per interval.
  double J = 0.0;
  double t_prev = 0.0;
  for (double t : grid) {
    if (t > t_prev) {
      // Split at the launch of game 2 so the integrand is smooth on each piece.
      std::vector<double> knots{t_prev};
      if (-s.tau > t_prev && -s.tau < t) knots.push_back(-s.tau);
      knots.push_back(t);
      double acc = J * std::exp(-s.b * (t - t_prev));
      for (std::size_t i = 1; i < knots.size(); ++i) {
        acc += numerics::quadrature(
            [&](double u) {
              return s.g * detail::comp_players(s, u + s.tau) *
                     std::exp(-detail::comp_exposure(s, u) - s.b * (t - u));
            },
            knots[i - 1], knots[i], 1e-13);
      }
      J = acc;
      t_prev = t;
    }
    const double exposure = detail::comp_exposure(s, t);
    const double B = N * std::exp(-exposure);
    const double P = N * J;
    const double age = t + s.tau;
    const double Pc = detail::comp_players(s, age);
    const double Bc = age <= 0.0 ? Nc : Nc * std::exp(-s.a_c * age);
    out.append(t, {B, P, N - B - P, s.g * Pc * B, N - B, Bc, Pc, Nc - Bc - Pc});
  }
  return out;
}

// Right-hand side of the coupled six-compartment system (for cross-checks);
// state (B, P, Q, Bc, Pc, Qc), valid once game 2 has launched.
inline numerics::VectorField complementary_field(const ComplementarySpec& s) {
  return {6, [s](double, const State& y) {
            const double adopt = s.g * y[4] * y[0];
            return State{-adopt, adopt - s.b * y[1], s.b * y[1], -s.a_c * y[3],
                         s.a_c * y[3] - s.b_c * y[4], s.b_c * y[4]};
          }};
}

/// Replaces the time-varying complementary pull by the constant g * P_c0,
/// giving a case-3 game that starts fresh.
inline BpqCase complementary_constant_approx(const ComplementarySpec& s, double P_c0, double beta = 0.0) {
  s.validate();
  detail::nonnegative(P_c0, "P_c0");
  return BpqCase{Case3{s.g * P_c0, beta, s.b}, BpqState{s.N, 0.0, 0.0}};
}

}  // namespace marketdyn::games
