#pragma once

// Single markets with network feedback: du/dt = rate * (1 - u) * F(u).
// Every kernel is solved through its passage time Phi(u) = rate * t(u);
// closed forms are used wherever Phi can be inverted explicitly.

#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "marketdyn/error.hpp"
#include "marketdyn/numerics.hpp"

namespace marketdyn::feedback {

using numerics::Trajectory;

enum class KernelKind {
  none,
  bass,
  linear,
  sqrt,
  quadratic,
  power,
  one_minus_u,
  inverse_u,
  inverse_u_cutoff,
  trend_linear_zero,
};

inline std::string_view to_string(KernelKind k) {
  switch (k) {
    case KernelKind::none: return "none";
    case KernelKind::bass: return "bass";
    case KernelKind::linear: return "linear";
    case KernelKind::sqrt: return "sqrt";
    case KernelKind::quadratic: return "quadratic";
    case KernelKind::power: return "power";
    case KernelKind::one_minus_u: return "one_minus_u";
    case KernelKind::inverse_u: return "inverse_u";
    case KernelKind::inverse_u_cutoff: return "inverse_u_cutoff";
    case KernelKind::trend_linear_zero: return "trend_linear_zero";
  }
  return "none";
}

inline std::optional<KernelKind> kernel_kind_from_string(std::string_view s) {
  for (auto k : {KernelKind::none, KernelKind::bass, KernelKind::linear, KernelKind::sqrt,
                 KernelKind::quadratic, KernelKind::power, KernelKind::one_minus_u,
                 KernelKind::inverse_u, KernelKind::inverse_u_cutoff, KernelKind::trend_linear_zero}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

// `param` is the imitator/innovator ratio for bass, the exponent n for power
// and the cutoff share u1 for inverse_u_cutoff; unused otherwise.
struct FeedbackKernel {
  KernelKind kind = KernelKind::none;
  double param = 0.0;

  static FeedbackKernel none() { return {KernelKind::none, 0.0}; }
  static FeedbackKernel bass(double ratio) { return {KernelKind::bass, ratio}; }
  static FeedbackKernel linear() { return {KernelKind::linear, 0.0}; }
  static FeedbackKernel sqrt() { return {KernelKind::sqrt, 0.0}; }
  static FeedbackKernel quadratic() { return {KernelKind::quadratic, 0.0}; }
  static FeedbackKernel power(double n) { return {KernelKind::power, n}; }
  static FeedbackKernel one_minus_u() { return {KernelKind::one_minus_u, 0.0}; }
  static FeedbackKernel inverse_u() { return {KernelKind::inverse_u, 0.0}; }
  static FeedbackKernel inverse_u_cutoff(double u1) { return {KernelKind::inverse_u_cutoff, u1}; }
  static FeedbackKernel trend_linear_zero() { return {KernelKind::trend_linear_zero, 0.0}; }

  void validate() const {
    switch (kind) {
      case KernelKind::bass:
        require(std::isfinite(param) && param > 0.0, ErrorCode::parameter, "bass ratio must be > 0");
        break;
      case KernelKind::power:
        require(std::isfinite(param) && param >= 0.0, ErrorCode::parameter,
                "power exponent n must be >= 0");
        break;
      case KernelKind::inverse_u_cutoff:
        require(param > 0.0 && param < 1.0, ErrorCode::parameter, "cutoff share u1 must lie in (0, 1)");
        break;
      default: break;
    }
  }

  // Kernel with the same dynamics and a closed-form solution, if one exists.
  FeedbackKernel canonical() const {
    if (kind != KernelKind::power) return *this;
    if (param == 0.0) return none();
    if (param == 0.5) return sqrt();
    if (param == 1.0) return linear();
    if (param == 2.0) return quadratic();
    return *this;
  }

  double F(double u) const {
    switch (kind) {
      case KernelKind::none: return 1.0;
      case KernelKind::bass: return 1.0 + param * u;
      case KernelKind::linear: return u;
      case KernelKind::sqrt: return std::sqrt(u);
      case KernelKind::quadratic: return u * u;
      case KernelKind::power: return param == 0.0 ? 1.0 : std::pow(u, param);
      case KernelKind::one_minus_u: return 1.0 - u;
      case KernelKind::inverse_u: return 1.0 / u;
      case KernelKind::inverse_u_cutoff: return u < param ? 1.0 / u : 0.0;
      case KernelKind::trend_linear_zero: return (1.0 - u) / u;
    }
    return 1.0;
  }

  // Whether growth from u0 = 0 is impossible (0 is an equilibrium).
  bool needs_seed() const {
    const auto c = canonical();
    return c.kind == KernelKind::linear || c.kind == KernelKind::quadratic ||
           (c.kind == KernelKind::power && c.param >= 1.0);
  }

  friend bool operator==(const FeedbackKernel&, const FeedbackKernel&) = default;
};

// `rate` is a for none and bass (imitation rate = ratio * a) and the growth
// coefficient gamma of the respective kernel otherwise.
struct FeedbackModel {
  FeedbackKernel kernel;
  double rate = 1.0;
  double u0 = 0.0;
  double N = 1.0;

  void validate() const {
    kernel.validate();
    require(std::isfinite(rate) && rate > 0.0, ErrorCode::parameter, "rate must be > 0");
    require(u0 >= 0.0 && u0 < 1.0, ErrorCode::parameter, "u0 must lie in [0, 1)");
    require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
    if (kernel.kind == KernelKind::inverse_u_cutoff) {
      require(u0 <= kernel.param, ErrorCode::parameter, "u0 must not exceed the cutoff share u1");
    }
  }
  friend bool operator==(const FeedbackModel&, const FeedbackModel&) = default;
};

inline double growth(const FeedbackModel& m, double u) { return m.rate * (1.0 - u) * m.kernel.F(u); }

namespace detail {

inline double power_phi(double n, double u0, double u) {
  if (u <= u0) return 0.0;
  if (n < 1.0) {
    // s = u^(1-n) removes the singularity at u = 0; the 1/(1-s) pole is split off.
    const double m = 1.0 / (1.0 - n);
    const double s0 = std::pow(u0, 1.0 - n);
    const double s1 = std::pow(u, 1.0 - n);
    const double smooth = numerics::quadrature(
        [m](double s) {
          if (s <= 0.0) return m - 1.0;
          const double w = -std::log(s);
          if (w < 1e-2) {
            // Series of (E(mw) - E(w)) / w with E(x) = x / (1 - e^-x); the poles cancel exactly.
            const double m2 = m * m, w2 = w * w;
            return 0.5 * (m - 1.0) + w * ((m2 - 1.0) / 12.0 - w2 * ((m2 * m2 - 1.0) / 720.0 -
                                                                   w2 * (m2 * m2 * m2 - 1.0) / 30240.0));
          }
          return m / -std::expm1(-m * w) - 1.0 / (1.0 - s);
        },
        s0, s1, 1e-13);
    return smooth + std::log1p(-s0) - std::log1p(-s1);
  }
  const double smooth = numerics::quadrature(
      [n](double x) { return -std::expm1(n * std::log(x)) / ((1.0 - x) * std::pow(x, n)); }, u0, u,
      1e-13);
  return smooth + std::log1p(-u0) - std::log1p(-u);
}

}  // namespace detail

/// rate * t(u): the scaled time to travel from u0 to u. Requires u0 <= u < 1.
inline double phi(const FeedbackKernel& kernel, double u0, double u) {
  kernel.validate();
  require(u >= u0 && u < 1.0, ErrorCode::domain, "share must lie in [u0, 1)");
  if (u == u0) return 0.0;
  const auto k = kernel.canonical();
  if (u0 == 0.0 && k.needs_seed()) {
    throw Error(ErrorCode::never_reached, "an empty market never grows under this kernel");
  }
  switch (k.kind) {
    case KernelKind::none: return std::log1p(-u0) - std::log1p(-u);
    case KernelKind::bass: {
      const double r = k.param;
      return (std::log1p(r * u) - std::log1p(r * u0) + std::log1p(-u0) - std::log1p(-u)) / (1.0 + r);
    }
    case KernelKind::linear:
      return std::log(u / u0) + std::log1p(-u0) - std::log1p(-u);
    case KernelKind::sqrt: {
      const double s0 = std::sqrt(u0);
      const double s = std::sqrt(u);
      return std::log1p(-s0) + std::log1p(s) - std::log1p(s0) - std::log1p(-s);
    }
    case KernelKind::quadratic:
      return std::log(u / u0) + std::log1p(-u0) - std::log1p(-u) + 1.0 / u0 - 1.0 / u;
    case KernelKind::power: return detail::power_phi(k.param, u0, u);
    case KernelKind::one_minus_u: return 1.0 / (1.0 - u) - 1.0 / (1.0 - u0);
    case KernelKind::inverse_u_cutoff:
      if (u > k.param) throw Error(ErrorCode::never_reached, "share lies beyond the cutoff u1");
      [[fallthrough]];
    case KernelKind::inverse_u: return -(u - u0) - (std::log1p(-u) - std::log1p(-u0));
    case KernelKind::trend_linear_zero:
      return (std::log1p(-u) + u / (1.0 - u)) - (std::log1p(-u0) + u0 / (1.0 - u0));
  }
  return 0.0;
}

inline double t_of_u(const FeedbackModel& m, double u) {
  m.validate();
  return phi(m.kernel, m.u0, u) / m.rate;
}

// The quadratic-kernel time printed with the factor u(u - u0) inside the
// logarithm. It does not vanish at u = u0 and is kept only for reporting.
inline double quadratic_time_u_minus_u0_form(double rate, double u0, double u) {
  require(u > u0 && u0 > 0.0 && u < 1.0, ErrorCode::domain, "requires 0 < u0 < u < 1");
  return (std::log(u * (u - u0) / ((1.0 - u) * u0)) + 1.0 / u0 - 1.0 / u) / rate;
}

namespace detail {

constexpr double kShareCeiling = 1.0 - 0x1p-53;

inline double invert_phi(const FeedbackKernel& kernel, double u0, double target, double ceiling) {
  if (target <= 0.0) return u0;
  if (phi(kernel, u0, ceiling) <= target) return ceiling;
  return numerics::solve_root([&](double u) { return phi(kernel, u0, u) - target; }, u0, ceiling,
                              1e-15);
}

}  // namespace detail

inline double u_of_t(const FeedbackModel& m, double t) {
  m.validate();
  require(t >= 0.0, ErrorCode::domain, "time must be >= 0");
  const auto k = m.kernel.canonical();
  const double u0 = m.u0;
  if (t == 0.0) return u0;
  if (u0 == 0.0 && k.needs_seed()) return 0.0;
  const double x = m.rate * t;
  switch (k.kind) {
    case KernelKind::none: return 1.0 - (1.0 - u0) * std::exp(-x);
    case KernelKind::bass: {
      const double r = k.param;
      const double e = std::exp(-(1.0 + r) * x);
      return (1.0 + r * u0 - (1.0 - u0) * e) / (1.0 + r * u0 + r * (1.0 - u0) * e);
    }
    case KernelKind::linear: {
      const double e = std::exp(-x);
      return u0 / (u0 + (1.0 - u0) * e);
    }
    case KernelKind::sqrt: {
      const double s0 = std::sqrt(u0);
      const double e = std::exp(-x);
      const double q = (1.0 + s0 - (1.0 - s0) * e) / (1.0 + s0 + (1.0 - s0) * e);
      return q * q;
    }
    case KernelKind::one_minus_u: return 1.0 - (1.0 - u0) / (1.0 + x * (1.0 - u0));
    case KernelKind::inverse_u_cutoff: {
      const double u1 = k.param;
      if (x >= phi(k, u0, u1)) return u1;
      return detail::invert_phi(k, u0, x, u1);
    }
    default: return detail::invert_phi(k, u0, x, detail::kShareCeiling);
  }
}

inline double calibrate_rate(const FeedbackKernel& kernel, double T50, double u0) {
  kernel.validate();
  require(std::isfinite(T50) && T50 > 0.0, ErrorCode::parameter, "T50 must be > 0");
  require(u0 >= 0.0 && u0 < 0.5, ErrorCode::parameter, "calibration to T50 needs u0 < 0.5");
  if (kernel.kind == KernelKind::inverse_u_cutoff) {
    require(kernel.param > 0.5, ErrorCode::parameter, "cutoff u1 <= 0.5 never reaches 50%");
  }
  return phi(kernel, u0, 0.5) / T50;
}

// ---------------------------------------------------------------------------
// Metrics

struct Inflection {
  double u = 0.0;
  double t = 0.0;
  double gradient = 0.0;
};

struct MarketMetrics {
  double T50 = 0.0;
  double T10 = 0.0;
  bool t10_already_reached = false;
  std::optional<double> T60_minus_T50;
  std::optional<Inflection> inflection;
};

// Share at which du/dt peaks, when it lies strictly inside (0, 1).
inline std::optional<double> inflection_share(const FeedbackKernel& kernel) {
  const auto k = kernel.canonical();
  switch (k.kind) {
    case KernelKind::linear: return 0.5;
    case KernelKind::sqrt: return 1.0 / 3.0;
    case KernelKind::quadratic: return 2.0 / 3.0;
    case KernelKind::power: return k.param / (k.param + 1.0);
    case KernelKind::bass:
      if (k.param > 1.0) return (k.param - 1.0) / (2.0 * k.param);
      return std::nullopt;
    default: return std::nullopt;
  }
}

inline std::optional<Inflection> inflection(const FeedbackModel& m) {
  m.validate();
  const auto u = inflection_share(m.kernel);
  if (!u || *u <= m.u0) return std::nullopt;
  return Inflection{*u, t_of_u(m, *u), growth(m, *u)};
}

inline MarketMetrics latency_metrics(const FeedbackModel& m) {
  m.validate();
  MarketMetrics out;
  require(m.u0 < 0.5, ErrorCode::domain, "u0 >= 0.5: the 50% point lies in the past");
  out.T50 = t_of_u(m, 0.5);
  if (m.u0 >= 0.1) {
    out.T10 = 0.0;
    out.t10_already_reached = true;
  } else {
    out.T10 = t_of_u(m, 0.1);
  }
  const bool reaches_60 = m.kernel.kind != KernelKind::inverse_u_cutoff || m.kernel.param >= 0.6;
  if (reaches_60) out.T60_minus_T50 = t_of_u(m, 0.6) - out.T50;
  out.inflection = inflection(m);
  return out;
}

// ---------------------------------------------------------------------------
// Paths

namespace detail {

inline double closed_demand(const FeedbackModel& m, double t, double u) {
  const auto k = m.kernel.canonical();
  if (k.kind == KernelKind::linear) {
    const double e = std::exp(-m.rate * t);
    const double den = m.u0 + (1.0 - m.u0) * e;
    return m.N * m.rate * m.u0 * (1.0 - m.u0) * e / (den * den);
  }
  if (k.kind == KernelKind::none) return m.N * m.rate * (1.0 - m.u0) * std::exp(-m.rate * t);
  return m.N * growth(m, u);
}

}  // namespace detail

/// u(t) and demand D(t) = N du/dt on the grid.
inline Trajectory demand_curve(const FeedbackModel& m, std::span<const double> grid) {
  m.validate();
  Trajectory out({"u", "D"});
  const auto k = m.kernel.canonical();
  if (k.kind == KernelKind::power && !(m.u0 == 0.0 && k.needs_seed())) {
    // No closed form: tabulate passage times once and invert per sample.
    const double n = k.param;
    const double rate = m.rate;
    numerics::PassageTimeTable table(
        [n, rate](double a, double b) { return detail::power_phi(n, a, b) / rate; }, m.u0, 1.0);
    for (double t : grid) {
      const double u = table.state_at(t);
      out.append(t, {u, m.N * growth(m, u)});
    }
    return out;
  }
  for (double t : grid) {
    const double u = u_of_t(m, t);
    double d = detail::closed_demand(m, t, u);
    if (k.kind == KernelKind::inverse_u_cutoff && u >= k.param) d = 0.0;
    out.append(t, {u, d});
  }
  return out;
}

inline Trajectory cutoff_path(const FeedbackModel& m, std::span<const double> grid) {
  m.validate();
  require(m.kernel.kind == KernelKind::inverse_u_cutoff, ErrorCode::parameter,
          "cutoff_path needs an inverse_u_cutoff kernel");
  return demand_curve(m, grid);
}

inline double cutoff_time(const FeedbackModel& m) {
  m.validate();
  require(m.kernel.kind == KernelKind::inverse_u_cutoff, ErrorCode::parameter,
          "cutoff_time needs an inverse_u_cutoff kernel");
  return t_of_u(m, m.kernel.param);
}

// ---------------------------------------------------------------------------
// Equilibria

enum class EquilibriumClass { attractor, repeller, not_equilibrium };

inline std::string_view to_string(EquilibriumClass c) {
  switch (c) {
    case EquilibriumClass::attractor: return "attractor";
    case EquilibriumClass::repeller: return "repeller";
    case EquilibriumClass::not_equilibrium: return "not_equilibrium";
  }
  return "not_equilibrium";
}

struct Equilibrium {
  double u = 0.0;
  EquilibriumClass cls = EquilibriumClass::not_equilibrium;
  friend bool operator==(const Equilibrium&, const Equilibrium&) = default;
};

/// Zeros of (1 - u) F(u) on [0, 1]. A zero counts as an equilibrium only if
/// the acceleration f f' also vanishes there (the square-root kernel at 0
/// fails this); stability follows from the sign of the flow on each side.
inline std::vector<Equilibrium> classify_equilibria(const FeedbackKernel& kernel) {
  kernel.validate();
  auto f = [&](double u) { return (1.0 - u) * kernel.F(u); };
  auto accel = [&](double u) {
    const double h = 1e-3 * std::min(u, 1.0 - u);
    return f(u) * (f(u + h) - f(u - h)) / (2.0 * h);
  };

  std::vector<Equilibrium> out;
  if (kernel.kind == KernelKind::inverse_u_cutoff) {
    // Flow stops at u1 from below and nothing moves above it.
    out.push_back({kernel.param, EquilibriumClass::attractor});
    return out;
  }
  for (double star : {0.0, 1.0}) {
    const double near = star == 0.0 ? 1e-12 : 1.0 - 1e-8;
    const double far = star == 0.0 ? 1e-4 : 1.0 - 1e-4;
    const double at = (star == 0.0) ? f(0.0) : 0.0;
    if (star == 0.0 && !(std::isfinite(at) && at == 0.0)) continue;
    const bool settles = std::abs(accel(near)) < 0.1 * std::abs(accel(far));
    if (!settles) {
      out.push_back({star, EquilibriumClass::not_equilibrium});
      continue;
    }
    // Only one side of each endpoint lies inside [0, 1].
    const double flow = f(near);
    const bool toward = star == 0.0 ? flow < 0.0 : flow > 0.0;
    out.push_back({star, toward ? EquilibriumClass::attractor : EquilibriumClass::repeller});
  }
  return out;
}

}  // namespace marketdyn::feedback
