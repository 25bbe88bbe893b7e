#pragma once

// Single-supplier adoption: constant and time-varying rates, market
// segments, hesitating customers and a population with births and deaths.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "marketdyn/error.hpp"
#include "marketdyn/numerics.hpp"

namespace marketdyn::monopoly {

using numerics::Trajectory;

struct SimpleAdoption {
  double a = 0.0;
  double u0 = 0.0;
  double N = 1.0;

  void validate() const {
    require(std::isfinite(a) && a > 0.0, ErrorCode::parameter, "adaptation rate a must be > 0");
    require(u0 >= 0.0 && u0 <= 1.0, ErrorCode::parameter, "u0 must lie in [0, 1]");
    require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
  }
  friend bool operator==(const SimpleAdoption&, const SimpleAdoption&) = default;
};

inline Trajectory simple_path(const SimpleAdoption& m, std::span<const double> grid) {
  m.validate();
  Trajectory out({"u", "D"});
  for (double t : grid) {
    const double e = std::exp(-m.a * t);
    out.append(t, {1.0 - (1.0 - m.u0) * e, m.a * m.N * (1.0 - m.u0) * e});
  }
  return out;
}

struct Latency {
  double T50 = 0.0;
  double T10 = 0.0;
};

inline double simple_time_to(const SimpleAdoption& m, double u) {
  m.validate();
  require(u >= 0.0 && u < 1.0, ErrorCode::domain, "target share must lie in [0, 1)");
  if (u <= m.u0) return 0.0;
  if (m.u0 == 0.0) return -std::log1p(-u) / m.a;
  // Reaching u from u0 > 0 is faster than from 0, which bounds the bracket.
  const double hi = -std::log1p(-u) / m.a;
  return numerics::solve_root(
      [&](double t) { return 1.0 - (1.0 - m.u0) * std::exp(-m.a * t) - u; }, 0.0, hi, 1e-14 * hi);
}

inline Latency simple_latency(const SimpleAdoption& m) {
  return {simple_time_to(m, 0.5), simple_time_to(m, 0.1)};
}

inline double rate_for_t50(double T50) {
  require(std::isfinite(T50) && T50 > 0.0, ErrorCode::parameter, "T50 must be > 0");
  return std::numbers::ln2 / T50;
}

// ---------------------------------------------------------------------------
// Time-varying adaptation rates

struct ConstantRate {
  double a = 0.0;
  friend bool operator==(const ConstantRate&, const ConstantRate&) = default;
};
struct LinearRate {
  double a0 = 0.0;
  double a1 = 0.0;
  friend bool operator==(const LinearRate&, const LinearRate&) = default;
};
struct ExpDecayRate {
  double a0 = 0.0;
  double beta = 0.0;
  friend bool operator==(const ExpDecayRate&, const ExpDecayRate&) = default;
};
struct CutoffRate {
  double a = 0.0;
  double T = 0.0;
  friend bool operator==(const CutoffRate&, const CutoffRate&) = default;
};
// (time, rate) pairs, linearly interpolated; the first and last values are held
// outside the table.
struct TabulatedRate {
  std::vector<std::pair<double, double>> points;
  friend bool operator==(const TabulatedRate&, const TabulatedRate&) = default;
};

class RateSchedule {
 public:
  using Kind = std::variant<ConstantRate, LinearRate, ExpDecayRate, CutoffRate, TabulatedRate>;

  RateSchedule() : kind_(ConstantRate{}) {}
  RateSchedule(Kind kind) : kind_(std::move(kind)) { validate(); }  // NOLINT implicit by design

  static RateSchedule constant(double a) { return RateSchedule(ConstantRate{a}); }
  static RateSchedule linear(double a0, double a1) { return RateSchedule(LinearRate{a0, a1}); }
  static RateSchedule exp_decay(double a0, double beta) { return RateSchedule(ExpDecayRate{a0, beta}); }
  static RateSchedule cutoff(double a, double T) { return RateSchedule(CutoffRate{a, T}); }
  static RateSchedule tabulated(std::vector<std::pair<double, double>> pts) {
    return RateSchedule(TabulatedRate{std::move(pts)});
  }

  const Kind& kind() const noexcept { return kind_; }
  template <class T>
  bool is() const noexcept {
    return std::holds_alternative<T>(kind_);
  }
  bool is_constant() const noexcept { return is<ConstantRate>(); }

  void validate() const {
    auto nonneg = [](double v, const char* what) {
      require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter,
              std::string(what) + " must be finite and >= 0");
    };
    std::visit(
        [&](const auto& k) {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, ConstantRate>) {
            nonneg(k.a, "a");
          } else if constexpr (std::is_same_v<T, LinearRate>) {
            nonneg(k.a0, "a0");
            nonneg(k.a1, "a1");
          } else if constexpr (std::is_same_v<T, ExpDecayRate>) {
            nonneg(k.a0, "a0");
            nonneg(k.beta, "beta");
          } else if constexpr (std::is_same_v<T, CutoffRate>) {
            nonneg(k.a, "a");
            nonneg(k.T, "T");
          } else {
            require(!k.points.empty(), ErrorCode::parameter, "tabulated schedule needs points");
            for (std::size_t i = 0; i < k.points.size(); ++i) {
              require(std::isfinite(k.points[i].first), ErrorCode::parameter,
                      "tabulated times must be finite");
              nonneg(k.points[i].second, "tabulated rate");
              if (i > 0) {
                require(k.points[i].first > k.points[i - 1].first, ErrorCode::parameter,
                        "tabulated times must be strictly increasing");
              }
            }
          }
        },
        kind_);
  }

  double rate(double t) const {
    return std::visit(
        [&](const auto& k) -> double {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, ConstantRate>) {
            return k.a;
          } else if constexpr (std::is_same_v<T, LinearRate>) {
            return k.a0 + k.a1 * t;
          } else if constexpr (std::is_same_v<T, ExpDecayRate>) {
            return k.a0 * std::exp(-k.beta * t);
          } else if constexpr (std::is_same_v<T, CutoffRate>) {
            return t <= k.T ? k.a : 0.0;
          } else {
            return interpolate(k, t);
          }
        },
        kind_);
  }

  // Integral of the rate over [0, t].
  double cumulative(double t) const {
    require(t >= 0.0, ErrorCode::domain, "schedule time must be >= 0");
    return std::visit(
        [&](const auto& k) -> double {
          using T = std::decay_t<decltype(k)>;
          if constexpr (std::is_same_v<T, ConstantRate>) {
            return k.a * t;
          } else if constexpr (std::is_same_v<T, LinearRate>) {
            return k.a0 * t + 0.5 * k.a1 * t * t;
          } else if constexpr (std::is_same_v<T, ExpDecayRate>) {
            if (k.beta == 0.0) return k.a0 * t;
            return -k.a0 * std::expm1(-k.beta * t) / k.beta;
          } else if constexpr (std::is_same_v<T, CutoffRate>) {
            return k.a * std::min(t, k.T);
          } else {
            return tabulated_cumulative(k, t);
          }
        },
        kind_);
  }

  // Limit of cumulative(t) as t grows; infinity when the rate does not decay.
  double cumulative_limit() const {
    if (const auto* e = std::get_if<ExpDecayRate>(&kind_)) {
      return e->beta > 0.0 ? e->a0 / e->beta : (e->a0 > 0.0 ? INFINITY : 0.0);
    }
    if (const auto* c = std::get_if<CutoffRate>(&kind_)) return c->a * c->T;
    if (const auto* c = std::get_if<ConstantRate>(&kind_)) return c->a > 0.0 ? INFINITY : 0.0;
    if (const auto* l = std::get_if<LinearRate>(&kind_)) {
      return l->a0 > 0.0 || l->a1 > 0.0 ? INFINITY : 0.0;
    }
    const auto& tab = std::get<TabulatedRate>(kind_);
    if (tab.points.back().second > 0.0) return INFINITY;
    return cumulative(std::max(0.0, tab.points.back().first));
  }

  friend bool operator==(const RateSchedule& x, const RateSchedule& y) { return x.kind_ == y.kind_; }

 private:
  static double interpolate(const TabulatedRate& k, double t) {
    const auto& p = k.points;
    if (t <= p.front().first) return p.front().second;
    if (t >= p.back().first) return p.back().second;
    auto it = std::upper_bound(p.begin(), p.end(), t,
                               [](double x, const auto& pt) { return x < pt.first; });
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (t - lo.first) / (hi.first - lo.first);
    return lo.second + w * (hi.second - lo.second);
  }

  static double tabulated_cumulative(const TabulatedRate& k, double t) {
    // Integrate piece by piece so each quadrature call sees a smooth integrand.
    std::vector<double> knots{0.0};
    for (const auto& pt : k.points)
      if (pt.first > 0.0 && pt.first < t) knots.push_back(pt.first);
    knots.push_back(t);
    double total = 0.0;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      total += numerics::quadrature([&](double x) { return interpolate(k, x); }, knots[i - 1],
                                    knots[i], 1e-13);
    }
    return total;
  }

  Kind kind_;
};

inline Trajectory scheduled_path(const RateSchedule& schedule, double u0, double N,
                                 std::span<const double> grid) {
  require(u0 >= 0.0 && u0 <= 1.0, ErrorCode::parameter, "u0 must lie in [0, 1]");
  require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
  Trajectory out({"u", "D"});
  for (double t : grid) {
    const double e = std::exp(-schedule.cumulative(t));
    out.append(t, {1.0 - (1.0 - u0) * e, schedule.rate(t) * N * (1.0 - u0) * e});
  }
  return out;
}

struct Segment {
  double n = 1.0;
  RateSchedule schedule;
  friend bool operator==(const Segment&, const Segment&) = default;
};

inline void validate_segments(std::span<const Segment> segments) {
  require(!segments.empty(), ErrorCode::parameter, "at least one segment is required");
  double total = 0.0;
  for (const auto& s : segments) {
    require(s.n > 0.0 && s.n <= 1.0, ErrorCode::parameter, "segment size must lie in (0, 1]");
    s.schedule.validate();
    total += s.n;
  }
  require(std::abs(total - 1.0) <= 1e-12, ErrorCode::parameter, "segment sizes must sum to 1");
}

inline Trajectory segmented_path(std::span<const Segment> segments, double N,
                                 std::span<const double> grid) {
  validate_segments(segments);
  require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
  Trajectory out({"u", "D"});
  for (double t : grid) {
    double remaining = 0.0;
    double demand = 0.0;
    for (const auto& s : segments) {
      const double e = s.n * std::exp(-s.schedule.cumulative(t));
      remaining += e;
      demand += s.schedule.rate(t) * N * e;
    }
    out.append(t, {1.0 - remaining, demand});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hesitation

enum class HesitationVariant { absorbing_hesitation, returning_hesitation };

// Potential adopters p subscribe at rate a or start hesitating at rate b.
// Hesitators subscribe at rate c (absorbing) or return to p at rate c (returning).
struct HesitationParams {
  double a = 0.0;
  double b = 0.0;
  double c = 0.0;
  HesitationVariant variant = HesitationVariant::absorbing_hesitation;
  double N = 1.0;

  void validate() const {
    require(std::isfinite(a) && a > 0.0, ErrorCode::parameter, "a must be > 0");
    require(std::isfinite(b) && b >= 0.0, ErrorCode::parameter, "b must be >= 0");
    require(std::isfinite(c) && c > 0.0, ErrorCode::parameter, "c must be > 0");
    require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
  }
  friend bool operator==(const HesitationParams&, const HesitationParams&) = default;
};

struct HesitationEigen {
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double r = 0.0;
};

inline HesitationEigen hesitation_eigen(const HesitationParams& p) {
  p.validate();
  const double s = p.a + p.b + p.c;
  const double r = std::sqrt((p.a - p.c) * (p.a - p.c) + p.b * p.b + 2.0 * p.b * (p.a + p.c));
  // lambda2 from the sum, lambda1 from the product to avoid cancellation.
  const double lambda2 = -0.5 * (s + r);
  const double lambda1 = p.a * p.c / lambda2;
  return {lambda1, lambda2, r};
}

struct HesitationState {
  double p = 1.0;
  double h = 0.0;
  double u = 0.0;
  double D = 0.0;
};

inline HesitationState hesitation_at(const HesitationParams& prm, double t) {
  prm.validate();
  const double a = prm.a, b = prm.b, c = prm.c;
  HesitationState s;
  if (prm.variant == HesitationVariant::absorbing_hesitation) {
    const double k = a + b - c;
    s.p = std::exp(-(a + b) * t);
    if (std::abs(k) < 1e-9 * (a + b + c)) {
      s.h = b * t * std::exp(-c * t);
    } else {
      // e^{-ct} - e^{-(a+b)t} = e^{-ct}(1 - e^{-kt})
      s.h = -b / k * std::exp(-c * t) * std::expm1(-k * t);
    }
    s.u = 1.0 - s.p - s.h;
    s.D = prm.N * (a * s.p + c * s.h);
    return s;
  }
  if (b == 0.0) {
    s.p = std::exp(-a * t);
    s.h = 0.0;
    s.u = -std::expm1(-a * t);
  } else {
    const auto e = hesitation_eigen(prm);
    const double e1 = std::exp(e.lambda1 * t);
    const double e2 = std::exp(e.lambda2 * t);
    s.p = ((c + e.lambda1) * e1 - (c + e.lambda2) * e2) / e.r;
    s.h = b / e.r * (e1 - e2);
    // u = a * integral of p
    auto grown = [t](double l) { return l == 0.0 ? t : std::expm1(l * t) / l; };
    s.u = a / e.r * ((c + e.lambda1) * grown(e.lambda1) - (c + e.lambda2) * grown(e.lambda2));
  }
  s.D = prm.N * a * s.p;
  return s;
}

inline Trajectory hesitation_path(const HesitationParams& prm, std::span<const double> grid) {
  prm.validate();
  Trajectory out({"p", "h", "u", "D"});
  for (double t : grid) {
    const auto s = hesitation_at(prm, t);
    out.append(t, {s.p, s.h, s.u, s.D});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Births and deaths

// Potentials adopt at rate a, are born at rate d and die at rate f;
// subscribers die at rate g.
struct BirthDeathParams {
  double a = 0.0;
  double d = 0.0;
  double f = 0.0;
  double g = 0.0;
  double N = 1.0;

  void validate() const {
    require(std::isfinite(a) && a > 0.0, ErrorCode::parameter, "a must be > 0");
    for (double v : {d, f, g})
      require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter, "d, f, g must be >= 0");
    require(a + f > d + g, ErrorCode::parameter, "birth/death rates require a + f > d + g");
    require(std::isfinite(N) && N > 0.0, ErrorCode::parameter, "population N must be > 0");
  }
  friend bool operator==(const BirthDeathParams&, const BirthDeathParams&) = default;
};

inline Trajectory birth_death_path(const BirthDeathParams& prm, std::span<const double> grid) {
  prm.validate();
  const double k = prm.a + prm.f - prm.d - prm.g;
  const bool confluent = k < 1e-9 * (prm.a + prm.d + prm.f + prm.g);
  Trajectory out({"p", "u", "D"});
  for (double t : grid) {
    const double p = std::exp(-(prm.a + prm.f - prm.d) * t);
    const double u = confluent ? prm.a * t * std::exp(-prm.g * t)
                               : -prm.a / k * std::exp(-prm.g * t) * std::expm1(-k * t);
    out.append(t, {p, u, prm.a * prm.N * p});
  }
  return out;
}

}  // namespace marketdyn::monopoly
