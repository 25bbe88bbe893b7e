#pragma once

// Markets shared by several suppliers. Supplier i gains customers from the
// untapped market at rate (1 - sum u)(m_i + r_i u_i) and exchanges customers
// with the other suppliers through churn flows C_i, which always sum to zero.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "marketdyn/error.hpp"
#include "marketdyn/numerics.hpp"

namespace marketdyn::competition {

using numerics::SquareMatrix;
using numerics::State;
using numerics::Trajectory;

inline std::vector<std::string> share_labels(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("u" + std::to_string(i + 1));
  return out;
}

struct BassCompetition {
  std::vector<double> m;
  std::vector<double> r;
  std::vector<double> u0;

  std::size_t size() const noexcept { return m.size(); }

  void validate() const {
    const std::size_t n = m.size();
    require(n >= 1, ErrorCode::parameter, "at least one supplier is required");
    require(r.size() == n && u0.size() == n, ErrorCode::parameter, "m, r and u0 must have equal length");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      require(std::isfinite(m[i]) && m[i] >= 0.0, ErrorCode::parameter, "m_i must be >= 0");
      require(std::isfinite(r[i]) && r[i] >= 0.0, ErrorCode::parameter, "r_i must be >= 0");
      require(std::isfinite(u0[i]) && u0[i] >= 0.0, ErrorCode::parameter, "u0_i must be >= 0");
      total += u0[i];
    }
    require(total <= 1.0 + 1e-12, ErrorCode::parameter, "initial shares must sum to at most 1");
  }
  friend bool operator==(const BassCompetition&, const BassCompetition&) = default;
};

// Off-diagonal entries a(i, j) >= 0 are churn rates from supplier i to j. The
// diagonal is derived (total outflow rate) and never stored.
class ChurnMatrix {
 public:
  ChurnMatrix() = default;
  explicit ChurnMatrix(std::size_t n) : n_(n), a_(n * n, 0.0) {
    require(n >= 1, ErrorCode::parameter, "churn matrix needs n >= 1");
  }
  // Rows of a full n x n table; diagonal entries must be zero.
  explicit ChurnMatrix(const std::vector<std::vector<double>>& rows) : ChurnMatrix(rows.size()) {
    for (std::size_t i = 0; i < n_; ++i) {
      require(rows[i].size() == n_, ErrorCode::parameter, "churn matrix must be square");
      for (std::size_t j = 0; j < n_; ++j) {
        if (i == j) {
          require(rows[i][j] == 0.0, ErrorCode::parameter,
                  "churn matrix diagonal is derived and must be given as 0");
        } else {
          set(i, j, rows[i][j]);
        }
      }
    }
  }

  std::size_t size() const noexcept { return n_; }
  double operator()(std::size_t i, std::size_t j) const { return i == j ? outflow(i) : a_[i * n_ + j]; }
  void set(std::size_t i, std::size_t j, double v) {
    require(i < n_ && j < n_ && i != j, ErrorCode::parameter, "churn index out of range or diagonal");
    require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter, "churn rates must be >= 0");
    a_[i * n_ + j] = v;
  }
  double outflow(std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < n_; ++j)
      if (j != i) s += a_[i * n_ + j];
    return s;
  }
  double max_rate() const { return a_.empty() ? 0.0 : *std::max_element(a_.begin(), a_.end()); }

  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> out(n_, std::vector<double>(n_, 0.0));
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (i != j) out[i][j] = a_[i * n_ + j];
    return out;
  }

  friend bool operator==(const ChurnMatrix&, const ChurnMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> a_;
};

// Popularity f_i = b_i u_i + eps_i scales the flow into supplier i.
struct StimulatedChurnSpec {
  ChurnMatrix churn;
  std::vector<double> b;
  std::vector<double> eps;

  void validate() const {
    const std::size_t n = churn.size();
    require(n >= 1, ErrorCode::parameter, "stimulated churn needs a churn matrix");
    require(b.size() == n && eps.size() == n, ErrorCode::parameter, "b and eps need one entry per supplier");
    bool any = false;
    for (std::size_t i = 0; i < n; ++i) {
      require(std::isfinite(b[i]) && b[i] >= 0.0, ErrorCode::parameter, "b_i must be >= 0");
      require(eps[i] == 0.0 || eps[i] == 1.0, ErrorCode::parameter, "eps_i must be 0 or 1");
      any = any || b[i] > 0.0 || eps[i] > 0.0;
    }
    require(any, ErrorCode::parameter, "some b_i or eps_i must be nonzero");
  }
  double popularity(std::size_t i, double u) const { return b[i] * u + eps[i]; }
  friend bool operator==(const StimulatedChurnSpec&, const StimulatedChurnSpec&) = default;
};

struct Sinusoid {
  double amplitude = 0.0;
  double period = 1.0;
  double phase = 0.0;

  double value(double t) const {
    return amplitude * std::sin(2.0 * std::numbers::pi * t / period + phase);
  }
  // Integral over [0, t].
  double integral(double t) const {
    const double w = 2.0 * std::numbers::pi / period;
    return amplitude / w * (std::cos(phase) - std::cos(w * t + phase));
  }
  friend bool operator==(const Sinusoid&, const Sinusoid&) = default;
};

struct PeriodicTerm {
  std::size_t from = 0;
  std::size_t to = 1;
  Sinusoid wave;
  friend bool operator==(const PeriodicTerm&, const PeriodicTerm&) = default;
};

// a_ij(t) = a0_ij + sum of the zero-mean sinusoids attached to (i, j).
struct PeriodicChurnSpec {
  ChurnMatrix a0;
  std::vector<PeriodicTerm> terms;

  void validate() const {
    const std::size_t n = a0.size();
    require(n >= 2, ErrorCode::parameter, "periodic churn needs at least two suppliers");
    std::vector<double> swing(n * n, 0.0);
    for (const auto& term : terms) {
      require(term.from < n && term.to < n && term.from != term.to, ErrorCode::parameter,
              "periodic term indices out of range");
      require(std::isfinite(term.wave.amplitude) && std::isfinite(term.wave.phase),
              ErrorCode::parameter, "periodic term must be finite");
      require(term.wave.period > 0.0, ErrorCode::parameter, "period must be > 0");
      swing[term.from * n + term.to] += std::abs(term.wave.amplitude);
    }
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j)
        if (i != j) {
          require(a0(i, j) - swing[i * n + j] >= 0.0, ErrorCode::parameter,
                  "periodic churn rate would become negative");
        }
  }

  double epsilon(std::size_t i, std::size_t j, double t) const {
    double s = 0.0;
    for (const auto& term : terms)
      if (term.from == i && term.to == j) s += term.wave.value(t);
    return s;
  }
  double epsilon_integral(std::size_t i, std::size_t j, double t) const {
    double s = 0.0;
    for (const auto& term : terms)
      if (term.from == i && term.to == j) s += term.wave.integral(t);
    return s;
  }
  double rate(std::size_t i, std::size_t j, double t) const { return a0(i, j) + epsilon(i, j, t); }
  friend bool operator==(const PeriodicChurnSpec&, const PeriodicChurnSpec&) = default;
};

using ChurnSpec = std::variant<std::monostate, ChurnMatrix, StimulatedChurnSpec, PeriodicChurnSpec>;

inline std::size_t churn_size(const ChurnSpec& spec) {
  return std::visit(
      [](const auto& s) -> std::size_t {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, std::monostate>) return 0;
        else if constexpr (std::is_same_v<T, ChurnMatrix>) return s.size();
        else if constexpr (std::is_same_v<T, StimulatedChurnSpec>) return s.churn.size();
        else return s.a0.size();
      },
      spec);
}

inline void validate_churn(const ChurnSpec& spec) {
  if (const auto* s = std::get_if<StimulatedChurnSpec>(&spec)) s->validate();
  if (const auto* p = std::get_if<PeriodicChurnSpec>(&spec)) p->validate();
}

/// Net churn flow into every supplier. Each pair (i, j) contributes equal and
/// opposite amounts, so the flows sum to zero up to rounding.
inline std::vector<double> churn_flows(const ChurnSpec& spec, double t, std::span<const double> u) {
  const std::size_t n = u.size();
  std::vector<double> c(n, 0.0);
  if (std::holds_alternative<std::monostate>(spec)) return c;
  require(churn_size(spec) == n, ErrorCode::parameter, "churn spec size does not match state");
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double flow = 0.0;  // net flow j -> i
      std::visit(
          [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ChurnMatrix>) {
              flow = s(j, i) * u[j] - s(i, j) * u[i];
            } else if constexpr (std::is_same_v<T, StimulatedChurnSpec>) {
              flow = s.churn(j, i) * u[j] * s.popularity(i, u[i]) -
                     s.churn(i, j) * u[i] * s.popularity(j, u[j]);
            } else if constexpr (std::is_same_v<T, PeriodicChurnSpec>) {
              flow = s.rate(j, i, t) * u[j] - s.rate(i, j, t) * u[i];
            }
          },
          spec);
      c[i] += flow;
      c[j] -= flow;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Markets without churn

/// Final shares when nobody churns. Shares along a trajectory are linked
/// through a reference supplier k with r_k > 0, which reduces the fixed point
/// to one monotone equation in u_k.
inline std::vector<double> fixed_point_no_churn(const BassCompetition& mk) {
  mk.validate();
  const std::size_t n = mk.size();
  const double start = std::accumulate(mk.u0.begin(), mk.u0.end(), 0.0);
  if (start >= 1.0 - 1e-15) return mk.u0;

  // Suppliers with m_i = 0 and u_i = 0 never gain anyone.
  std::vector<bool> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = mk.m[i] > 0.0 || mk.u0[i] > 0.0;

  std::size_t k = n;
  for (std::size_t i = 0; i < n; ++i)
    if (active[i] && mk.r[i] > 0.0 && (k == n || mk.r[i] > mk.r[k])) k = i;

  if (k == n) {
    double msum = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) msum += mk.m[i];
    if (!(msum > 0.0)) throw Error(ErrorCode::infeasible_market, "no supplier can gain customers");
    std::vector<double> out(mk.u0);
    for (std::size_t i = 0; i < n; ++i)
      if (active[i]) out[i] += mk.m[i] / msum * (1.0 - start);
    return out;
  }

  const double mk_ = mk.m[k];
  const double rk = mk.r[k];
  auto shares = [&](double x) {
    const double ratio = (mk_ + rk * x) / (mk_ + rk * mk.u0[k]);
    std::vector<double> u(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) {
        u[i] = mk.u0[i];
      } else if (i == k) {
        u[i] = x;
      } else if (mk.r[i] > 0.0) {
        const double c = mk.m[i] / mk.r[i];
        u[i] = (c + mk.u0[i]) * std::pow(ratio, mk.r[i] / rk) - c;
      } else {
        u[i] = mk.u0[i] + mk.m[i] / rk * std::log(ratio);
      }
    }
    return u;
  };
  auto excess = [&](double x) {
    const auto u = shares(x);
    return std::accumulate(u.begin(), u.end(), 0.0) - 1.0;
  };
  double x = 0.0;
  try {
    x = numerics::solve_root(excess, mk.u0[k], 1.0, 1e-15);
  } catch (const Error& e) {
    throw Error(ErrorCode::infeasible_market, std::string("fixed point not bracketed: ") + e.what());
  }
  return shares(x);
}

inline Trajectory innovators_only_path(std::span<const double> m, std::span<const double> grid) {
  require(!m.empty(), ErrorCode::parameter, "at least one supplier is required");
  double msum = 0.0;
  for (double v : m) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter, "m_i must be >= 0");
    msum += v;
  }
  require(msum > 0.0, ErrorCode::parameter, "sum of m_i must be > 0");
  Trajectory out(share_labels(m.size()));
  for (double t : grid) {
    const double total = -std::expm1(-msum * t);
    State u(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) u[i] = m[i] / msum * total;
    out.append(t, std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Spontaneous churn

namespace detail {

// Balance rows C_i = 0 for i < n - 1 and a final row of ones, with rates
// scaled by the largest one (the balance equations are homogeneous).
inline SquareMatrix balance_system(const ChurnMatrix& c) {
  const std::size_t n = c.size();
  const double scale = c.max_rate();
  if (!(scale > 0.0)) throw Error(ErrorCode::degenerate_market, "no churn at all: shares are not determined");
  SquareMatrix a(n);
  for (std::size_t i = 0; i + 1 < n; ++i)
    for (std::size_t j = 0; j < n; ++j) a(i, j) = (i == j ? -c.outflow(i) : c(j, i)) / scale;
  for (std::size_t j = 0; j < n; ++j) a(n - 1, j) = 1.0;
  return a;
}

}  // namespace detail

/// Shares of a fully developed market where churn balances out.
inline std::vector<double> spontaneous_equilibrium(const ChurnMatrix& c) {
  const std::size_t n = c.size();
  require(n >= 1, ErrorCode::parameter, "empty churn matrix");
  if (n == 1) return {1.0};
  const auto a = detail::balance_system(c);
  std::vector<double> rhs(n, 0.0);
  rhs[n - 1] = 1.0;
  try {
    return numerics::linear_solve(a, rhs);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::singular_matrix) throw;
    throw Error(ErrorCode::degenerate_market,
                "two or more suppliers lose no customers; use the dynamic path instead");
  }
}

// Same equilibrium through cofactors of the balance matrix: u_i = A_ni / D.
inline std::vector<double> spontaneous_equilibrium_cofactors(const ChurnMatrix& c) {
  const std::size_t n = c.size();
  require(n >= 1, ErrorCode::parameter, "empty churn matrix");
  if (n == 1) return {1.0};
  const auto a = detail::balance_system(c);
  const double d = numerics::det(a);
  if (!(std::abs(d) > 1e-300)) {
    throw Error(ErrorCode::degenerate_market, "two or more suppliers lose no customers");
  }
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = numerics::cofactor(a, n - 1, i) / d;
  return u;
}

// du/dt = m - Q u for innovators with spontaneous churn.
inline SquareMatrix innovator_churn_matrix(std::span<const double> m, const ChurnMatrix& c) {
  const std::size_t n = m.size();
  require(c.size() == n, ErrorCode::parameter, "m and churn matrix sizes differ");
  SquareMatrix q(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) q(i, j) = i == j ? m[i] + c.outflow(i) : m[i] - c(j, i);
  return q;
}

inline numerics::VectorField competition_field(const BassCompetition& mk, const ChurnSpec& churn) {
  const std::size_t n = mk.size();
  return {n, [mk, churn, n](double t, const State& u) {
            const double free = 1.0 - std::accumulate(u.begin(), u.end(), 0.0);
            State d = churn_flows(churn, t, u);
            for (std::size_t i = 0; i < n; ++i) d[i] += free * (mk.m[i] + mk.r[i] * u[i]);
            return d;
          }};
}

/// Full nonlinear market with optional churn, integrated by RK4. Violations of
/// the structural invariants (nonnegative shares, total at most one and never
/// decreasing, churn summing to zero) abort with integration_invariant.
inline Trajectory competitive_path_numeric(const BassCompetition& mk, const ChurnSpec& churn,
                                           std::span<const double> grid, double max_step = 0.0) {
  mk.validate();
  validate_churn(churn);
  const std::size_t n = mk.size();
  require(churn_size(churn) == 0 || churn_size(churn) == n, ErrorCode::parameter,
          "churn spec size does not match supplier count");
  require(grid.size() >= 2, ErrorCode::parameter, "grid needs at least two points");
  if (max_step <= 0.0) max_step = (grid.back() - grid.front()) / 1e4;
  const auto field = competition_field(mk, churn);
  auto path = numerics::integrate_on_grid(field, mk.u0, grid, max_step, share_labels(n));

  double previous_total = -1.0;
  for (std::size_t k = 0; k < path.size(); ++k) {
    const auto& u = path.states()[k];
    double total = 0.0;
    for (double v : u) {
      if (v < -1e-9) throw Error(ErrorCode::integration_invariant, "a market share became negative");
      total += v;
    }
    if (total > 1.0 + 1e-9) throw Error(ErrorCode::integration_invariant, "shares sum above one");
    if (total < previous_total - 1e-12) {
      throw Error(ErrorCode::integration_invariant, "total market share decreased");
    }
    previous_total = total;
    const auto c = churn_flows(churn, path.times()[k], u);
    double net = 0.0;
    double scale = 0.0;
    for (double v : c) {
      net += v;
      scale += std::abs(v);
    }
    if (std::abs(net) > 1e-12 * std::max(1.0, scale)) {
      throw Error(ErrorCode::integration_invariant, "churn flows do not sum to zero");
    }
  }
  return path;
}

/// Innovators with spontaneous churn starting from an empty market:
/// u(t) = x - exp(-Q t) x with Q x = m.
inline Trajectory spontaneous_path(std::span<const double> m, const ChurnMatrix& c,
                                   std::span<const double> grid) {
  const std::size_t n = m.size();
  require(n >= 1 && c.size() == n, ErrorCode::parameter, "m and churn matrix sizes differ");
  for (double v : m) require(std::isfinite(v) && v >= 0.0, ErrorCode::parameter, "m_i must be >= 0");
  const auto q = innovator_churn_matrix(m, c);
  std::vector<double> x;
  try {
    x = numerics::linear_solve(q, m);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::singular_matrix) throw;
    BassCompetition mk{std::vector<double>(m.begin(), m.end()), std::vector<double>(n, 0.0),
                       std::vector<double>(n, 0.0)};
    return competitive_path_numeric(mk, c, grid);
  }
  SquareMatrix minus_q = q;
  for (double& v : minus_q.data()) v = -v;
  Trajectory out(share_labels(n));
  for (double t : grid) {
    const auto decay = numerics::mat_exp_apply(minus_q, t, x);
    State u(n);
    for (std::size_t i = 0; i < n; ++i) u[i] = x[i] - decay[i];
    out.append(t, std::move(u));
  }
  return out;
}

/// Two-supplier closed form (eigenvalues m1 + m2 and a12 + a21). Requires the
/// two eigenvalues to differ and a12 + a21 > 0.
inline std::pair<double, double> two_supplier_shares(double m1, double m2, double a12, double a21,
                                                     double t) {
  const double s = m1 + m2;
  const double a = a12 + a21;
  require(a > 0.0, ErrorCode::parameter, "two-supplier closed form needs a12 + a21 > 0");
  require(std::abs(s - a) > 1e-9 * (s + a), ErrorCode::parameter,
          "two-supplier closed form needs m1 + m2 != a12 + a21");
  const double slow = (a21 * m2 - a12 * m1) / (a * (s - a));
  const double ea = std::exp(-a * t);
  const double es = std::exp(-s * t);
  const double u1 = a21 / a - slow * ea - (m1 - a21) / (s - a) * es;
  const double u2 = a12 / a + slow * ea - (m2 - a12) / (s - a) * es;
  return {u1, u2};
}

// Peak time of supplier 2 when supplier 1 loses nobody (a12 = 0).
inline double supplier2_peak_time(double m1, double m2, double a21) {
  const double s = m1 + m2;
  require(a21 > 0.0 && s > 0.0, ErrorCode::parameter, "peak time needs a21 > 0 and m1 + m2 > 0");
  if (std::abs(s - a21) <= 1e-12 * s) return 1.0 / s;
  return (std::log(s) - std::log(a21)) / (s - a21);
}

// ---------------------------------------------------------------------------
// Periodic churn between two suppliers on a fully developed market

/// u1(t) with its decomposition into the constant mean share, a periodic part
/// and a part decaying like exp(-(a12 + a21) t). Channels: u1, u2, mean,
/// periodic, decaying.
inline Trajectory periodic_two_supplier_path(const PeriodicChurnSpec& spec, double u1_0,
                                             std::span<const double> grid) {
  spec.validate();
  require(spec.a0.size() == 2, ErrorCode::parameter, "periodic two-supplier path needs n = 2");
  require(u1_0 >= 0.0 && u1_0 <= 1.0, ErrorCode::parameter, "u1_0 must lie in [0, 1]");
  require(!grid.empty() && grid.front() >= 0.0, ErrorCode::parameter, "grid must start at t >= 0");
  const double a12 = spec.a0(0, 1);
  const double a21 = spec.a0(1, 0);
  const double a0 = a12 + a21;
  require(a0 > 0.0, ErrorCode::parameter, "baseline churn a12 + a21 must be > 0");
  const double mean = a21 / a0;

  auto alpha = [&](double x) {
    return std::expm1(spec.epsilon_integral(0, 1, x) + spec.epsilon_integral(1, 0, x));
  };
  auto source = [&](double x) {
    const double al = alpha(x);
    return a21 * al + spec.epsilon(1, 0, x) * (1.0 + al);
  };

  Trajectory out({"u1", "u2", "mean", "periodic", "decaying"});
  // sigma(t) = integral_0^t source(x) exp(-a0 (t - x)) dx, advanced interval by interval.
  // The source is evaluated at absolute times, so its noise scales with the rates, not its value.
  double rate_scale = a0;
  for (const auto& term : spec.terms) rate_scale += std::abs(term.wave.amplitude);
  const double abs_floor = 1e-14 * rate_scale;
  double sigma = 0.0;
  double t_prev = 0.0;
  for (double t : grid) {
    if (t > t_prev) {
      const double t_hi = t;
      double step = 1.0 / a0;
      for (const auto& term : spec.terms) step = std::min(step, 0.25 * term.wave.period);
      double t_cur = t_prev;
      while (t_cur < t_hi) {
        const double t_next = std::min(t_hi, t_cur + step);
        const double piece = numerics::quadrature(
            [&](double x) { return source(x) * std::exp(-a0 * (t_next - x)); }, t_cur, t_next, 1e-12,
            abs_floor * (t_next - t_cur));
        sigma = sigma * std::exp(-a0 * (t_next - t_cur)) + piece;
        t_cur = t_next;
      }
      t_prev = t_hi;
    }
    const double al = alpha(t);
    const double periodic = (sigma - al * mean) / (1.0 + al);
    const double decaying = (u1_0 - mean) / (1.0 + al) * std::exp(-a0 * t);
    const double u1 = mean + periodic + decaying;
    out.append(t, {u1, 1.0 - u1, mean, periodic, decaying});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stimulated churn

enum class StimulatedOutcome { winner_take_all, shared };

inline std::string_view to_string(StimulatedOutcome o) {
  return o == StimulatedOutcome::winner_take_all ? "winner_take_all" : "shared";
}

struct StimulatedResult {
  std::vector<double> u;
  StimulatedOutcome outcome = StimulatedOutcome::shared;
};

// Balance C_1 on u1 + u2 = 1 for two suppliers.
inline double two_supplier_balance(const StimulatedChurnSpec& s, double u1) {
  const double u2 = 1.0 - u1;
  return s.churn(1, 0) * u2 * s.popularity(0, u1) - s.churn(0, 1) * u1 * s.popularity(1, u2);
}

namespace detail {

// Simulates pure churn on the simplex long enough to settle.
inline std::vector<double> settle_on_simplex(const StimulatedChurnSpec& s, std::vector<double> u,
                                             double horizon) {
  const std::size_t n = u.size();
  numerics::VectorField field{n, [spec = ChurnSpec(s)](double t, const State& y) {
                                return churn_flows(spec, t, y);
                              }};
  const auto path = numerics::integrate_ivp(field, std::move(u), 0.0, horizon, horizon / 2e4);
  return path.states().back();
}

inline double stimulated_scale(const StimulatedChurnSpec& s) {
  double scale = 0.0;
  const std::size_t n = s.churn.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) scale = std::max(scale, s.churn(i, j) * (s.b[j] + s.eps[j]));
  return scale;
}

}  // namespace detail

/// Where stimulated churn leaves a fully developed market. Without any
/// spontaneous component the vertex reached from `start` (uniform by default)
/// is found by simulation; never_reached when the shares keep circling.
inline StimulatedResult stimulated_fixed_point(const StimulatedChurnSpec& s,
                                               std::vector<double> start = {}) {
  s.validate();
  const std::size_t n = s.churn.size();
  if (start.empty()) start.assign(n, 1.0 / static_cast<double>(n));
  require(start.size() == n, ErrorCode::parameter, "start needs one share per supplier");
  const double scale = detail::stimulated_scale(s);
  if (!(scale > 0.0)) throw Error(ErrorCode::inconsistent_spec, "no churn flows at all");

  const bool spontaneous = std::any_of(s.eps.begin(), s.eps.end(), [](double e) { return e > 0.0; });
  if (!spontaneous) {
    auto u = detail::settle_on_simplex(s, start, 400.0 / scale);
    const auto best = static_cast<std::size_t>(std::max_element(u.begin(), u.end()) - u.begin());
    if (u[best] < 1.0 - 1e-6) {
      // Cyclic or tied pairwise ordering: the shares circle instead of settling.
      throw Error(ErrorCode::never_reached, "stimulated churn does not settle on a single supplier");
    }
    std::vector<double> vertex(n, 0.0);
    vertex[best] = 1.0;
    return {vertex, StimulatedOutcome::winner_take_all};
  }

  if (n == 2) {
    // Delta u^2 - (Delta - alpha - beta) u - alpha = 0 from C_1 = 0.
    const double delta = s.b[0] * s.churn(1, 0) - s.b[1] * s.churn(0, 1);
    const double alpha = s.eps[0] * s.churn(1, 0);
    const double beta = s.eps[1] * s.churn(0, 1);
    double u1 = 0.0;
    bool found = false;
    if (delta == 0.0) {
      if (alpha + beta > 0.0) {
        u1 = alpha / (alpha + beta);
        found = u1 > 0.0;
      }
    } else {
      const double bq = -(delta - alpha - beta);
      const double disc = bq * bq + 4.0 * delta * alpha;
      if (disc >= 0.0) {
        const double q = -0.5 * (bq + std::copysign(std::sqrt(disc), bq));
        std::vector<double> roots;
        if (q != 0.0) roots = {q / delta, -alpha / q};
        else roots = {0.0};
        for (double r : roots) {
          if (r > 0.0 && r <= 1.0 + 1e-12 && (!found || r > u1)) {
            u1 = std::min(r, 1.0);
            found = true;
          }
        }
      }
    }
    if (!found && s.eps[0] == 0.0) return {{0.0, 1.0}, StimulatedOutcome::winner_take_all};
    if (!found) throw Error(ErrorCode::inconsistent_spec, "no admissible two-supplier share");
    // One safeguarded Newton polish on the balance function itself.
    if (u1 < 1.0) {
      const double lo = std::max(0.0, u1 - 1e-9);
      const double hi = std::min(1.0, u1 + 1e-9);
      const double flo = two_supplier_balance(s, lo);
      const double fhi = two_supplier_balance(s, hi);
      if (std::signbit(flo) != std::signbit(fhi) || flo == 0.0 || fhi == 0.0) {
        u1 = numerics::solve_root([&](double x) { return two_supplier_balance(s, x); }, lo, hi, 1e-17);
      }
    }
    const auto outcome = u1 >= 1.0 ? StimulatedOutcome::winner_take_all : StimulatedOutcome::shared;
    return {{u1, 1.0 - u1}, outcome};
  }

  // n > 2: settle by simulation, then Newton on the balance rows plus sum = 1.
  auto u = detail::settle_on_simplex(s, start, 200.0 / scale);
  const ChurnSpec spec(s);
  auto residual = [&](const std::vector<double>& x) {
    auto c = churn_flows(spec, 0.0, x);
    c[n - 1] = std::accumulate(x.begin(), x.end(), 0.0) - 1.0;
    return c;
  };
  for (int iter = 0; iter < 50; ++iter) {
    const auto r = residual(u);
    double norm = 0.0;
    for (double v : r) norm = std::max(norm, std::abs(v));
    if (norm <= 1e-14 * std::max(1.0, scale)) break;
    SquareMatrix jac(n);
    for (std::size_t j = 0; j < n; ++j) {
      auto up = u;
      auto dn = u;
      const double h = 1e-7;
      up[j] += h;
      dn[j] -= h;
      const auto rp = residual(up);
      const auto rm = residual(dn);
      for (std::size_t i = 0; i < n; ++i) jac(i, j) = (rp[i] - rm[i]) / (2.0 * h);
    }
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) neg[i] = -r[i];
    std::vector<double> step;
    try {
      step = numerics::linear_solve(jac, neg);
    } catch (const Error&) {
      break;
    }
    for (std::size_t i = 0; i < n; ++i) u[i] += step[i];
  }
  const auto r = residual(u);
  double norm = 0.0;
  for (double v : r) norm = std::max(norm, std::abs(v));
  const bool admissible = std::all_of(u.begin(), u.end(), [](double v) { return v >= -1e-12; });
  if (!admissible || norm > 1e-9 * std::max(1.0, scale)) {
    throw Error(ErrorCode::inconsistent_spec, "no admissible balance point found");
  }
  for (double& v : u) v = std::max(v, 0.0);
  const bool vertex = std::count_if(u.begin(), u.end(), [](double v) { return v > 1e-9; }) == 1;
  return {u, vertex ? StimulatedOutcome::winner_take_all : StimulatedOutcome::shared};
}

}  // namespace marketdyn::competition
