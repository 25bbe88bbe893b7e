#pragma once

// Numerical kernel shared by every market model: fixed-step RK4, adaptive
// Simpson quadrature, safeguarded Newton root finding, the error function,
// small dense linear algebra and the action of a matrix exponential.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "marketdyn/error.hpp"

namespace marketdyn::numerics {

using State = std::vector<double>;

struct VectorField {
  std::size_t dim = 0;
  std::function<State(double, const State&)> eval;
};

/// Time series of model state. Channels are the components of each state
/// vector, addressed by label.
class Trajectory {
 public:
  Trajectory() = default;
  explicit Trajectory(std::vector<std::string> labels) : labels_(std::move(labels)) {}

  void append(double t, State state) {
    require(std::isfinite(t), ErrorCode::domain, "trajectory time must be finite");
    if (!times_.empty()) {
      require(t > times_.back(), ErrorCode::domain, "trajectory times must be strictly increasing");
    }
    if (labels_.empty() && times_.empty()) {
      for (std::size_t i = 0; i < state.size(); ++i) labels_.push_back("y" + std::to_string(i));
    }
    require(state.size() == labels_.size(), ErrorCode::domain,
            "state dimension does not match channel count");
    times_.push_back(t);
    states_.push_back(std::move(state));
  }

  // Appends a derived channel; `values` must have one entry per time point.
  void add_channel(const std::string& label, std::span<const double> values) {
    require(values.size() == times_.size(), ErrorCode::domain, "channel length mismatch");
    labels_.push_back(label);
    for (std::size_t k = 0; k < values.size(); ++k) states_[k].push_back(values[k]);
  }

  std::size_t size() const noexcept { return times_.size(); }
  std::size_t dim() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return times_.empty(); }

  const std::vector<double>& times() const noexcept { return times_; }
  const std::vector<State>& states() const noexcept { return states_; }
  const std::vector<std::string>& labels() const noexcept { return labels_; }

  std::size_t index_of(const std::string& label) const {
    auto it = std::find(labels_.begin(), labels_.end(), label);
    require(it != labels_.end(), ErrorCode::domain, "unknown channel '" + label + "'");
    return static_cast<std::size_t>(it - labels_.begin());
  }
  bool has_channel(const std::string& label) const {
    return std::find(labels_.begin(), labels_.end(), label) != labels_.end();
  }

  std::vector<double> channel(const std::string& label) const {
    const std::size_t c = index_of(label);
    std::vector<double> out;
    out.reserve(states_.size());
    for (const auto& s : states_) out.push_back(s[c]);
    return out;
  }

  double at(std::size_t k, const std::string& label) const { return states_.at(k)[index_of(label)]; }

 private:
  std::vector<double> times_;
  std::vector<State> states_;
  std::vector<std::string> labels_;
};

inline std::vector<double> uniform_grid(double t0, double t1, std::size_t samples) {
  require(samples >= 2, ErrorCode::parameter, "grid needs at least two samples");
  require(t1 > t0, ErrorCode::parameter, "grid end must exceed grid start");
  std::vector<double> grid(samples);
  const double h = (t1 - t0) / static_cast<double>(samples - 1);
  for (std::size_t k = 0; k < samples; ++k) grid[k] = t0 + h * static_cast<double>(k);
  grid.back() = t1;
  return grid;
}

// ---------------------------------------------------------------------------
// Initial-value problems

namespace detail {

inline State evaluate(const VectorField& field, double t, const State& y) {
  State d = field.eval(t, y);
  require(d.size() == field.dim, ErrorCode::domain, "vector field returned wrong dimension");
  return d;
}

inline bool all_finite(const State& y) {
  return std::all_of(y.begin(), y.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace detail

inline State rk4_step(const VectorField& field, double t, const State& y, double h) {
  const std::size_t n = y.size();
  State tmp(n);
  const State k1 = detail::evaluate(field, t, y);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
  const State k2 = detail::evaluate(field, t + 0.5 * h, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
  const State k3 = detail::evaluate(field, t + 0.5 * h, tmp);
  for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
  const State k4 = detail::evaluate(field, t + h, tmp);
  State out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  }
  return out;
}

/// Classical fixed-step RK4 from t0 to t1. Samples every `step`; the final
/// sample is clamped to t1.
inline Trajectory integrate_ivp(const VectorField& field, State y0, double t0, double t1,
                                double step, std::vector<std::string> labels = {}) {
  require(t1 > t0, ErrorCode::parameter, "integration interval must have t1 > t0");
  require(step > 0.0 && std::isfinite(step), ErrorCode::parameter, "step must be positive");
  require(y0.size() == field.dim, ErrorCode::parameter, "initial state has wrong dimension");
  require(detail::all_finite(y0), ErrorCode::integration_diverged, "initial state not finite");

  Trajectory out(std::move(labels));
  out.append(t0, y0);
  State y = std::move(y0);
  double t = t0;
  for (std::size_t k = 1; t < t1; ++k) {
    double t_next = t0 + step * static_cast<double>(k);
    if (t_next > t1 || t1 - t_next < 1e-9 * step) t_next = t1;
    State next = rk4_step(field, t, y, t_next - t);
    if (!detail::all_finite(next)) {
      throw Error(ErrorCode::integration_diverged,
                  "non-finite state after t = " + std::to_string(t), t);
    }
    y = std::move(next);
    t = t_next;
    out.append(t, y);
  }
  return out;
}

/// RK4 sampled on an arbitrary increasing grid; each grid interval is split
/// into equal substeps no longer than `max_step`.
inline Trajectory integrate_on_grid(const VectorField& field, State y0, std::span<const double> grid,
                                    double max_step, std::vector<std::string> labels = {}) {
  require(!grid.empty(), ErrorCode::parameter, "empty grid");
  require(max_step > 0.0, ErrorCode::parameter, "max_step must be positive");
  require(y0.size() == field.dim, ErrorCode::parameter, "initial state has wrong dimension");
  Trajectory out(std::move(labels));
  out.append(grid[0], y0);
  State y = std::move(y0);
  for (std::size_t k = 1; k < grid.size(); ++k) {
    const double span = grid[k] - grid[k - 1];
    require(span > 0.0, ErrorCode::parameter, "grid must be strictly increasing");
    const auto substeps = static_cast<std::size_t>(std::ceil(span / max_step - 1e-12));
    const double h = span / static_cast<double>(std::max<std::size_t>(substeps, 1));
    double t = grid[k - 1];
    for (std::size_t s = 0; s < std::max<std::size_t>(substeps, 1); ++s) {
      y = rk4_step(field, t, y, h);
      t = grid[k - 1] + h * static_cast<double>(s + 1);
    }
    if (!detail::all_finite(y)) {
      throw Error(ErrorCode::integration_diverged,
                  "non-finite state after t = " + std::to_string(grid[k - 1]), grid[k - 1]);
    }
    out.append(grid[k], y);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature

namespace detail {

struct SimpsonBudget {
  long evaluations = 0;
  long limit = 20'000'000;
  bool exhausted = false;
};

template <class F>
double checked(F& g, double x, SimpsonBudget& budget) {
  ++budget.evaluations;
  const double v = g(x);
  if (!std::isfinite(v)) {
    throw Error(ErrorCode::domain, "integrand not finite at x = " + std::to_string(x));
  }
  return v;
}

template <class F>
double simpson_recurse(F& g, double a, double b, double fa, double fm, double fb, double whole,
                       double eps, int depth, SimpsonBudget& budget) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = checked(g, lm, budget);
  const double frm = checked(g, rm, budget);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  if (depth <= 0 || budget.evaluations > budget.limit || !(lm > a && rm < b)) {
    budget.exhausted = true;
    return left + right + delta / 15.0;
  }
  return simpson_recurse(g, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1, budget) +
         simpson_recurse(g, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1, budget);
}

}  // namespace detail

/// Adaptive Simpson estimate of the integral of g over [a, b]. The error target
/// is `tol` relative to the integral of |g| (so integrals that cancel to zero
/// still terminate), floored at the rounding level of the sampled values and
/// at `abs_tol`.
template <class F>
double quadrature(F&& g, double a, double b, double tol = 1e-10, double abs_tol = 0.0) {
  require(std::isfinite(a) && std::isfinite(b), ErrorCode::parameter, "quadrature limits must be finite");
  require(a <= b, ErrorCode::parameter, "quadrature requires a <= b");
  require(tol > 0.0, ErrorCode::parameter, "quadrature tolerance must be positive");
  if (a == b) return 0.0;

  constexpr int panels = 8;
  detail::SimpsonBudget budget;
  std::array<double, 2 * panels + 1> x{};
  std::array<double, 2 * panels + 1> f{};
  const double h = (b - a) / (2.0 * panels);
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = (i + 1 == x.size()) ? b : a + h * static_cast<double>(i);
    f[i] = detail::checked(g, x[i], budget);
  }
  double scale = 0.0;
  for (int p = 0; p < panels; ++p) {
    const std::size_t i = 2 * static_cast<std::size_t>(p);
    scale += (x[i + 2] - x[i]) / 6.0 *
             (std::abs(f[i]) + 4.0 * std::abs(f[i + 1]) + std::abs(f[i + 2]));
  }
  if (scale == 0.0) return 0.0;
  double peak = 0.0;
  double variation = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    peak = std::max(peak, std::abs(f[i]));
    if (i) variation += std::abs(f[i] - f[i - 1]);
  }
  // Below the rounding level of the integrand values, and of the abscissae
  // themselves, no refinement helps.
  const double unit = 16.0 * std::numeric_limits<double>::epsilon();
  const double noise = unit * (peak * (b - a) + variation * std::max(std::abs(a), std::abs(b)));
  const double eps = std::max({tol * scale, noise, abs_tol}) / panels;

  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const std::size_t i = 2 * static_cast<std::size_t>(p);
    const double whole = (x[i + 2] - x[i]) / 6.0 * (f[i] + 4.0 * f[i + 1] + f[i + 2]);
    total += detail::simpson_recurse(g, x[i], x[i + 2], f[i], f[i + 1], f[i + 2], whole, eps, 50,
                                     budget);
  }
  if (budget.exhausted) {
    throw Error(ErrorCode::accuracy_not_reached,
                "adaptive quadrature hit its subdivision limit", total);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Root finding

/// Safeguarded Newton iteration on a sign-changing bracket. The derivative is
/// a centered difference; any Newton step that leaves the bracket, or does not
/// shrink it fast enough, is replaced by bisection.
template <class F>
double solve_root(F&& g, double lo, double hi, double tol = 1e-12) {
  require(std::isfinite(lo) && std::isfinite(hi) && lo <= hi, ErrorCode::bracket_invalid,
          "root bracket must be finite with lo <= hi");
  const double f_lo = g(lo);
  const double f_hi = g(hi);
  require(!std::isnan(f_lo) && !std::isnan(f_hi), ErrorCode::bracket_invalid,
          "function is NaN at a bracket end");
  if (f_lo == 0.0) return lo;
  if (f_hi == 0.0) return hi;
  require(std::signbit(f_lo) != std::signbit(f_hi), ErrorCode::bracket_invalid,
          "no sign change on [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");

  // neg/pos track the bracket ends where g < 0 and g > 0.
  double neg = f_lo < 0.0 ? lo : hi;
  double pos = f_lo < 0.0 ? hi : lo;

  auto derivative = [&](double x) {
    const double h = std::max(1e-7, 1e-7 * std::abs(x));
    const double xp = std::min(x + h, hi);
    const double xm = std::max(x - h, lo);
    if (!(xp > xm)) return std::numeric_limits<double>::quiet_NaN();
    return (g(xp) - g(xm)) / (xp - xm);
  };

  double x = 0.5 * (lo + hi);
  double fx = g(x);
  double step_old = hi - lo;
  double step = step_old;
  for (int iter = 0; iter < 400; ++iter) {
    if (fx == 0.0 || std::isnan(fx)) return x;
    (fx < 0.0 ? neg : pos) = x;
    const double a = std::min(neg, pos);
    const double b = std::max(neg, pos);
    if (b - a <= tol) return x;
    const double mid = 0.5 * (a + b);
    if (!(mid > a && mid < b)) return x;

    const double d = derivative(x);
    double x_new = std::numeric_limits<double>::quiet_NaN();
    if (std::isfinite(d) && d != 0.0) x_new = x - fx / d;
    const bool newton_ok = x_new > a && x_new < b && std::abs(2.0 * fx) <= std::abs(step_old * d);
    step_old = step;
    if (newton_ok) {
      step = x_new - x;
    } else {
      x_new = mid;
      step = x_new - x;
    }
    if (newton_ok && std::abs(step) <= 0.5 * tol) return x_new;
    x = x_new;
    fx = g(x);
  }
  return x;
}

// ---------------------------------------------------------------------------
// Error function

inline double erf(double x) { return std::erf(x); }

// ---------------------------------------------------------------------------
// Dense linear algebra

class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n) : n_(n), data_(n * n, 0.0) {
    require(n >= 1, ErrorCode::parameter, "matrix dimension must be at least 1");
  }
  SquareMatrix(std::size_t n, std::vector<double> row_major) : n_(n), data_(std::move(row_major)) {
    require(n >= 1, ErrorCode::parameter, "matrix dimension must be at least 1");
    require(data_.size() == n * n, ErrorCode::parameter, "matrix data has wrong size");
    require(std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); }),
            ErrorCode::parameter, "matrix entries must be finite");
  }

  static SquareMatrix identity(std::size_t n) {
    SquareMatrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t size() const noexcept { return n_; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }
  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  double norm_one() const {
    double best = 0.0;
    for (std::size_t j = 0; j < n_; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) s += std::abs((*this)(i, j));
      best = std::max(best, s);
    }
    return best;
  }
  double norm_inf() const {
    double best = 0.0;
    for (std::size_t i = 0; i < n_; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < n_; ++j) s += std::abs((*this)(i, j));
      best = std::max(best, s);
    }
    return best;
  }

  friend bool operator==(const SquareMatrix&, const SquareMatrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<double> data_;
};

inline SquareMatrix operator*(const SquareMatrix& a, const SquareMatrix& b) {
  const std::size_t n = a.size();
  SquareMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline std::vector<double> operator*(const SquareMatrix& a, std::span<const double> v) {
  require(v.size() == a.size(), ErrorCode::parameter, "matrix-vector size mismatch");
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) out[i] += a(i, j) * v[j];
  return out;
}

namespace detail {

struct LuFactors {
  SquareMatrix lu;
  std::vector<std::size_t> perm;
  double sign = 1.0;
  double min_pivot = 0.0;
};

// Partial-pivot LU, PA = LU with unit lower L stored below the diagonal.
inline LuFactors lu_factor(const SquareMatrix& a) {
  const std::size_t n = a.size();
  LuFactors f{a, std::vector<std::size_t>(n), 1.0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < n; ++i) f.perm[i] = i;
  SquareMatrix& m = f.lu;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(m(r, col)) > std::abs(m(piv, col))) piv = r;
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(piv, j), m(col, j));
      std::swap(f.perm[piv], f.perm[col]);
      f.sign = -f.sign;
    }
    const double p = m(col, col);
    f.min_pivot = std::min(f.min_pivot, std::abs(p));
    if (p == 0.0) continue;
    for (std::size_t r = col + 1; r < n; ++r) {
      const double l = m(r, col) / p;
      m(r, col) = l;
      if (l == 0.0) continue;
      for (std::size_t j = col + 1; j < n; ++j) m(r, j) -= l * m(col, j);
    }
  }
  return f;
}

}  // namespace detail

inline double det(const SquareMatrix& a) {
  const auto f = detail::lu_factor(a);
  double d = f.sign;
  for (std::size_t i = 0; i < a.size(); ++i) d *= f.lu(i, i);
  return d;
}

/// Signed minor: (-1)^(i+j) times the determinant of A with row i and column j removed.
inline double cofactor(const SquareMatrix& a, std::size_t i, std::size_t j) {
  const std::size_t n = a.size();
  require(i < n && j < n, ErrorCode::parameter, "cofactor index out of range");
  if (n == 1) return 1.0;
  SquareMatrix minor(n - 1);
  for (std::size_t r = 0, mr = 0; r < n; ++r) {
    if (r == i) continue;
    for (std::size_t c = 0, mc = 0; c < n; ++c) {
      if (c == j) continue;
      minor(mr, mc++) = a(r, c);
    }
    ++mr;
  }
  const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
  return sign * det(minor);
}

inline std::vector<double> linear_solve(const SquareMatrix& a, std::span<const double> b) {
  const std::size_t n = a.size();
  require(b.size() == n, ErrorCode::parameter, "right-hand side has wrong size");
  const auto f = detail::lu_factor(a);
  const double threshold = 1e-12 * std::max(a.norm_inf(), std::numeric_limits<double>::min());
  if (!(f.min_pivot > threshold)) throw Error(ErrorCode::singular_matrix, "matrix is singular");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[f.perm[i]];
    for (std::size_t j = 0; j < i; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s;
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= f.lu(i, j) * x[j];
    x[i] = s / f.lu(i, i);
  }
  return x;
}

/// exp(M t) v by scaling and squaring of a truncated Taylor series.
inline std::vector<double> mat_exp_apply(const SquareMatrix& m, double t, std::span<const double> v) {
  const std::size_t n = m.size();
  require(v.size() == n, ErrorCode::parameter, "vector has wrong size");
  require(std::isfinite(t), ErrorCode::parameter, "time must be finite");
  SquareMatrix a = m;
  for (double& x : a.data()) x *= t;
  const double norm = a.norm_one();
  require(std::isfinite(norm), ErrorCode::parameter, "matrix-time product not finite");
  if (norm == 0.0) return {v.begin(), v.end()};

  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const double scale = std::ldexp(1.0, -squarings);
  for (double& x : a.data()) x *= scale;

  SquareMatrix result = SquareMatrix::identity(n);
  SquareMatrix term = SquareMatrix::identity(n);
  for (int k = 1; k <= 30; ++k) {
    term = term * a;
    for (double& x : term.data()) x /= k;
    for (std::size_t i = 0; i < n * n; ++i)
      result.data()[i] += term.data()[i];
    if (term.norm_one() <= 1e-18 * result.norm_one()) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result * v;
}

// ---------------------------------------------------------------------------
// Monotone passage times

/// A scalar state x that moves monotonically from x0 toward x_limit. The
/// caller supplies elapsed(x_a, x_b), the travel time between two states
/// (typically a quadrature of 1/speed). Passage times are tabulated on nodes
/// that crowd toward both ends (log spacing) and inverted by root finding
/// inside the bracketing node interval.
class PassageTimeTable {
 public:
  using Elapsed = std::function<double(double, double)>;

  PassageTimeTable(Elapsed elapsed, double x0, double x_limit, std::size_t nodes = 512,
                   double closest = 1e-12)
      : elapsed_(std::move(elapsed)), x0_(x0), x_limit_(x_limit) {
    require(x_limit > x0, ErrorCode::parameter, "passage table needs x_limit > x0");
    require(nodes >= 8, ErrorCode::parameter, "passage table needs at least 8 nodes");
    require(closest > 0.0 && closest < 0.5, ErrorCode::parameter, "closest must lie in (0, 0.5)");
    const double span = x_limit - x0;
    const std::size_t half = nodes / 2;
    const double lo = std::log10(closest);
    const double mid = std::log10(0.5);
    xs_.push_back(x0);
    for (std::size_t k = 0; k < half; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(half - 1);
      xs_.push_back(x0 + span * std::pow(10.0, lo + frac * (mid - lo)));
    }
    for (std::size_t k = 1; k < nodes - half; ++k) {
      const double frac = static_cast<double>(k) / static_cast<double>(nodes - half - 1);
      xs_.push_back(x_limit - span * std::pow(10.0, mid + frac * (lo - mid)));
    }
    std::sort(xs_.begin(), xs_.end());
    xs_.erase(std::unique(xs_.begin(), xs_.end()), xs_.end());
    while (xs_.size() > 1 && !(xs_.back() < x_limit)) xs_.pop_back();
    ts_.assign(xs_.size(), 0.0);
    for (std::size_t k = 1; k < xs_.size(); ++k) ts_[k] = ts_[k - 1] + elapsed_(xs_[k - 1], xs_[k]);
  }

  static PassageTimeTable from_speed(std::function<double(double)> speed, double x0,
                                     double x_limit, std::size_t nodes = 512,
                                     double closest = 1e-12, double tol = 1e-12) {
    auto elapsed = [speed = std::move(speed), tol](double a, double b) {
      if (b <= a) return 0.0;
      return quadrature([&](double x) { return 1.0 / speed(x); }, a, b, tol);
    };
    return PassageTimeTable(std::move(elapsed), x0, x_limit, nodes, closest);
  }

  // Speed given as a function of the gap x_limit - x, for approaches where x
  // itself cannot resolve the remaining distance.
  static PassageTimeTable from_gap_speed(std::function<double(double)> speed_of_gap, double x0,
                                         double x_limit, std::size_t nodes = 512,
                                         double closest = 1e-12, double tol = 1e-12) {
    auto elapsed = [speed = std::move(speed_of_gap), x_limit, tol](double a, double b) {
      if (b <= a) return 0.0;
      return quadrature([&](double g) { return 1.0 / speed(g); }, x_limit - b, x_limit - a, tol);
    };
    return PassageTimeTable(std::move(elapsed), x0, x_limit, nodes, closest);
  }

  double x0() const noexcept { return x0_; }
  double x_limit() const noexcept { return x_limit_; }
  double last_state() const noexcept { return xs_.back(); }
  double last_time() const noexcept { return ts_.back(); }

  double time_to(double x) const {
    require(x >= x0_ && x < x_limit_, ErrorCode::domain, "state outside the reachable range");
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    const std::size_t k = static_cast<std::size_t>(it - xs_.begin()) - 1;
    return ts_[k] + (x > xs_[k] ? elapsed_(xs_[k], x) : 0.0);
  }

  // Beyond the last tabulated node the last node state is returned.
  double state_at(double t) const {
    require(t >= 0.0, ErrorCode::domain, "passage time must be nonnegative");
    if (t == 0.0) return x0_;
    if (t >= ts_.back()) return xs_.back();
    const auto it = std::upper_bound(ts_.begin(), ts_.end(), t);
    const std::size_t k = static_cast<std::size_t>(it - ts_.begin()) - 1;
    const double xa = xs_[k];
    const double xb = xs_[k + 1];
    const double base = ts_[k];
    const double width_tol = std::max(1e-15 * (x_limit_ - x0_), 4e-16 * std::abs(xb));
    return solve_root([&](double x) { return base + (x > xa ? elapsed_(xa, x) : 0.0) - t; }, xa,
                      xb, width_tol);
  }

 private:
  Elapsed elapsed_;
  double x0_;
  double x_limit_;
  std::vector<double> xs_;
  std::vector<double> ts_;
};

}  // namespace marketdyn::numerics
