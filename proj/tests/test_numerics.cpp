#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "marketdyn/numerics.hpp"
#include "oracles.hpp"

using namespace marketdyn;
using namespace marketdyn::numerics;

namespace {

VectorField decay(double k) {
  return {1, [k](double, const State& y) { return State{-k * y[0]}; }};
}

template <class F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::validation;
}

}  // namespace

TEST(Trajectory, RejectsNonIncreasingTimes) {
  Trajectory tr({"x"});
  tr.append(0.0, {1.0});
  EXPECT_THROW(tr.append(0.0, {1.0}), Error);
  EXPECT_THROW(tr.append(1.0, {1.0, 2.0}), Error);
}

TEST(Trajectory, ChannelLookup) {
  Trajectory tr({"a", "b"});
  tr.append(0.0, {1.0, 2.0});
  tr.append(1.0, {3.0, 4.0});
  EXPECT_EQ(tr.channel("b"), (std::vector<double>{2.0, 4.0}));
  EXPECT_TRUE(tr.has_channel("a"));
  EXPECT_FALSE(tr.has_channel("c"));
  EXPECT_DOUBLE_EQ(tr.at(1, "a"), 3.0);
}

TEST(Integrator, MatchesExponential) {
  const auto tr = integrate_ivp(decay(1.3), {2.0}, 0.0, 3.0, 1e-3);
  EXPECT_DOUBLE_EQ(tr.times().back(), 3.0);
  EXPECT_NEAR(tr.states().back()[0], 2.0 * std::exp(-3.9), 1e-12);
}

TEST(Integrator, FourthOrderConvergence) {
  auto err = [](double h) {
    const auto tr = integrate_ivp(decay(2.0), {1.0}, 0.0, 1.0, h);
    return std::abs(tr.states().back()[0] - std::exp(-2.0));
  };
  const double ratio = err(0.02) / err(0.01);
  EXPECT_NEAR(ratio, 16.0, 1.0);
}

TEST(Integrator, ClampsFinalStep) {
  const auto tr = integrate_ivp(decay(1.0), {1.0}, 0.0, 1.0, 0.3);
  EXPECT_DOUBLE_EQ(tr.times().back(), 1.0);
  EXPECT_EQ(tr.size(), 5u);
}

TEST(Integrator, DivergenceIsReported) {
  VectorField blowup{1, [](double, const State& y) { return State{y[0] * y[0]}; }};
  EXPECT_EQ(code_of([&] { integrate_ivp(blowup, {1.0}, 0.0, 2.0, 1e-3); }), ErrorCode::integration_diverged);
}

TEST(Integrator, OnGridMatchesOracle) {
  VectorField osc{2, [](double, const State& y) { return State{y[1], -y[0]}; }};
  const auto grid = uniform_grid(0.0, 10.0, 11);
  const auto tr = integrate_on_grid(osc, {1.0, 0.0}, grid, 1e-3);
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(tr.states()[k][0], std::cos(grid[k]), 1e-11);
}

TEST(Quadrature, KnownIntegrals) {
  EXPECT_NEAR(quadrature([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), 2.0, 1e-10);
  EXPECT_NEAR(quadrature([](double x) { return std::exp(x); }, 0.0, 1.0), std::numbers::e - 1.0, 1e-10);
  EXPECT_NEAR(quadrature([](double x) { return std::sqrt(x); }, 0.0, 1.0), 2.0 / 3.0, 1e-9);
  EXPECT_DOUBLE_EQ(quadrature([](double) { return 1.0; }, 2.0, 2.0), 0.0);
}

TEST(Quadrature, NonFiniteIntegrandIsDomainError) {
  EXPECT_EQ(code_of([] { quadrature([](double x) { return 1.0 / x; }, 0.0, 1.0); }), ErrorCode::domain);
}

TEST(Roots, NewtonWithBracket) {
  const double r = solve_root([](double x) { return std::cos(x) - x; }, 0.0, 1.0);
  EXPECT_NEAR(r, 0.7390851332151607, 1e-12);
  EXPECT_EQ(code_of([] { solve_root([](double x) { return x * x + 1.0; }, -1.0, 1.0); }),
            ErrorCode::bracket_invalid);
}

TEST(Roots, FlatFunctionStillConverges) {
  const double r = solve_root([](double x) { return std::pow(x - 0.3, 3); }, 0.0, 1.0, 1e-10);
  EXPECT_NEAR(r, 0.3, 1e-3);
}

TEST(Erf, ReferenceValues) {
  EXPECT_NEAR(numerics::erf(1.0), 0.8427007929497149, 1e-15);
  EXPECT_NEAR(numerics::erf(-0.5), -0.5204998778130465, 1e-15);
}

TEST(LinearAlgebra, DeterminantCofactorSolve) {
  SquareMatrix a(3, {2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0});
  EXPECT_NEAR(det(a), 4.0, 1e-14);
  EXPECT_NEAR(cofactor(a, 0, 0), 3.0, 1e-14);
  EXPECT_NEAR(cofactor(a, 0, 1), 2.0, 1e-14);
  const auto x = linear_solve(a, std::vector<double>{1.0, 0.0, 1.0});
  EXPECT_NEAR(x[0], 1.0, 1e-14);
  EXPECT_NEAR(x[1], 1.0, 1e-14);
  EXPECT_NEAR(x[2], 1.0, 1e-14);
  SquareMatrix s(2, {1.0, 2.0, 2.0, 4.0});
  EXPECT_EQ(code_of([&] { linear_solve(s, std::vector<double>{1.0, 1.0}); }), ErrorCode::singular_matrix);
}

TEST(LinearAlgebra, MatrixExponentialRotation) {
  SquareMatrix rot(2, {0.0, -1.0, 1.0, 0.0});
  const auto v = mat_exp_apply(rot, 2.5, std::vector<double>{1.0, 0.0});
  EXPECT_NEAR(v[0], std::cos(2.5), 1e-13);
  EXPECT_NEAR(v[1], std::sin(2.5), 1e-13);
}

TEST(LinearAlgebra, MatrixExponentialMatchesOracle) {
  oracle::Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    SquareMatrix m(3);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) m(i, j) = rng.uniform(-2.0, 2.0);
    const std::vector<double> v{rng.uniform(), rng.uniform(), rng.uniform()};
    const auto got = mat_exp_apply(m, 1.7, v);
    const auto ref = oracle::rk4_at(
        [&](double, const oracle::Vec& y) {
          oracle::Vec d(3, 0.0);
          for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) d[i] += m(i, j) * y[j];
          return d;
        },
        v, 0.0, 1.7, 1e-4);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(got[i], ref[i], 1e-9 * (1.0 + std::abs(ref[i])));
  }
}

TEST(PassageTime, LogisticInversion) {
  const double x0 = 0.01;
  auto table = PassageTimeTable::from_speed([](double x) { return x * (1.0 - x); }, x0, 1.0);
  auto exact = [&](double x) { return std::log(x / (1.0 - x)) - std::log(x0 / (1.0 - x0)); };
  for (double x : {0.02, 0.1, 0.5, 0.9, 0.999}) EXPECT_NEAR(table.time_to(x), exact(x), 1e-9 * (1.0 + exact(x)));
  for (double t : {0.5, 3.0, 8.0, 15.0}) {
    const double x = table.state_at(t);
    EXPECT_NEAR(exact(x), t, 1e-8 * t);
  }
  EXPECT_EQ(table.state_at(0.0), x0);
  EXPECT_THROW(table.time_to(1.0), Error);
}
