#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "marketdyn/monopoly.hpp"
#include "oracles.hpp"

using namespace marketdyn;
using namespace marketdyn::monopoly;

TEST(Simple, RateFromT50) {
  const double a = rate_for_t50(5.0);
  EXPECT_NEAR(a, 0.1386, 1e-4);
  const auto lat = simple_latency({a, 0.0, 1.0});
  EXPECT_NEAR(lat.T50, 5.0, 1e-12);
  // 1 - e^{-a T10} = 0.1
  EXPECT_NEAR(lat.T10, std::log(10.0 / 9.0) / a, 1e-12);
  EXPECT_NEAR(lat.T10, 0.760, 1e-3);
}

TEST(Simple, PathMatchesOracle) {
  const SimpleAdoption m{0.3, 0.05, 200.0};
  const auto grid = numerics::uniform_grid(0.0, 20.0, 41);
  const auto path = simple_path(m, grid);
  const auto ref = oracle::rk4(
      [&](double, const oracle::Vec& y) { return oracle::Vec{m.a * (1.0 - y[0])}; }, {m.u0}, 0.0, grid, 1e-3);
  EXPECT_LT(oracle::max_rel(path.channel("u"), oracle::column(ref, 0), 1e-12), 1e-10);
  const auto u = path.channel("u");
  const auto D = path.channel("D");
  for (std::size_t k = 0; k < u.size(); ++k) EXPECT_NEAR(D[k], m.N * m.a * (1.0 - u[k]), 1e-9);
}

TEST(Simple, TimeToWithSeed) {
  const SimpleAdoption m{0.2, 0.3, 1.0};
  const double t = simple_time_to(m, 0.8);
  EXPECT_NEAR(1.0 - 0.7 * std::exp(-0.2 * t), 0.8, 1e-13);
  EXPECT_EQ(simple_time_to(m, 0.2), 0.0);
}

TEST(Simple, Validation) {
  EXPECT_THROW(simple_path({-1.0, 0.0, 1.0}, std::vector<double>{0.0, 1.0}), Error);
  EXPECT_THROW(rate_for_t50(0.0), Error);
}

namespace {

double cumulative_by_quadrature(const RateSchedule& s, double t) {
  return numerics::quadrature([&](double x) { return s.rate(x); }, 0.0, t, 1e-12);
}

}  // namespace

TEST(Schedules, CumulativeMatchesQuadrature) {
  const RateSchedule schedules[] = {
      RateSchedule::constant(0.4),
      RateSchedule::linear(0.1, 0.05),
      RateSchedule::exp_decay(0.8, 0.3),
      RateSchedule::tabulated({{0.0, 0.2}, {1.0, 0.6}, {3.0, 0.1}, {5.0, 0.4}}),
  };
  for (const auto& s : schedules) {
    for (double t : {0.5, 1.0, 2.5, 4.0, 7.0}) EXPECT_NEAR(s.cumulative(t), cumulative_by_quadrature(s, t), 1e-9);
  }
  const auto cut = RateSchedule::cutoff(0.5, 2.0);
  EXPECT_NEAR(cut.cumulative(1.0), 0.5, 1e-15);
  EXPECT_NEAR(cut.cumulative(5.0), 1.0, 1e-15);
  EXPECT_NEAR(cut.cumulative_limit(), 1.0, 1e-15);
  EXPECT_NEAR(RateSchedule::exp_decay(0.8, 0.4).cumulative_limit(), 2.0, 1e-15);
}

TEST(Schedules, PathMatchesOracle) {
  for (const auto& s : {RateSchedule::linear(0.1, 0.05), RateSchedule::exp_decay(0.8, 0.3)}) {
    const auto grid = numerics::uniform_grid(0.0, 15.0, 31);
    const auto path = scheduled_path(s, 0.02, 1.0, grid);
    const auto ref = oracle::rk4([&](double t, const oracle::Vec& y) { return oracle::Vec{s.rate(t) * (1.0 - y[0])}; },
                                 {0.02}, 0.0, grid, 1e-3);
    EXPECT_LT(oracle::max_rel(path.channel("u"), oracle::column(ref, 0), 1e-12), 1e-9);
  }
}

TEST(Schedules, RejectsNegativeRates) {
  EXPECT_THROW(RateSchedule::constant(-0.1).validate(), Error);
  EXPECT_THROW(RateSchedule::exp_decay(-0.1, 1.0).validate(), Error);
}

TEST(Segments, SharesMustSumToOne) {
  std::vector<Segment> bad{{0.5, RateSchedule::constant(1.0)}, {0.4, RateSchedule::constant(0.1)}};
  EXPECT_THROW(validate_segments(bad), Error);
}

TEST(Segments, PathIsSumOfSegments) {
  std::vector<Segment> segs{{0.3, RateSchedule::constant(1.0)}, {0.7, RateSchedule::exp_decay(0.2, 0.1)}};
  const auto grid = numerics::uniform_grid(0.0, 10.0, 21);
  const auto path = segmented_path(segs, 50.0, grid);
  const auto ref = oracle::rk4(
      [&](double t, const oracle::Vec& y) {
        return oracle::Vec{-segs[0].schedule.rate(t) * y[0], -segs[1].schedule.rate(t) * y[1]};
      },
      {0.3, 0.7}, 0.0, grid, 1e-3);
  const auto u = path.channel("u");
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(u[k], 1.0 - ref[k][0] - ref[k][1], 1e-10);
}

namespace {

oracle::Rhs hesitation_rhs(const HesitationParams& p) {
  return [p](double, const oracle::Vec& y) {
    const double P = y[0], H = y[1];
    if (p.variant == HesitationVariant::absorbing_hesitation)
      return oracle::Vec{-(p.a + p.b) * P, p.b * P - p.c * H, p.a * P + p.c * H};
    return oracle::Vec{-(p.a + p.b) * P + p.c * H, p.b * P - p.c * H, p.a * P};
  };
}

}  // namespace

class HesitationOracle : public ::testing::TestWithParam<HesitationParams> {};

TEST_P(HesitationOracle, MatchesRk4) {
  const auto p = GetParam();
  const auto grid = numerics::uniform_grid(0.0, 30.0, 61);
  const auto path = hesitation_path(p, grid);
  const auto ref = oracle::rk4(hesitation_rhs(p), {1.0, 0.0, 0.0}, 0.0, grid, 1e-3);
  EXPECT_LT(oracle::max_abs(path.channel("p"), oracle::column(ref, 0)), 1e-10);
  EXPECT_LT(oracle::max_abs(path.channel("h"), oracle::column(ref, 1)), 1e-10);
  EXPECT_LT(oracle::max_abs(path.channel("u"), oracle::column(ref, 2)), 1e-10);
  // D is N du/dt.
  const auto D = path.channel("D");
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const auto d = hesitation_rhs(p)(grid[k], ref[k]);
    EXPECT_NEAR(D[k], p.N * d[2], 1e-9 * p.N);
  }
}

INSTANTIATE_TEST_SUITE_P(
    Variants, HesitationOracle,
    ::testing::Values(HesitationParams{0.3, 0.2, 0.1, HesitationVariant::absorbing_hesitation, 10.0},
                      HesitationParams{0.3, 0.2, 0.5, HesitationVariant::absorbing_hesitation, 10.0},
                      HesitationParams{0.3, 0.2, 0.1, HesitationVariant::returning_hesitation, 10.0},
                      HesitationParams{0.3, 0.0, 0.1, HesitationVariant::returning_hesitation, 10.0},
                      HesitationParams{1.0, 2.0, 0.05, HesitationVariant::returning_hesitation, 1.0}));

TEST(Hesitation, EigenvaluesSolveCharacteristicEquation) {
  const HesitationParams p{0.3, 0.2, 0.1, HesitationVariant::returning_hesitation, 1.0};
  const auto e = hesitation_eigen(p);
  for (double l : {e.lambda1, e.lambda2}) EXPECT_NEAR(l * l + (p.a + p.b + p.c) * l + p.a * p.c, 0.0, 1e-15);
}

TEST(BirthDeath, MatchesOracle) {
  for (const BirthDeathParams p : {BirthDeathParams{0.5, 0.1, 0.05, 0.2, 100.0}, BirthDeathParams{0.5, 0.0, 0.0, 0.5 - 1e-13, 1.0}}) {
    const auto grid = numerics::uniform_grid(0.0, 20.0, 41);
    const auto path = birth_death_path(p, grid);
    const auto ref = oracle::rk4(
        [&](double, const oracle::Vec& y) {
          return oracle::Vec{-(p.a + p.f - p.d) * y[0], p.a * y[0] - p.g * y[1]};
        },
        {1.0, 0.0}, 0.0, grid, 1e-3);
    EXPECT_LT(oracle::max_abs(path.channel("p"), oracle::column(ref, 0)), 1e-10);
    EXPECT_LT(oracle::max_abs(path.channel("u"), oracle::column(ref, 1)), 1e-8);
  }
  EXPECT_THROW(birth_death_path({0.1, 0.5, 0.0, 0.0, 1.0}, std::vector<double>{0.0}), Error);
}
