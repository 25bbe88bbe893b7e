#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "marketdyn/competition.hpp"
#include "oracles.hpp"

using namespace marketdyn;
using namespace marketdyn::competition;

namespace {

ChurnMatrix random_churn(oracle::Rng& rng, std::size_t n) {
  ChurnMatrix c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) c.set(i, j, rng.uniform(0.01, 2.0));
  return c;
}

// Net churn into supplier i, straight from the definition.
std::vector<double> net_churn(const ChurnMatrix& c, const std::vector<double>& u) {
  const std::size_t n = u.size();
  std::vector<double> out(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) out[i] += c(j, i) * u[j] - c(i, j) * u[i];
  return out;
}

oracle::Rhs market_rhs(const BassCompetition& mk, const ChurnMatrix& c) {
  return [mk, c](double, const oracle::Vec& u) {
    const double free = 1.0 - std::accumulate(u.begin(), u.end(), 0.0);
    auto d = net_churn(c, u);
    for (std::size_t i = 0; i < u.size(); ++i) d[i] += free * (mk.m[i] + mk.r[i] * u[i]);
    return d;
  };
}

}  // namespace

TEST(ChurnMatrix, DiagonalIsOutflow) {
  const ChurnMatrix c({{0.0, 0.2, 0.3}, {0.1, 0.0, 0.0}, {0.5, 0.5, 0.0}});
  EXPECT_DOUBLE_EQ(c(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(c(2, 2), 1.0);
  EXPECT_THROW(ChurnMatrix({{1.0, 0.2}, {0.1, 0.0}}), Error);
  EXPECT_THROW(ChurnMatrix({{0.0, -0.2}, {0.1, 0.0}}), Error);
}

TEST(Churn, FlowsSumToZero) {
  oracle::Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(2, 6));
    const auto c = random_churn(rng, n);
    std::vector<double> u(n);
    for (auto& v : u) v = rng.uniform();
    const auto flows = churn_flows(ChurnSpec(c), 0.0, u);
    EXPECT_NEAR(std::accumulate(flows.begin(), flows.end(), 0.0), 0.0, 1e-14);
    const auto ref = net_churn(c, u);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(flows[i], ref[i], 1e-14);
  }
}

TEST(Churn, CofactorEquilibriumBalancesFlows) {
  oracle::Rng rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(2, 5));
    const auto c = random_churn(rng, n);
    const auto u = spontaneous_equilibrium_cofactors(c);
    EXPECT_NEAR(std::accumulate(u.begin(), u.end(), 0.0), 1.0, 1e-12);
    for (double v : net_churn(c, u)) EXPECT_LE(std::abs(v), 1e-10);
    const auto lu = spontaneous_equilibrium(c);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(lu[i], u[i], 1e-12);
  }
}

TEST(Churn, TwoSupplierEquilibriumIsExact) {
  const double a12 = 0.3, a21 = 0.7;
  const ChurnMatrix c({{0.0, a12}, {a21, 0.0}});
  const auto u = spontaneous_equilibrium_cofactors(c);
  EXPECT_NEAR(u[0], a21 / (a12 + a21), 1e-16);
  EXPECT_NEAR(u[1], a12 / (a12 + a21), 1e-16);
}

TEST(Churn, DegenerateWhenTwoSuppliersNeverLose) {
  const ChurnMatrix c({{0.0, 0.0, 0.0}, {0.0, 0.0, 0.0}, {0.5, 0.5, 0.0}});
  try {
    spontaneous_equilibrium(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::degenerate_market);
  }
  EXPECT_THROW(spontaneous_equilibrium(ChurnMatrix(3)), Error);
}

TEST(NoChurn, InnovatorsOnlyMatchOracle) {
  const std::vector<double> m{0.2, 0.5, 0.1};
  const auto grid = numerics::uniform_grid(0.0, 10.0, 21);
  const auto path = innovators_only_path(m, grid);
  const BassCompetition mk{m, {0, 0, 0}, {0, 0, 0}};
  const auto ref = oracle::rk4(market_rhs(mk, ChurnMatrix(3)), {0, 0, 0}, 0.0, grid, 1e-3);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LT(oracle::max_abs(path.channel("u" + std::to_string(i + 1)), oracle::column(ref, i)), 1e-12);
}

TEST(NoChurn, FixedPointMatchesLongSimulation) {
  oracle::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(2, 4));
    BassCompetition mk;
    for (std::size_t i = 0; i < n; ++i) {
      mk.m.push_back(trial % 3 == 0 && i == 0 ? 0.0 : rng.uniform(0.01, 0.5));
      mk.r.push_back(trial % 4 == 0 ? 0.0 : rng.uniform(0.0, 2.0));
      mk.u0.push_back(rng.uniform(0.0, 0.1));
    }
    const auto fp = fixed_point_no_churn(mk);
    const auto late = oracle::rk4_at(market_rhs(mk, ChurnMatrix(n)), mk.u0, 0.0, 400.0, 1e-2);
    EXPECT_NEAR(std::accumulate(fp.begin(), fp.end(), 0.0), 1.0, 1e-12);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(fp[i], late[i], 1e-7) << "trial " << trial;
  }
}

TEST(Spontaneous, MatrixExponentialPathMatchesOracle) {
  oracle::Rng rng(9);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = static_cast<std::size_t>(rng.integer(2, 4));
    const auto c = random_churn(rng, n);
    std::vector<double> m(n);
    for (auto& v : m) v = rng.uniform(0.05, 0.6);
    const auto grid = numerics::uniform_grid(0.0, 15.0, 31);
    const auto path = spontaneous_path(m, c, grid);
    const BassCompetition mk{m, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)};
    const auto ref = oracle::rk4(market_rhs(mk, c), std::vector<double>(n, 0.0), 0.0, grid, 1e-3);
    for (std::size_t i = 0; i < n; ++i)
      EXPECT_LT(oracle::max_abs(path.channel("u" + std::to_string(i + 1)), oracle::column(ref, i)), 1e-10);
  }
}

TEST(Spontaneous, TwoSupplierClosedFormAndConvergence) {
  const double m1 = 0.4, m2 = 0.3, a12 = 0.1, a21 = 0.25;
  const ChurnMatrix c({{0.0, a12}, {a21, 0.0}});
  const BassCompetition mk{{m1, m2}, {0, 0}, {0, 0}};
  const auto rhs = market_rhs(mk, c);
  for (double t : {0.5, 3.0, 10.0}) {
    const auto [u1, u2] = two_supplier_shares(m1, m2, a12, a21, t);
    const auto ref = oracle::rk4_at(rhs, {0.0, 0.0}, 0.0, t, 1e-3);
    EXPECT_NEAR(u1, ref[0], 1e-12);
    EXPECT_NEAR(u2, ref[1], 1e-12);
  }
  const auto [u1, u2] = two_supplier_shares(m1, m2, a12, a21, 20.0 / (a12 + a21));
  EXPECT_LT(std::abs(u1 - a21 / (a12 + a21)), 1e-6);
  EXPECT_LT(std::abs(u2 - a12 / (a12 + a21)), 1e-6);
}

TEST(Spontaneous, SupplierTwoPeakWithoutLosses) {
  const double m1 = 0.4, m2 = 0.3, a21 = 0.2;
  const double T = supplier2_peak_time(m1, m2, a21);
  auto u2 = [&](double t) { return two_supplier_shares(m1, m2, 0.0, a21, t).second; };
  EXPECT_GT(u2(T), u2(T - 1e-3));
  EXPECT_GT(u2(T), u2(T + 1e-3));
}

TEST(Numeric, NonlinearMarketWithChurnMatchesOracle) {
  const BassCompetition mk{{0.05, 0.02, 0.01}, {0.5, 1.0, 0.3}, {0.01, 0.01, 0.0}};
  const ChurnMatrix c({{0.0, 0.1, 0.05}, {0.02, 0.0, 0.1}, {0.3, 0.0, 0.0}});
  const auto grid = numerics::uniform_grid(0.0, 20.0, 41);
  const auto path = competitive_path_numeric(mk, c, grid);
  const auto ref = oracle::rk4(market_rhs(mk, c), mk.u0, 0.0, grid, 1e-3);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_LT(oracle::max_abs(path.channel("u" + std::to_string(i + 1)), oracle::column(ref, i)), 1e-10);
}

namespace {

PeriodicChurnSpec periodic_spec(double a12, double a21, double amp12, double amp21) {
  PeriodicChurnSpec s;
  s.a0 = ChurnMatrix({{0.0, a12}, {a21, 0.0}});
  s.terms.push_back({0, 1, {amp12, 1.0, 0.0}});
  s.terms.push_back({1, 0, {amp21, 1.0, 0.3}});
  return s;
}

}  // namespace

TEST(Periodic, PathMatchesOracleAndDecomposes) {
  const auto spec = periodic_spec(0.4, 0.6, 0.15, 0.2);
  const auto grid = numerics::uniform_grid(0.0, 10.0, 101);
  const auto path = periodic_two_supplier_path(spec, 0.9, grid);
  const auto ref = oracle::rk4(
      [&](double t, const oracle::Vec& y) {
        return oracle::Vec{spec.rate(1, 0, t) * (1.0 - y[0]) - spec.rate(0, 1, t) * y[0]};
      },
      {0.9}, 0.0, grid, 1e-4);
  EXPECT_LT(oracle::max_abs(path.channel("u1"), oracle::column(ref, 0)), 1e-10);
  const auto u1 = path.channel("u1");
  const auto mean = path.channel("mean");
  const auto per = path.channel("periodic");
  const auto dec = path.channel("decaying");
  for (std::size_t k = 0; k < grid.size(); ++k) EXPECT_NEAR(u1[k], mean[k] + per[k] + dec[k], 1e-14);
}

TEST(Periodic, RejectsNegativeRates) {
  EXPECT_THROW(periodic_spec(0.1, 0.6, 0.15, 0.2).validate(), Error);
}

TEST(Stimulated, TwoSupplierRootBalances) {
  oracle::Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    StimulatedChurnSpec s;
    s.churn = ChurnMatrix({{0.0, rng.uniform(0.0, 1.0)}, {rng.uniform(0.01, 1.0), 0.0}});
    s.b = {rng.uniform(0.0, 3.0), rng.uniform(0.0, 3.0)};
    s.eps = {1.0, 1.0};
    const auto res = stimulated_fixed_point(s);
    EXPECT_GT(res.u[0], 0.0);
    EXPECT_LE(res.u[0], 1.0);
    EXPECT_LE(std::abs(two_supplier_balance(s, res.u[0])), 1e-12);
  }
}

TEST(Stimulated, NoLossesMeansTotalCapture) {
  StimulatedChurnSpec s;
  s.churn = ChurnMatrix({{0.0, 0.0}, {0.4, 0.0}});
  s.b = {1.0, 2.0};
  s.eps = {1.0, 1.0};
  const auto res = stimulated_fixed_point(s);
  EXPECT_NEAR(res.u[0], 1.0, 1e-12);
  EXPECT_EQ(res.outcome, StimulatedOutcome::winner_take_all);
}

TEST(Stimulated, PurelyStimulatedIsWinnerTakeAll) {
  oracle::Rng rng(3);
  StimulatedChurnSpec s;
  s.churn = ChurnMatrix({{0.0, 0.5, 0.3}, {0.4, 0.0, 0.6}, {0.2, 0.7, 0.0}});
  s.b = {1.0, 1.5, 0.8};
  s.eps = {0.0, 0.0, 0.0};
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<double> start{rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0)};
    const double total = start[0] + start[1] + start[2];
    for (auto& v : start) v /= total;
    const auto res = stimulated_fixed_point(s, start);
    EXPECT_EQ(res.outcome, StimulatedOutcome::winner_take_all);
    EXPECT_EQ(std::count(res.u.begin(), res.u.end(), 1.0), 1);
  }
}

// Each supplier beats one rival and loses to the other: no vertex attracts.
TEST(Stimulated, CyclicOrderingNeverSettles) {
  StimulatedChurnSpec s;
  s.churn = ChurnMatrix({{0.0, 1.0, 0.5}, {0.5, 0.0, 1.0}, {1.0, 0.5, 0.0}});
  s.b = {1.0, 1.0, 1.0};
  s.eps = {0.0, 0.0, 0.0};
  try {
    stimulated_fixed_point(s, {0.5, 0.3, 0.2});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::never_reached);
  }
}

TEST(Stimulated, LoneSpontaneousRivalCanTakeAll) {
  StimulatedChurnSpec s;
  s.churn = ChurnMatrix({{0.0, 0.8}, {0.2, 0.0}});
  s.b = {1.0, 1.0};
  s.eps = {0.0, 1.0};
  const auto res = stimulated_fixed_point(s);
  EXPECT_EQ(res.u, (std::vector<double>{0.0, 1.0}));
  EXPECT_EQ(res.outcome, StimulatedOutcome::winner_take_all);
  EXPECT_EQ(two_supplier_balance(s, 0.0), 0.0);
}

TEST(Stimulated, ThreeSupplierSharedEquilibrium) {
  StimulatedChurnSpec s;
  s.churn = ChurnMatrix({{0.0, 0.5, 0.3}, {0.4, 0.0, 0.6}, {0.2, 0.7, 0.0}});
  s.b = {0.3, 0.2, 0.1};
  s.eps = {1.0, 1.0, 1.0};
  const auto res = stimulated_fixed_point(s);
  EXPECT_NEAR(std::accumulate(res.u.begin(), res.u.end(), 0.0), 1.0, 1e-12);
  for (double c : churn_flows(ChurnSpec(s), 0.0, res.u)) EXPECT_LE(std::abs(c), 1e-12);
}
