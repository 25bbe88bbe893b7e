#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "marketdyn/scenario.hpp"

using namespace marketdyn;
using namespace marketdyn::scenario;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
};

CliResult cli(const std::string& args) {
  const std::string cmd = std::string(MARKETDYN_CLI) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string scenario_path(const std::string& name) { return std::string(MARKETDYN_SCENARIOS) + "/" + name; }

std::string temp_file(const std::string& name, const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / ("marketdyn_test_" + name);
  std::ofstream(path) << content;
  return path.string();
}

std::vector<FieldError> errors_of(const std::string& text) {
  try {
    parse_scenario(text);
  } catch (const ScenarioError& e) {
    return e.errors();
  }
  return {};
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(Parse, MinimalSimpleDocument) {
  const auto s = parse_scenario(R"({"model": {"kind": "simple", "a": 0.1386, "N": 1000}, "horizon": 25})");
  const auto& m = std::get<SimpleSpec>(s.model);
  EXPECT_EQ(m.model.a, 0.1386);
  EXPECT_EQ(m.model.N, 1000.0);
  EXPECT_EQ(s.horizon, 25.0);
  EXPECT_NEAR(monopoly::simple_time_to(m.model, 0.5), 5.0, 2e-3);
}

TEST(Parse, NegativeRateNamesTheField) {
  const auto errs = errors_of(R"({"model": {"kind": "simple", "a": -0.2}, "horizon": 5})");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].issue, Issue::invariant_breach);
  EXPECT_EQ(errs[0].path, "model.a");
  EXPECT_EQ(errs[0].expected, "number > 0");
}

TEST(Parse, DistinctIssueCodes) {
  EXPECT_EQ(errors_of(R"({"model": {"kind": "cubic"}, "horizon": 5})").at(0).issue, Issue::unknown_kind);
  EXPECT_EQ(errors_of(R"({"model": {"kind": "simple", "a": 1}})").at(0).issue, Issue::missing_field);
  EXPECT_EQ(errors_of(R"({"model": {"kind": "simple", "a": "fast"}, "horizon": 1})").at(0).issue, Issue::wrong_type);
  const auto extra = errors_of(R"({"model": {"kind": "simple", "a": 1, "gamma": 2}, "horizon": 1})");
  ASSERT_EQ(extra.size(), 1u);
  EXPECT_EQ(extra[0].issue, Issue::unknown_field);
  EXPECT_EQ(extra[0].path, "model.gamma");
}

TEST(Parse, ModelInvariantsAreReported) {
  const auto errs = errors_of(R"({"model": {"kind": "game", "case": 2, "beta": 0.1, "b": 0.2, "N": 100}, "horizon": 5})");
  ASSERT_EQ(errs.size(), 1u);
  EXPECT_EQ(errs[0].path, "model");
  EXPECT_NE(errs[0].found.find("P(0) > 0"), std::string::npos);
  EXPECT_FALSE(errors_of(R"({"model": {"kind": "segmented", "segments": [{"n": 0.5, "schedule": 1}]}, "horizon": 5})").empty());
}

TEST(Parse, BassCalibratedFromT50) {
  const auto s = parse_scenario(R"({"model": {"kind": "feedback", "kernel": {"type": "bass", "ratio": 3}, "T50": 5}, "horizon": 10})");
  const auto& m = std::get<FeedbackSpec>(s.model).model;
  EXPECT_NEAR(feedback::u_of_t(m, 5.0), 0.5, 1e-12);
}

TEST(Parse, RoundTripEveryKind) {
  const char* docs[] = {
      R"({"name": "x", "model": {"kind": "simple", "T50": 5, "u0": 0.1, "N": 3}, "horizon": 2, "samples": 7, "outputs": ["u"], "time_unit": "year"})",
      R"({"model": {"kind": "simple", "a": 0.3}, "horizon": 2})",
      R"({"model": {"kind": "scheduled", "schedule": {"type": "tabulated", "points": [[0, 1], [2, 0.5]]}, "u0": 0.1}, "horizon": 2})",
      R"({"model": {"kind": "scheduled", "schedule": {"type": "cutoff", "a": 0.5, "T": 3}}, "horizon": 2})",
      R"({"model": {"kind": "segmented", "segments": [{"n": 0.4, "schedule": 0.3}, {"n": 0.6, "schedule": {"type": "linear", "a0": 0.1, "a1": 0.2}}]}, "horizon": 2})",
      R"({"model": {"kind": "hesitation", "a": 0.3, "b": 0.2, "c": 0.1, "variant": "returning"}, "horizon": 2})",
      R"({"model": {"kind": "birth_death", "a": 0.3, "d": 0.1, "f": 0.05, "g": 0.02}, "horizon": 2})",
      R"({"model": {"kind": "feedback", "kernel": {"type": "power", "n": 1.5}, "u0": 0.01, "a": 2}, "horizon": 2})",
      R"({"model": {"kind": "feedback", "kernel": {"type": "inverse_u_cutoff", "u1": 0.7}, "T50": 3}, "horizon": 2})",
      R"({"model": {"kind": "competition", "m": [0.1, 0.2], "r": [1, 0], "u0": [0.01, 0]}, "horizon": 2})",
      R"({"model": {"kind": "competition", "m": [0, 0], "u0": [0.3, 0.7], "churn": {"type": "stimulated", "a": [[0, 0.1], [0.2, 0]], "b": [1, 0], "eps": [1, 0]}}, "horizon": 2})",
      R"({"model": {"kind": "competition", "m": [0, 0], "u0": [0.3, 0.7], "churn": {"type": "periodic", "a": [[0, 0.4], [0.6, 0]], "terms": [{"from": 2, "to": 1, "amplitude": 0.1, "period": 2, "phase": 1}]}}, "horizon": 2})",
      R"({"model": {"kind": "game", "case": 1, "a": {"type": "linear", "a0": 0.2, "a1": 0.1}, "b": 0.3, "N": 100}, "horizon": 2})",
      R"({"model": {"kind": "game", "case": 3, "a": 0.1, "beta": 0.01, "b": 0.3, "N": 100}, "horizon": 2})",
      R"({"model": {"kind": "game", "case": 4, "beta": 0.01, "gamma": 0.02, "initial": {"B": 80, "P": 10, "Q": 10}}, "horizon": 2})",
      R"({"model": {"kind": "game", "case": 6, "a": 0.3, "b": 0.1, "gamma": 0.002, "N": 100}, "horizon": 2})",
      R"({"model": {"kind": "complementary", "g": 0.01, "b": 0.2, "a_c": 0.3, "b_c": 0.1, "tau": -1, "N": 100, "N_c": 40}, "horizon": 2})",
  };
  for (const char* doc : docs) {
    const auto s = parse_scenario(doc);
    const auto again = parse_scenario(serialize_scenario(s));
    EXPECT_TRUE(again == s) << doc;
  }
}

TEST(Batch, ArrayAndObjectForms) {
  EXPECT_EQ(parse_batch(R"([{"model": {"kind": "simple", "a": 1}, "horizon": 1}, {"model": {"kind": "simple", "a": 2}, "horizon": 1}])").size(), 2u);
  try {
    parse_batch(R"({"scenarios": [{"model": {"kind": "simple", "a": 1}, "horizon": 1}, {"model": {"kind": "simple"}, "horizon": 1}]})");
    FAIL();
  } catch (const ScenarioError& e) {
    EXPECT_EQ(e.errors().at(0).path, "scenarios[1].model.a");
  }
}

TEST(Run, SimpleRowsAtMultiplesOfT50) {
  const auto s = parse_scenario(R"({"model": {"kind": "simple", "T50": 5}, "horizon": 10, "samples": 3, "outputs": ["u"]})");
  const auto rep = run_scenario(s);
  const auto csv = render(trajectory_table(s, rep), Format::csv);
  EXPECT_EQ(csv, "t,u\n0,0\n5,0.5\n10,0.75\n");
}

TEST(Run, SirChannelsAndConservation) {
  const auto s = parse_scenario(R"({"model": {"kind": "game", "case": 2, "beta": 0.004, "b": 0.5, "initial": {"B": 990, "P": 10}}, "horizon": 30, "samples": 301})");
  const auto rep = run_scenario(s);
  EXPECT_EQ(rep.trajectory.labels(), (std::vector<std::string>{"B", "P", "Q", "D", "C"}));
  const auto B = rep.trajectory.channel("B");
  const auto P = rep.trajectory.channel("P");
  const auto Q = rep.trajectory.channel("Q");
  for (std::size_t k = 0; k < B.size(); ++k) EXPECT_LE(std::abs(B[k] + P[k] + Q[k] - 1000.0), 1e-9 * 1000.0);
}

TEST(Run, UnknownOutputChannel) {
  const auto s = parse_scenario(R"({"model": {"kind": "simple", "a": 1}, "horizon": 1, "outputs": ["P"]})");
  EXPECT_THROW(run_scenario(s), ScenarioError);
}

TEST(Run, EveryKindProducesMetrics) {
  for (const char* f : {"simple.json", "bass.json", "quadratic.json", "scheduled.json", "hesitation.json", "case1.json", "sir.json",
                        "case5.json", "churn.json", "periodic.json", "stimulated.json", "complementary.json"}) {
    std::ifstream in(scenario_path(f));
    std::stringstream ss;
    ss << in.rdbuf();
    const auto s = parse_scenario(ss.str());
    const auto rep = run_scenario(s, 201);
    EXPECT_EQ(rep.trajectory.size(), 201u) << f;
    EXPECT_FALSE(rep.metrics.empty()) << f;
  }
}

TEST(Run, QuadraticKernelReportsBothRatios) {
  const auto s = parse_scenario(R"({"model": {"kind": "feedback", "kernel": "quadratic", "u0": 0.01, "T50": 5}, "horizon": 10})");
  const auto rep = run_scenario(s);
  ASSERT_EQ(rep.notes.size(), 1u);
  double printed = 0.0, exact = 0.0;
  for (const auto& m : rep.metrics) {
    if (m.name == "T10_over_T50_printed_form") printed = m.value;
    if (m.name == "T10_over_T50") exact = m.value;
  }
  EXPECT_NEAR(printed, 0.88, 0.005);
  EXPECT_NEAR(exact, 0.90, 0.005);
}

TEST(Format, NineSignificantDigits) {
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333");
  EXPECT_EQ(format_number(123456789012.0), "1.23456789e+11");
  EXPECT_EQ(format_number(-0.0), "0");
}

TEST(Format, Durations) {
  EXPECT_EQ(format_duration(0.75), "9 months");
  EXPECT_EQ(format_duration(1.0 + 7.0 / 12.0), "1 year 7 months");
  EXPECT_EQ(format_duration(1.0 / 12.0 + 20.0 / 365.0), "1 month 20 days");
}

TEST(Tables, LatencyU0IsRecomputed) {
  const auto t = latency_u0_table();
  ASSERT_EQ(t.rows.size(), 5u);
  EXPECT_EQ(t.rows[3][0], "0.02");
  EXPECT_NEAR(std::stod(t.rows[3][1]), 0.44, 0.01);
  // Ratios fall as the seed grows.
  for (std::size_t i = 1; i < t.rows.size(); ++i) EXPECT_LT(std::stod(t.rows[i][1]), std::stod(t.rows[i - 1][1]));
}

TEST(Tables, LatencyKernels) {
  const auto t = latency_kernels_table();
  auto row = [&](const std::string& label) {
    for (const auto& r : t.rows)
      if (r[0] == label) return r;
    ADD_FAILURE() << "missing row " << label;
    return std::vector<std::string>{};
  };
  EXPECT_EQ(row("1/u")[4], "1 month 20 days");
  EXPECT_NEAR(std::stod(row("1-u")[2]), 1.0 / 9.0, 1e-9);
  EXPECT_NEAR(std::stod(row("u^2")[2]), 0.90, 0.005);
  EXPECT_NEAR(std::stod(row("u^2 (published form)*")[2]), 0.88, 0.005);
  EXPECT_NE(t.rows.back()[0].find("published closed form"), std::string::npos);
  EXPECT_THROW(reference_table("latency_x"), ScenarioError);
}

TEST(Calibrate, Targets) {
  EXPECT_NEAR(std::stod(calibrate(R"({"kind": "simple", "T50": 5})").rows[0][1]), 0.1386, 1e-4);
  const auto c1 = calibrate(R"({"kind": "case1", "T_m": 1, "ratio": 2})");
  EXPECT_NEAR(std::stod(c1.rows[0][1]), 1.386, 1e-3);
  const auto fb = calibrate(R"({"kind": "feedback", "kernel": "linear", "u0": 0.01, "T50": 5})");
  const feedback::FeedbackModel m{feedback::FeedbackKernel::linear(), std::stod(fb.rows[0][1]), 0.01, 1.0};
  EXPECT_NEAR(feedback::u_of_t(m, 5.0), 0.5, 1e-8);
  try {
    calibrate(R"({"kind": "case1", "T_m": 1, "ratio": -2})");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::calibration_infeasible);
  }
}

TEST(Calibrate, SirRoundTripFromSyntheticRun) {
  const games::Case2 truth{0.004, 0.5};
  const games::BpqState start{990.0, 10.0, 0.0};
  const auto pk = games::sir_peak(truth, start);
  std::ostringstream doc;
  doc.precision(17);
  doc << R"({"kind": "sir", "T_m": )" << pk.T_m << R"(, "P_Tm": )" << pk.P_m << R"(, "initial": {"B": 990, "P": 10}})";
  const auto t = calibrate(doc.str());
  EXPECT_NEAR(std::stod(t.rows[0][1]), truth.b, 0.01 * truth.b);
  EXPECT_NEAR(std::stod(t.rows[1][1]), truth.beta, 0.01 * truth.beta);
}

TEST(Cli, SimulateCsv) {
  const auto r = cli("simulate " + scenario_path("simple.json") + " --samples 3");
  EXPECT_EQ(r.status, 0);
  const auto rows = parse_csv(r.out);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"t", "u", "D"}));
  EXPECT_EQ(rows[2][0], "12.5");
}

TEST(Cli, TsvFormat) {
  const auto r = cli("simulate " + scenario_path("simple.json") + " --samples 2 --format tsv");
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out.substr(0, 6), "t\tu\tD\n");
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("simulate " + temp_file("bad.json", R"({"model": {"kind": "simple", "a": -1}, "horizon": 1})")).status, 2);
  EXPECT_EQ(cli("simulate /nonexistent/file.json").status, 2);
  EXPECT_EQ(cli("tables nope").status, 2);
  EXPECT_EQ(cli("calibrate " + temp_file("cal.json", R"({"kind": "case1", "T_m": -1, "ratio": 2})")).status, 4);
  // A divergent cutoff schedule is fine; an unbracketed no-churn market is a numeric failure.
  EXPECT_EQ(cli("equilibrium " + temp_file("eq.json", R"({"model": {"kind": "competition", "m": [0, 0], "u0": [0, 0], "churn": {"type": "spontaneous", "a": [[0, 0], [0, 0]]}}, "horizon": 1})")).status, 2);
  EXPECT_EQ(cli("equilibrium " + temp_file("cyclic.json", R"({"model": {"kind": "competition", "m": [0, 0, 0], "u0": [0.5, 0.3, 0.2], "churn": {"type": "stimulated", "a": [[0, 1, 0.5], [0.5, 0, 1], [1, 0.5, 0]], "b": [1, 1, 1], "eps": [0, 0, 0]}}, "horizon": 5})")).status, 3);
}

TEST(Cli, MetricsTablesCalibrateEquilibrium) {
  auto r = cli("metrics " + scenario_path("sir.json"));
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("T_m,"), std::string::npos);
  r = cli("tables latency_kernels");
  EXPECT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("1 month 20 days"), std::string::npos);
  r = cli("calibrate " + scenario_path("calibrate_case1.json"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out.substr(0, 25), "parameter,value\na_plus_c,");
  r = cli("equilibrium " + scenario_path("churn.json"));
  EXPECT_EQ(r.status, 0);
  EXPECT_EQ(r.out.substr(0, 11), "supplier,u\n");
}

TEST(Cli, DeterministicAcrossJobs) {
  const auto first = cli("simulate " + scenario_path("batch.json") + " --jobs 1");
  ASSERT_EQ(first.status, 0);
  for (int run = 0; run < 2; ++run) {
    EXPECT_EQ(cli("simulate " + scenario_path("batch.json") + " --jobs 1").out, first.out);
    EXPECT_EQ(cli("simulate " + scenario_path("batch.json") + " --jobs 4").out, first.out);
  }
}

TEST(Cli, OutFile) {
  const auto path = (std::filesystem::temp_directory_path() / "marketdyn_test_out.csv").string();
  std::filesystem::remove(path);
  EXPECT_EQ(cli("simulate " + scenario_path("sir.json") + " --samples 5 --out " + path).status, 0);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "t,B,P,Q,D,C");
}
