// Command-line front end: simulate, metrics, tables, calibrate, equilibrium.

#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "marketdyn/marketdyn.hpp"

namespace {

using namespace marketdyn;
namespace sc = marketdyn::scenario;

struct Outcome {
  std::string text;
  std::string error;
  int code = 0;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::validation, "cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

template <class F>
Outcome guarded(F&& body) {
  Outcome o;
  try {
    o.text = body();
  } catch (const Error& e) {
    o.code = sc::exit_code_for(e.code());
    o.error = e.what();
  } catch (const std::exception& e) {
    o.code = 3;
    o.error = e.what();
  }
  return o;
}

// Runs `work` over every index with up to `jobs` threads; results keep input order.
std::vector<Outcome> run_all(std::size_t count, unsigned jobs, const std::function<Outcome(std::size_t)>& work) {
  std::vector<Outcome> out(count);
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, jobs), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) out[i] = work(i);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) out[i] = work(i);
    });
  }
  for (auto& t : pool) t.join();
  return out;
}

int emit(const std::vector<Outcome>& results, const std::vector<std::string>& titles, const std::string& out_path) {
  std::string text;
  int code = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    if (!results[i].error.empty()) {
      std::cerr << (titles.size() > 1 ? titles[i] + ": " : "") << results[i].error << '\n';
      if (code == 0) code = results[i].code;
      continue;
    }
    if (titles.size() > 1) text += (i ? "\n# " : "# ") + titles[i] + "\n";
    text += results[i].text;
  }
  if (out_path.empty() || out_path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    std::ofstream f(out_path, std::ios::binary);
    if (!f) {
      std::cerr << "cannot write " << out_path << '\n';
      return 2;
    }
    f << text;
  }
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Market and game lifecycle models"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_path;
  std::size_t samples = sc::kDefaultSamples;
  unsigned jobs = 1;
  std::string format = "csv";
  auto* samples_opt = app.add_option("--samples", samples, "Grid size (default 1000)")->check(CLI::Range(2, 100000000));
  app.add_option("--out", out_path, "Output file (default stdout)");
  app.add_option("--jobs", jobs, "Scenarios evaluated concurrently")->check(CLI::Range(1, 1024));
  app.add_option("--format", format, "csv or tsv")->check(CLI::IsMember({"csv", "tsv"}));

  std::string file;
  std::string which;
  auto* simulate = app.add_subcommand("simulate", "Time series of one scenario or a batch");
  simulate->add_option("file", file, "Scenario document")->required();
  auto* metrics = app.add_subcommand("metrics", "Metrics of one scenario or a batch");
  metrics->add_option("file", file, "Scenario document")->required();
  auto* tables = app.add_subcommand("tables", "Reference latency tables");
  tables->add_option("which", which, "latency_u0 or latency_kernels")->required();
  auto* calibrate = app.add_subcommand("calibrate", "Rates from strategic targets");
  calibrate->add_option("file", file, "Target document")->required();
  auto* equilibrium = app.add_subcommand("equilibrium", "Equilibria of one scenario or a batch");
  equilibrium->add_option("file", file, "Scenario document")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const auto fmt = format == "tsv" ? sc::Format::tsv : sc::Format::csv;
  const std::optional<std::size_t> sample_override =
      samples_opt->count() ? std::optional<std::size_t>(samples) : std::nullopt;

  if (*tables) {
    const auto o = guarded([&] { return sc::render(sc::reference_table(which), fmt); });
    return emit({o}, {which}, out_path);
  }
  if (*calibrate) {
    const auto o = guarded([&] { return sc::render(sc::calibrate(read_file(file)), fmt); });
    return emit({o}, {file}, out_path);
  }

  std::vector<sc::Scenario> batch;
  {
    const auto o = guarded([&] {
      batch = sc::parse_batch(read_file(file));
      return std::string();
    });
    if (!o.error.empty()) return emit({o}, {file}, out_path);
  }
  std::vector<std::string> titles;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    titles.push_back(batch[i].name.empty() ? "scenario " + std::to_string(i + 1) : batch[i].name);
  }

  std::function<Outcome(std::size_t)> work;
  if (*simulate) {
    work = [&](std::size_t i) {
      return guarded([&] {
        const auto report = sc::run_scenario(batch[i], sample_override);
        return sc::render(sc::trajectory_table(batch[i], report), fmt);
      });
    };
  } else if (*metrics) {
    work = [&](std::size_t i) {
      return guarded([&] { return sc::render(sc::metrics_table(sc::run_scenario(batch[i], sample_override)), fmt); });
    };
  } else {
    work = [&](std::size_t i) { return guarded([&] { return sc::render(sc::equilibrium_table(batch[i]), fmt); }); };
  }
  return emit(run_all(batch.size(), jobs, work), titles, out_path);
}
