// Copyright 2026 The flatcar Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


// Command-line front door: plan, track, bench and check-grad.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "flatcar/gradcheck.hpp"
#include "flatcar/harness.hpp"

namespace fs = std::filesystem;
using namespace flatcar;

namespace
{

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;
constexpr int kExitPlanFailed = 3;
constexpr int kExitGradient = 4;

struct Globals
{
  std::uint64_t seed{1};
  bool quiet{false};
};

void write_file(const fs::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InputError("cannot write '" + path.string() + "'");
  }
  out << text;
}

std::string read_file(const fs::path & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("cannot open '" + path.string() + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json parse_json_file(const fs::path & path)
{
  const std::string text = read_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error & e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    throw InputError(path.string() + ": malformed JSON at line " + std::to_string(line) + ", column " +
                     std::to_string(col));
  }
}

std::vector<double> parse_weights(const std::string & text)
{
  std::vector<double> out;
  for (const std::string & cell : split_csv(text)) {
    out.push_back(parse_double(cell));
  }
  return out;
}

void report_outcome(const PlanOutcome & out, const Globals & g)
{
  if (g.quiet) {
    return;
  }
  std::cout << (out.success ? "success" : "FAILED") << "  computation " << out.computation_s << " s (front end "
            << out.frontend_s << " s)\n";
  if (!out.failure.empty()) {
    std::cout << "  reason: " << out.failure << "\n";
  }
  for (std::size_t r = 0; r < out.result.rounds.size(); ++r) {
    const auto & rd = out.result.rounds[r];
    std::cout << "  round " << r << ": " << to_string(rd.status) << ", " << rd.iterations << " iterations"
              << (rd.stalled ? ", stalled" : "") << "\n";
  }
  if (!out.result.trajectories.empty()) {
    std::cout << "  audit min gaps: obstacle " << out.audit.min_obstacle_gap << " m, agents "
              << out.audit.min_agent_gap << " m\n";
  }
}

int cmd_plan(const std::string & scenario_path, const std::string & out_dir, bool random, bool no_clock,
             const Globals & g)
{
  const Scenario sc = random ? random_scenario(g.seed) : scenario_from_json(parse_json_file(scenario_path));
  const PlanOutcome out = plan_scenario(sc);
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_file(dir / "trajectories.json", outcome_to_json(sc, out).dump(2) + "\n");
  write_file(dir / "metrics.csv", metrics_csv({outcome_metrics(sc, out, {!no_clock})}));
  write_file(dir / "iterlog.csv", iterlog_csv(out));
  report_outcome(out, g);
  return out.success ? kExitOk : kExitPlanFailed;
}

int cmd_track(const std::string & dir_text, double offset, const Globals & g)
{
  const fs::path dir(dir_text);
  const LoadedPlan plan = plan_from_json(parse_json_file(dir / "trajectories.json"));
  SimOptions opt;
  opt.lateral_offset = offset;
  const auto logs = simulate_plan(plan.scenario, plan.trajectories, opt);
  std::string csv = std::string(kSimHeader) + "\n";
  bool aborted = false;
  for (std::size_t i = 0; i < logs.size(); ++i) {
    csv += sim_csv_rows(static_cast<int>(i), logs[i]);
    aborted = aborted || logs[i].aborted;
    if (!g.quiet) {
      std::cout << "agent " << i << ": rms " << logs[i].rms_error << " m, max " << logs[i].max_error << " m"
                << (logs[i].aborted ? "  aborted: " + logs[i].message : std::string()) << "\n";
    }
  }
  write_file(dir / "sim.csv", csv);
  return aborted ? kExitFailure : kExitOk;
}

int cmd_bench(const std::string & dir_text, const std::string & weights_text, int random_count,
              const std::string & out_dir, unsigned threads, bool no_clock, const Globals & g)
{
  std::vector<Scenario> scenarios;
  if (random_count > 0) {
    for (int i = 0; i < random_count; ++i) {
      scenarios.push_back(random_scenario(g.seed + static_cast<std::uint64_t>(i)));
    }
  } else {
    std::vector<fs::path> files;
    for (const auto & e : fs::directory_iterator(dir_text)) {
      if (e.is_regular_file() && e.path().extension() == ".json") {
        files.push_back(e.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw InputError("bench: no scenario files in '" + dir_text + "'");
    }
    for (const auto & f : files) {
      scenarios.push_back(scenario_from_json(parse_json_file(f)));
    }
  }
  const std::vector<double> weights = weights_text.empty() ? std::vector<double>{} : parse_weights(weights_text);

  struct Job
  {
    std::size_t scenario;
    double weight;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    if (weights.empty()) {
      jobs.push_back({s, scenarios[s].planner.time_weight});
    }
    for (double w : weights) {
      if (!(w > 0.0)) {
        throw InputError("--sweep-wt: weights must be positive");
      }
      jobs.push_back({s, w});
    }
  }
  const auto rows = run_batch<SweepRow>(
    jobs.size(),
    [&](std::size_t i) {
      Scenario sc = scenarios[jobs[i].scenario];
      sc.planner.time_weight = jobs[i].weight;
      const PlanOutcome out = plan_scenario(sc);
      return SweepRow{sc.name, jobs[i].weight, outcome_metrics(sc, out, {!no_clock}), out.failure};
    },
    threads);
  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "sweep.csv", sweep_csv(rows));
  int failed = 0;
  for (const auto & r : rows) {
    if (!r.metrics.success) {
      ++failed;
      if (!g.quiet) {
        std::cout << r.scenario << " w_T=" << r.time_weight << ": " << r.failure << "\n";
      }
    }
  }
  if (!g.quiet) {
    std::cout << rows.size() - failed << "/" << rows.size() << " plans succeeded\n";
  }
  return failed == 0 ? kExitOk : kExitPlanFailed;
}

int cmd_check_grad(const std::string & scenario_path, int instances, const Globals & g)
{
  const Scenario sc = scenario_from_json(parse_json_file(scenario_path));
  GradCheckOptions opt;
  opt.instances = instances;
  opt.seed = g.seed;
  const GradCheckReport rep = check_gradients(sc, opt);
  if (!g.quiet) {
    for (const auto & s : rep.suites) {
      std::cout << (s.passed() ? "PASS " : "FAIL ") << s.name << ": " << s.instances << " instances, worst relative error "
                << s.worst << " (" << s.failures << " above " << opt.tolerance << ")\n";
    }
  }
  return rep.passed() ? kExitOk : kExitGradient;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Multi-agent car-like trajectory planner and tracker"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Seed for random scenarios and gradient-check jitter")->default_val(1);
  app.add_flag("--quiet", g.quiet, "Print nothing on success");

  std::string scenario_path;
  std::string out_dir = ".";
  bool random = false;
  bool no_clock = false;
  auto * plan = app.add_subcommand("plan", "Plan a scenario; writes trajectories.json, metrics.csv, iterlog.csv");
  plan->add_option("scenario", scenario_path, "Scenario JSON file");
  plan->add_option("-o,--output", out_dir, "Output directory")->required();
  plan->add_flag("--random", random, "Plan the seeded random scenario instead of a file");
  plan->add_flag("--no-clock", no_clock, "Write computation_s as 0 so reruns are byte-identical");

  std::string track_dir;
  double offset = 0.0;
  auto * track = app.add_subcommand("track", "Closed-loop MPC tracking of a planned directory; writes sim.csv");
  track->add_option("dir", track_dir, "Directory written by plan")->required();
  track->add_option("--lateral-offset", offset, "Initial lateral displacement in meters");

  std::string bench_dir;
  std::string weights;
  int random_count = 0;
  unsigned threads = 0;
  auto * bench = app.add_subcommand("bench", "Plan every scenario in a directory; writes sweep.csv");
  bench->add_option("dir", bench_dir, "Directory of scenario JSON files");
  bench->add_option("--sweep-wt", weights, "Comma-separated time weights to re-plan with");
  bench->add_option("--random", random_count, "Use this many seeded random scenarios instead of a directory");
  bench->add_option("-o,--output", out_dir, "Output directory");
  bench->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  bench->add_flag("--no-clock", no_clock, "Write computation_s as 0 so reruns are byte-identical");

  std::string grad_path;
  int instances = 50;
  auto * grad = app.add_subcommand("check-grad", "Finite-difference gradient suites on a scenario");
  grad->add_option("scenario", grad_path, "Scenario JSON file")->required();
  grad->add_option("--instances", instances, "Random instances per suite")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    return app.exit(e) == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*plan) {
      if (scenario_path.empty() && !random) {
        throw InputError("plan: give a scenario file or --random");
      }
      return cmd_plan(scenario_path, out_dir, random, no_clock, g);
    }
    if (*track) {
      return cmd_track(track_dir, offset, g);
    }
    if (*bench) {
      if (bench_dir.empty() && random_count == 0) {
        throw InputError("bench: give a scenario directory or --random N");
      }
      return cmd_bench(bench_dir, weights, random_count, out_dir, threads, no_clock, g);
    }
    if (*grad) {
      return cmd_check_grad(grad_path, instances, g);
    }
  } catch (const InputError & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const fs::filesystem_error & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception & e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
