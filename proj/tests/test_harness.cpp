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


#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "flatcar/audit.hpp"
#include "flatcar/harness.hpp"
#include "flatcar/metrics.hpp"
#include "flatcar/scenario.hpp"
#include "flatcar/simulation.hpp"
#include "flatcar/trajectory_io.hpp"
#include "test_support.hpp"

namespace flatcar
{
namespace
{

namespace fs = std::filesystem;

const std::string kNominal = std::string(FLATCAR_SOURCE_DIR) + "/scenarios/open_4agents.json";

// One-piece trajectory with the given ascending-power coefficients.
AgentTrajectory poly_trajectory(const std::vector<Eigen::Vector2d> & c, double duration, Gear gear = Gear::kForward)
{
  PolyPiece p;
  for (std::size_t k = 0; k < c.size(); ++k) {
    p.coeffs.row(static_cast<Eigen::Index>(k)) = c[k].transpose();
  }
  p.duration = duration;
  return AgentTrajectory({Segment{gear, {p}}});
}

std::string read_file(const fs::path & p)
{
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

int run_cli(const std::string & args)
{
  const std::string cmd = std::string(FLATCAR_CLI) + " --quiet " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------------------
// Scenario and trajectory files
// ---------------------------------------------------------------------------

TEST(ScenarioJson, RoundTripsThroughText)
{
  const Scenario sc = load_scenario(kNominal);
  EXPECT_EQ(sc.agents.size(), 4u);
  EXPECT_EQ(sc.obstacles.size(), 6u);
  const nlohmann::json once = scenario_to_json(sc);
  const nlohmann::json twice = scenario_to_json(parse_scenario(once.dump(2)));
  EXPECT_EQ(once, twice);
}

TEST(ScenarioJson, MalformedTextReportsLineAndColumn)
{
  const std::string text = "{\n  \"schema\": 1,\n  \"agents\": [,]\n}\n";
  try {
    parse_scenario(text);
    FAIL() << "expected an input error";
  } catch (const InputError & e) {
    EXPECT_NE(std::string(e.what()).find("line 3, column 14"), std::string::npos) << e.what();
  }
}

TEST(ScenarioJson, RejectsWrongSchemaAndCollidingStarts)
{
  nlohmann::json j = scenario_to_json(load_scenario(kNominal));
  nlohmann::json bad_schema = j;
  bad_schema["schema"] = 2;
  EXPECT_THROW(scenario_from_json(bad_schema), InputError);

  nlohmann::json collide = j;
  collide["agents"][0]["start"]["x"] = 6.0;
  collide["agents"][0]["start"]["y"] = 6.0;
  EXPECT_THROW(scenario_from_json(collide), InputError);

  EXPECT_THROW(load_scenario("/nonexistent/scenario.json"), InputError);
}

TEST(ScenarioGenerator, SeededScenariosAreValidAndRepeatable)
{
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Scenario a = random_scenario(seed);
    EXPECT_NO_THROW(a.validate());
    EXPECT_EQ(a.agents.size(), 4u);
    EXPECT_EQ(a.obstacles.size(), 6u);
    EXPECT_EQ(scenario_to_json(a), scenario_to_json(random_scenario(seed)));
  }
  EXPECT_NE(scenario_to_json(random_scenario(1)), scenario_to_json(random_scenario(2)));
}

TEST(TrajectoryJson, RoundTripIsBitExact)
{
  std::mt19937_64 rng(17);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Segment> segs;
  for (Gear g : {Gear::kForward, Gear::kReverse}) {
    Segment s{g, {}};
    for (int k = 0; k < 3; ++k) {
      PolyPiece p;
      p.coeffs = CoeffMatrix::NullaryExpr([&] { return gauss(rng); });
      p.duration = 0.7;
      s.pieces.push_back(p);
    }
    segs.push_back(s);
  }
  const AgentTrajectory traj(segs);
  const AgentTrajectory back = trajectory_from_json(nlohmann::json::parse(trajectory_to_json(traj).dump()));
  ASSERT_EQ(back.segment_count(), traj.segment_count());
  for (int s = 0; s < traj.segment_count(); ++s) {
    EXPECT_EQ(back.segments()[s].eta, traj.segments()[s].eta);
    ASSERT_EQ(back.segments()[s].piece_count(), traj.segments()[s].piece_count());
    for (int i = 0; i < traj.segments()[s].piece_count(); ++i) {
      EXPECT_EQ(back.segments()[s].pieces[i].duration, traj.segments()[s].pieces[i].duration);
      EXPECT_TRUE(back.segments()[s].pieces[i].coeffs == traj.segments()[s].pieces[i].coeffs);
    }
  }
  EXPECT_THROW(trajectory_from_json(nlohmann::json::parse(R"({"segments":[{"eta":3}]})")), InputError);
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

TEST(Metrics, StationaryAgentHasNoDistanceOrAcceleration)
{
  const AgentTrajectory still = poly_trajectory({{4.0, -2.0}}, 3.0);
  const MetricsRow m = compute_metrics({still}, true, 0.0);
  EXPECT_EQ(m.avg_travel_distance_m, 0.0);
  EXPECT_EQ(m.avg_accel_cost, 0.0);
  EXPECT_EQ(m.mean_travel_s, 3.0);
  EXPECT_EQ(m.fotp_cost_J, 3.0);
}

TEST(Metrics, UnitSpeedLineOverFiveSeconds)
{
  const AgentTrajectory line = poly_trajectory({{0.0, 0.0}, {0.6, 0.8}}, 5.0);
  const MetricsRow m = compute_metrics({line}, true, 0.0);
  EXPECT_NEAR(m.avg_travel_distance_m, 5.0, 1e-9);
  EXPECT_EQ(m.avg_accel_cost, 0.0);
  EXPECT_EQ(m.longest_travel_s, 5.0);
  EXPECT_EQ(m.fotp_cost_J, 5.0);
}

TEST(Metrics, QuinticRestToRestMatchesSymbolicIntegral)
{
  // x(t) = D (10 s^3 - 15 s^4 + 6 s^5), s = t / T, along the x axis.
  const double D = 3.0;
  const double T = 2.0;
  FlatState head;
  FlatState tail;
  tail.pos << D, 0.0;
  const AgentTrajectory traj({Segment{Gear::kForward, solve_coefficients(head, tail, Eigen::Matrix2Xd(2, 0), T)}});

  testing::Poly x(6, 0.0);
  x[3] = 10.0 * D / std::pow(T, 3);
  x[4] = -15.0 * D / std::pow(T, 4);
  x[5] = 6.0 * D / std::pow(T, 5);
  const testing::Poly acc = testing::poly_derivative(testing::poly_derivative(x));
  const double oracle = testing::poly_integral(testing::poly_mul(acc, acc), 0.0, T);
  EXPECT_NEAR(oracle, D * D / (T * T * T) * 120.0 / 7.0, 1e-12);

  const MetricsRow m = compute_metrics({traj}, true, 0.0);
  EXPECT_NEAR(m.avg_accel_cost / oracle, 1.0, 1e-3);
  EXPECT_NEAR(m.avg_travel_distance_m, D, 1e-9);
}

TEST(Metrics, AveragesOverAgentsAndTracksLongest)
{
  const AgentTrajectory a = poly_trajectory({{0.0, 0.0}, {1.0, 0.0}}, 2.0);
  const AgentTrajectory b = poly_trajectory({{0.0, 0.0}, {0.0, 1.0}}, 4.0);
  const MetricsRow m = compute_metrics({a, b}, true, 0.25);
  EXPECT_DOUBLE_EQ(m.mean_travel_s, 3.0);
  EXPECT_DOUBLE_EQ(m.longest_travel_s, 4.0);
  EXPECT_NEAR(m.avg_travel_distance_m, 3.0, 1e-9);
  EXPECT_EQ(m.computation_s, 0.25);
  EXPECT_GE(m.longest_travel_s, m.mean_travel_s);
}

TEST(MetricsCsv, HeaderIsFrozenAndRowsRoundTrip)
{
  EXPECT_STREQ(
    kMetricsHeader,
    "success,computation_s,mean_travel_s,longest_travel_s,avg_travel_distance_m,avg_accel_cost,fotp_cost_J");
  const std::vector<MetricsRow> rows{
    {true, 0.1, 10.0, 12.345678901234567, 1e-300, 0.0, 1.0 / 3.0},
    {false, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0},
    {true, 1.2345e-7, 6.02214076e23, 7.0, 2.5, 123.456, 9.999999999999998}};
  const std::string text = metrics_csv(rows);
  EXPECT_EQ(text.substr(0, text.find('\n')), kMetricsHeader);
  EXPECT_EQ(parse_metrics_csv(text), rows);
  EXPECT_EQ(format_double(10.0), "10");

  std::string renamed = text;
  renamed.replace(0, 7, "SUCCESS");
  EXPECT_THROW(parse_metrics_csv(renamed), InputError);
  EXPECT_THROW(parse_metrics_line("1,2,3"), InputError);
  EXPECT_THROW(parse_metrics_line("1,x,3,4,5,6,7"), InputError);
}

// ---------------------------------------------------------------------------
// Audit
// ---------------------------------------------------------------------------

TEST(Audit, MeasuresExactGapsAndFlagsContacts)
{
  const AgentTrajectory still = poly_trajectory({{0.0, 0.0}}, 1.0);
  const AuditReport clear = audit_plan({still}, {0.4}, {{1.0, 0.0, 0.5}});
  EXPECT_TRUE(clear.passed);
  EXPECT_NEAR(clear.min_obstacle_gap, 0.1, 1e-15);

  // Drives straight through an obstacle at x = 2.
  const AgentTrajectory through = poly_trajectory({{0.0, 0.0}, {1.0, 0.0}}, 4.0);
  const AuditReport hit = audit_plan({through}, {0.4}, {{2.0, 0.0, 0.3}});
  EXPECT_FALSE(hit.passed);
  EXPECT_LT(hit.min_obstacle_gap, 0.0);
  EXPECT_NEAR(hit.first_violation_t, 1.3, 2e-3);
}

TEST(Audit, HeadOnAgentsCollideAndArrivedAgentsStayPut)
{
  const AgentTrajectory east = poly_trajectory({{0.0, 0.0}, {1.0, 0.0}}, 4.0);
  const AgentTrajectory west = poly_trajectory({{4.0, 0.0}, {-1.0, 0.0}}, 4.0);
  const AuditReport head_on = audit_plan({east, west}, {0.4, 0.4}, {});
  EXPECT_FALSE(head_on.passed);
  EXPECT_NEAR(head_on.min_agent_gap, -0.8, 1e-9);

  // The short agent parks at (1, 0); the long one passes 0.5 m from there later.
  const AgentTrajectory parked = poly_trajectory({{0.0, 0.0}, {1.0, 0.0}}, 1.0);
  const AgentTrajectory late = poly_trajectory({{-3.0, 0.5}, {1.0, 0.0}}, 8.0);
  const AuditReport park = audit_plan({parked, late}, {0.4, 0.4}, {});
  EXPECT_FALSE(park.passed);
  EXPECT_NEAR(park.min_agent_gap, 0.5 - 0.8, 1e-9);
  EXPECT_GT(park.first_violation_t, 1.0);
}

// ---------------------------------------------------------------------------
// Closed loop
// ---------------------------------------------------------------------------

TEST(Simulation, ReferenceInputsReproduceTheTrajectory)
{
  // Gentle S-curve with speed bounded away from zero.
  const AgentTrajectory traj = poly_trajectory({{0.0, 0.0}, {1.0, 0.0}, {0.0, 0.2}, {0.0, -0.05}}, 3.0);
  const KinematicParams kin;
  SimOptions opt;
  opt.source = InputSource::kReference;
  opt.tail_s = 0.0;
  const SimLog log = simulate_agent(traj, kin, MpcConfig{}, opt);
  ASSERT_FALSE(log.aborted);
  const Eigen::Vector2d end = traj.end_state().pos;
  EXPECT_LT((log.final_state.head<2>() - end).norm(), 1e-3);
}

TEST(Simulation, StraightLineTrackingIsTight)
{
  // Rest to rest over 5 m in 6 s: peak speed 1.56 m/s and acceleration 0.8 m/s^2,
  // inside the default limits so the reference is one the car can follow.
  FlatState head;
  FlatState tail;
  tail.pos << 5.0, 0.0;
  const AgentTrajectory line({Segment{Gear::kForward, solve_coefficients(head, tail, Eigen::Matrix2Xd(2, 0), 6.0)}});
  const KinematicParams kin;
  const SimLog log = simulate_agent(line, kin, TrackingConfig{}.for_agent(kin));
  ASSERT_FALSE(log.aborted) << log.message;
  EXPECT_LT(log.rms_error, 0.02);
  EXPECT_LT((log.final_state.head<2>() - tail.pos).norm(), 0.02);
  for (const SimSample & s : log.samples) {
    EXPECT_EQ(s.status, QpStatus::kSolved);
  }
}

TEST(Simulation, RecoversFromLateralOffsetOnNominalPlan)
{
  const Scenario sc = load_scenario(kNominal);
  const PlanOutcome out = plan_scenario(sc);
  ASSERT_TRUE(out.success) << out.failure;
  SimOptions opt;
  opt.lateral_offset = 0.2;
  const std::vector<SimLog> logs = simulate_plan(sc, out.trajectories(), opt);
  for (std::size_t a = 0; a < logs.size(); ++a) {
    const auto & s = logs[a].samples;
    ASSERT_FALSE(logs[a].aborted) << logs[a].message;
    EXPECT_NEAR(s.front().error, 0.2, 1e-9);
    // Monotone decay from step 10 until the offset is essentially gone.
    std::size_t k = 10;
    for (; k + 1 < s.size() && s[k].error >= 5e-3; ++k) {
      EXPECT_LE(s[k + 1].error, s[k].error) << "agent " << a << " step " << k;
    }
    ASSERT_LT(k + 1, s.size()) << "agent " << a << " never recovered";
    for (; k < s.size(); ++k) {
      EXPECT_LT(s[k].error, 0.05) << "agent " << a << " step " << k;
    }
  }
}

// ---------------------------------------------------------------------------
// Batches and determinism
// ---------------------------------------------------------------------------

TEST(Batch, ResultsComeBackInJobOrder)
{
  const std::function<int(std::size_t)> job = [](std::size_t i) { return static_cast<int>(i * i); };
  for (unsigned threads : {1u, 3u, 8u}) {
    const std::vector<int> r = run_batch<int>(40, job, threads);
    ASSERT_EQ(r.size(), 40u);
    for (std::size_t i = 0; i < r.size(); ++i) {
      EXPECT_EQ(r[i], static_cast<int>(i * i));
    }
  }
  const std::function<int(std::size_t)> bad = [](std::size_t i) -> int {
    if (i == 5) {
      throw InputError("job 5");
    }
    return 0;
  };
  EXPECT_THROW(run_batch<int>(10, bad, 2), InputError);
}

TEST(Sweep, IdenticalInputsGiveIdenticalRows)
{
  const Scenario sc = load_scenario(kNominal);
  const MetricsSettings ms{false};
  const auto a = sweep(sc, {10.0}, 1, ms);
  const auto b = sweep(sc, {10.0}, 1, ms);
  EXPECT_EQ(sweep_csv(a), sweep_csv(b));
  EXPECT_TRUE(a.front().metrics.success);
  EXPECT_THROW(sweep(sc, {1.0, 0.0}), InputError);
}

// ---------------------------------------------------------------------------
// Command line
// ---------------------------------------------------------------------------

TEST(Cli, PlanWritesThreeFilesAndReportsInputErrors)
{
  const fs::path dir = fs::temp_directory_path() / "flatcar_cli_test";
  fs::remove_all(dir);
  EXPECT_EQ(run_cli("plan " + kNominal + " -o " + dir.string() + " --no-clock"), 0);
  for (const char * f : {"trajectories.json", "metrics.csv", "iterlog.csv"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  EXPECT_EQ(read_file(dir / "metrics.csv").substr(0, std::string(kMetricsHeader).size()), kMetricsHeader);

  EXPECT_EQ(run_cli("track " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sim.csv"));

  EXPECT_EQ(run_cli("plan /nonexistent/scenario.json -o " + dir.string()), 2);
  const fs::path broken = dir / "broken.json";
  std::ofstream(broken) << "{\"schema\": 1,\n\"agents\": [}\n";
  EXPECT_EQ(run_cli("plan " + broken.string() + " -o " + dir.string()), 2);
  EXPECT_EQ(run_cli("no-such-command"), 2);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace flatcar
