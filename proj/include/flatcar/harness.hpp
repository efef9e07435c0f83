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


#ifndef FLATCAR__HARNESS_HPP_
#define FLATCAR__HARNESS_HPP_

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <numbers>
#include <string>
#include <thread>
#include <vector>

#include "flatcar/audit.hpp"
#include "flatcar/errors.hpp"
#include "flatcar/frontend.hpp"
#include "flatcar/metrics.hpp"
#include "flatcar/mpc.hpp"
#include "flatcar/planner.hpp"
#include "flatcar/scenario.hpp"
#include "flatcar/simulation.hpp"
#include "flatcar/trajectory_io.hpp"
#include "json.hpp"

namespace flatcar
{

struct GoalError
{
  double position{0.0};  // meters
  double heading{0.0};   // radians, absolute
};

struct PlanOutcome
{
  bool success{false};
  bool converged{false};
  bool goals_reached{false};
  std::string failure;  // empty on success
  PlanResult result;
  std::vector<InitialGuess> guesses;
  std::vector<AgentTrajectory> initial_trajectories;
  double initial_effort{0.0};
  double frontend_s{0.0};
  double computation_s{0.0};
  AuditReport audit;
  std::vector<GoalError> goal_errors;

  const std::vector<AgentTrajectory> & trajectories() const { return result.trajectories; }
};

/// Front-end search for every agent, in agent order.
inline std::vector<InitialGuess> initial_guesses(const Scenario & sc)
{
  std::vector<InitialGuess> out;
  for (const AgentSpec & a : sc.agents) {
    const GridMap map(sc.bounds, sc.resolution, sc.obstacles, a.radius);
    const Gear start_dir = a.start.v < 0.0 ? Gear::kReverse : Gear::kForward;
    const CoarsePath path =
      search({a.start.x, a.start.y, a.start.theta, start_dir}, {a.goal.x, a.goal.y, a.goal.theta}, map,
             a.kinematics, sc.search);
    out.push_back(segment_path(path, {sc.piece_length, 0.5 * a.kinematics.v_max}));
  }
  return out;
}

/**
 * Optimization problem for the scenario seeded with the given guesses.
 * An endpoint at rest gets its heading locked: the boundary acceleration
 * points along the gear with a free positive magnitude, which makes the
 * path leave and arrive tangent to the stated heading.
 */
inline PlanningProblem planning_problem(const Scenario & sc, const std::vector<InitialGuess> & guesses)
{
  PlanningProblem prob;
  prob.penalty = sc.penalty;
  if (sc.agents.size() > 1) {
    prob.mutual = MutualClearance{sc.mutual_separation()};
  }
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const AgentSpec & a = sc.agents[i];
    AgentSetup s;
    s.boundary.start = pose_state(a.start.x, a.start.y, a.start.theta, a.start.v);
    s.boundary.goal = pose_state(a.goal.x, a.goal.y, a.goal.theta, a.goal.v);
    s.boundary.gears = guesses[i].gears;
    s.initial = guesses[i].params;
    if (a.start.v == 0.0) {
      s.boundary.start_heading = a.start.theta;
      s.initial.launch_accel = 0.0;
    }
    if (a.goal.v == 0.0) {
      s.boundary.goal_heading = a.goal.theta;
      s.initial.arrival_accel = 0.0;
    }
    s.constraints = {
      SpeedLimit{a.kinematics.v_max}, AccelLimit{a.kinematics.a_max}, CurvatureLimit{curvature_limit(a.kinematics)}};
    if (!sc.obstacles.empty()) {
      s.constraints.push_back(ObstacleClearance{sc.obstacles, a.radius});
    }
    prob.agents.push_back(std::move(s));
  }
  return prob;
}

/// Terminal position and heading error; at rest the heading is the limit from the last regular sample.
inline GoalError goal_error(const AgentTrajectory & traj, const AgentSpec & a)
{
  const RefPoint end = detail::ref_at(traj, traj.total_duration(), a.kinematics);
  GoalError e;
  e.position = std::hypot(end.x(0) - a.goal.x, end.x(1) - a.goal.y);
  e.heading = std::abs(wrap_pi(end.x(2) - a.goal.theta));
  return e;
}

inline std::vector<AuditDisc> audit_obstacles(const Scenario & sc)
{
  std::vector<AuditDisc> out;
  for (const Circle & c : sc.obstacles) {
    out.push_back({c.center.x(), c.center.y(), c.radius});
  }
  return out;
}

/**
 * Front end, optimization, dense audit and goal check. Success means the
 * optimizer converged with every constraint met, the audit found no
 * contact and every agent ends within the search goal tolerance.
 * Failures are reported, not thrown.
 */
inline PlanOutcome plan_scenario(const Scenario & sc)
{
  PlanOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
  try {
    out.guesses = initial_guesses(sc);
    out.frontend_s = elapsed();
    const PlanningProblem prob = planning_problem(sc, out.guesses);
    {
      PlanningObjective seed(prob, sc.planner);
      std::vector<WaypointParams> init;
      for (const auto & a : prob.agents) {
        init.push_back(a.initial);
      }
      const Eigen::VectorXd x0 = seed.pack(init);
      out.initial_trajectories = seed.trajectories(x0);
      out.initial_effort = seed.breakdown(x0).effort;
    }
    out.result = optimize(prob, sc.planner);
    out.computation_s = elapsed();
  } catch (const Error & e) {
    out.computation_s = elapsed();
    out.failure = e.what();
    return out;
  }
  out.converged = out.result.converged;

  std::vector<double> radii;
  for (const AgentSpec & a : sc.agents) {
    radii.push_back(a.radius);
  }
  out.audit = audit_plan(out.result.trajectories, radii, audit_obstacles(sc));
  out.goals_reached = true;
  for (std::size_t i = 0; i < sc.agents.size(); ++i) {
    const GoalError e = goal_error(out.result.trajectories[i], sc.agents[i]);
    out.goal_errors.push_back(e);
    out.goals_reached =
      out.goals_reached && e.position <= sc.search.goal_tol_pos && e.heading <= sc.search.goal_tol_theta;
  }
  out.success = out.converged && out.audit.passed && out.goals_reached;
  if (!out.converged) {
    out.failure = "optimizer did not converge to a feasible plan";
  } else if (!out.audit.passed) {
    out.failure = "audit: " + out.audit.detail;
  } else if (!out.goals_reached) {
    out.failure = "an agent ends outside the goal tolerance";
  }
  return out;
}

struct MetricsSettings
{
  bool record_time{true};  // false writes computation_s as 0 so reruns are byte-identical
};

inline MetricsRow outcome_metrics(const Scenario & sc, const PlanOutcome & out, const MetricsSettings & ms = {})
{
  MetricsOptions opt;
  opt.fotp_weight = sc.fotp_weight;
  return compute_metrics(out.result.trajectories, out.success, ms.record_time ? out.computation_s : 0.0, opt);
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// trajectories.json: the scenario, planner diagnostics and one trajectory per agent.
inline nlohmann::json outcome_to_json(const Scenario & sc, const PlanOutcome & out)
{
  using nlohmann::json;
  json j;
  j["schema"] = kScenarioSchema;
  j["scenario"] = scenario_to_json(sc);
  json agents = json::array();
  for (const auto & t : out.result.trajectories) {
    agents.push_back(trajectory_to_json(t));
  }
  j["agents"] = agents;
  json rounds = json::array();
  for (const auto & r : out.result.rounds) {
    json v = json::object();
    for (int k = 0; k < kConstraintKinds; ++k) {
      v[detail::kKindNames[k]] = r.violation[k];
    }
    rounds.push_back({{"status", std::string(to_string(r.status))},
                      {"iterations", r.iterations},
                      {"stalled", r.stalled},
                      {"max_violation", v}});
  }
  j["planner"] = {
    {"success", out.success},
    {"converged", out.converged},
    {"goals_reached", out.goals_reached},
    {"audit_passed", out.audit.passed},
    {"failure", out.failure},
    {"rounds", rounds},
    {"initial_effort", out.initial_effort},
    {"final_effort", out.result.final_objective.effort},
  };
  return j;
}

struct LoadedPlan
{
  Scenario scenario;
  std::vector<AgentTrajectory> trajectories;
  bool success{false};
};

inline LoadedPlan plan_from_json(const nlohmann::json & j)
{
  LoadedPlan p;
  try {
    p.scenario = scenario_from_json(j.at("scenario"));
    for (const auto & a : j.at("agents")) {
      p.trajectories.push_back(trajectory_from_json(a));
    }
    p.success = j.at("planner").at("success").get<bool>();
  } catch (const nlohmann::json::exception & e) {
    throw InputError(std::string("trajectories json: ") + e.what());
  }
  if (p.trajectories.size() != p.scenario.agents.size()) {
    throw InputError("trajectories json: one trajectory per agent required");
  }
  return p;
}

inline constexpr const char * kIterlogHeader = "round,iteration,objective,grad_norm,step";

inline std::string iterlog_csv(const PlanOutcome & out)
{
  std::string s = std::string(kIterlogHeader) + "\n";
  std::size_t k = 0;
  for (std::size_t r = 0; r < out.result.rounds.size(); ++r) {
    const std::size_t n = out.result.rounds[r].objective_history.size();
    for (std::size_t i = 0; i < n && k < out.result.iteration_log.size(); ++i, ++k) {
      const LbfgsIteration & it = out.result.iteration_log[k];
      s += std::to_string(r) + ',' + std::to_string(it.iteration) + ',' + format_double(it.objective) + ',' +
           format_double(it.grad_norm) + ',' + format_double(it.step) + '\n';
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Closed loop over a whole plan
// ---------------------------------------------------------------------------

inline std::vector<SimLog> simulate_plan(
  const Scenario & sc, const std::vector<AgentTrajectory> & trajs, const SimOptions & opt = {})
{
  std::vector<SimLog> logs;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const KinematicParams & kin = sc.agents[i].kinematics;
    logs.push_back(simulate_agent(trajs[i], kin, sc.tracking.for_agent(kin), opt));
  }
  return logs;
}

// ---------------------------------------------------------------------------
// Parallel batches
// ---------------------------------------------------------------------------

/**
 * Runs jobs 0..n-1 on up to `threads` workers and returns results in job
 * order. Each job owns its whole pipeline; nothing is shared but the index.
 */
template <typename R>
std::vector<R> run_batch(std::size_t n, const std::function<R(std::size_t)> & job, unsigned threads = 0)
{
  if (threads == 0) {
    threads = std::max(1u, std::thread::hardware_concurrency());
  }
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n, 1)));
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out[i] = job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) {
    pool.emplace_back(worker);
  }
  worker();
  for (auto & th : pool) {
    th.join();
  }
  for (const auto & e : errors) {
    if (e) {
      std::rethrow_exception(e);
    }
  }
  return out;
}

struct SweepRow
{
  std::string scenario;
  double time_weight{0.0};
  MetricsRow metrics;
  std::string failure;
};

inline constexpr const char * kSweepHeader =
  "scenario,w_T,success,computation_s,mean_travel_s,longest_travel_s,avg_travel_distance_m,avg_accel_cost,"
  "fotp_cost_J";

/// Re-plans the scenario once per time weight; plan failures become success = 0 rows.
inline std::vector<SweepRow> sweep(
  const Scenario & sc, const std::vector<double> & weights, unsigned threads = 0, const MetricsSettings & ms = {})
{
  for (double w : weights) {
    if (!(w > 0.0)) {
      throw InputError("sweep: time weights must be positive");
    }
  }
  return run_batch<SweepRow>(
    weights.size(),
    [&](std::size_t i) {
      Scenario s = sc;
      s.planner.time_weight = weights[i];
      const PlanOutcome out = plan_scenario(s);
      return SweepRow{sc.name, weights[i], outcome_metrics(s, out, ms), out.failure};
    },
    threads);
}

inline std::string sweep_csv(const std::vector<SweepRow> & rows)
{
  std::string s = std::string(kSweepHeader) + "\n";
  for (const auto & r : rows) {
    s += r.scenario + ',' + format_double(r.time_weight) + ',' + metrics_csv_line(r.metrics) + '\n';
  }
  return s;
}

}  // namespace flatcar

#endif  // FLATCAR__HARNESS_HPP_
