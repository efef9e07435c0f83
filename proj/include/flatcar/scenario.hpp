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


#ifndef FLATCAR__SCENARIO_HPP_
#define FLATCAR__SCENARIO_HPP_

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/frontend.hpp"
#include "flatcar/mpc.hpp"
#include "flatcar/penalty.hpp"
#include "flatcar/planner.hpp"
#include "json.hpp"

namespace flatcar
{

inline constexpr int kScenarioSchema = 1;

struct Pose
{
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  double v{0.0};  // signed speed along the heading
};

struct AgentSpec
{
  KinematicParams kinematics;
  double radius{0.4};
  Pose start;
  Pose goal;
};

/// MPC settings shared by every agent; limits and wheelbase come from each agent's kinematics.
struct TrackingConfig
{
  int horizon{20};
  double dt{0.05};
  Eigen::Vector4d q_x{10.0, 10.0, 1.0, 1.0};
  Eigen::Vector2d q_u{0.1, 0.1};
  Eigen::Vector2d r{0.01, 0.01};
  Eigen::Vector2d r_d{0.1, 0.1};
  Eigen::Vector2d du_max{0.5, 0.2};

  MpcConfig for_agent(const KinematicParams & k) const
  {
    MpcConfig c = MpcConfig::for_vehicle(k);
    c.horizon = horizon;
    c.dt = dt;
    c.q_x = q_x;
    c.q_u = q_u;
    c.r = r;
    c.r_d = r_d;
    c.du_max = du_max;
    return c;
  }
};

struct Scenario
{
  std::string name{"unnamed"};
  std::uint64_t seed{0};
  Bounds bounds{0.0, 20.0, 0.0, 20.0};
  double resolution{0.15};
  std::vector<Circle> obstacles;
  std::vector<AgentSpec> agents;
  PenaltyConfig penalty;
  PlannerConfig planner;
  SearchParams search;
  double piece_length{1.0};
  TrackingConfig tracking;
  double fotp_weight{0.01};

  /// Separation required between two agents' rear-axle discs.
  double mutual_separation() const
  {
    double r = 0.0;
    for (const auto & a : agents) {
      r = std::max(r, a.radius);
    }
    return 2.0 * r;
  }

  void validate() const
  {
    if (agents.empty()) {
      throw InputError("scenario: at least one agent required");
    }
    if (!(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin) || !(resolution > 0.0)) {
      throw InputError("scenario: map bounds must be nonempty and the resolution positive");
    }
    for (const Circle & c : obstacles) {
      if (!c.center.allFinite() || !(c.radius > 0.0)) {
        throw InputError("scenario: obstacles need finite centers and positive radii");
      }
    }
    for (std::size_t i = 0; i < agents.size(); ++i) {
      const AgentSpec & a = agents[i];
      try {
        a.kinematics.validate();
      } catch (const DomainError & e) {
        throw InputError("scenario: agent " + std::to_string(i) + ": " + e.what());
      }
      if (!(a.radius > 0.0)) {
        throw InputError("scenario: agent radius must be positive");
      }
      for (const Pose * p : {&a.start, &a.goal}) {
        if (!std::isfinite(p->x) || !std::isfinite(p->y) || !std::isfinite(p->theta) || !std::isfinite(p->v)) {
          throw InputError("scenario: agent poses must be finite");
        }
        if (!bounds.contains(p->x, p->y)) {
          throw InputError("scenario: agent " + std::to_string(i) + " has a pose outside the map");
        }
        for (const Circle & c : obstacles) {
          if ((Eigen::Vector2d(p->x, p->y) - c.center).norm() < c.radius + a.radius) {
            throw InputError("scenario: agent " + std::to_string(i) + " starts or ends in collision");
          }
        }
      }
    }
    if (!(piece_length > 0.0) || !(fotp_weight >= 0.0)) {
      throw InputError("scenario: piece length must be positive and the fotp weight non-negative");
    }
    try {
      penalty.validate();
      planner.validate();
      search.validate(resolution);
      tracking.for_agent(agents.front().kinematics).validate();
    } catch (const DomainError & e) {
      throw InputError(std::string("scenario: ") + e.what());
    }
  }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

namespace detail
{

using nlohmann::json;

inline const char * const kKindNames[kConstraintKinds] = {"speed", "accel", "curvature", "obstacle", "mutual"};

template <typename T>
void read_opt(const json & j, const char * key, T & out)
{
  if (j.contains(key)) {
    out = j.at(key).get<T>();
  }
}

template <int N>
void read_vec(const json & j, const char * key, Eigen::Matrix<double, N, 1> & out)
{
  if (!j.contains(key)) {
    return;
  }
  const auto & a = j.at(key);
  if (!a.is_array() || static_cast<int>(a.size()) != N) {
    throw InputError(std::string("scenario: '") + key + "' needs " + std::to_string(N) + " numbers");
  }
  for (int i = 0; i < N; ++i) {
    out(i) = a.at(i).get<double>();
  }
}

template <int N>
json write_vec(const Eigen::Matrix<double, N, 1> & v)
{
  json a = json::array();
  for (int i = 0; i < N; ++i) {
    a.push_back(v(i));
  }
  return a;
}

inline Pose pose_from_json(const json & j)
{
  Pose p;
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
  p.theta = j.at("theta").get<double>();
  read_opt(j, "v", p.v);
  return p;
}

inline json pose_to_json(const Pose & p) { return {{"x", p.x}, {"y", p.y}, {"theta", p.theta}, {"v", p.v}}; }

// 1-based line and column of a byte offset.
inline std::pair<int, int> line_column(const std::string & text, std::size_t offset)
{
  int line = 1;
  int col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace detail

inline nlohmann::json scenario_to_json(const Scenario & s)
{
  using nlohmann::json;
  json j;
  j["schema"] = kScenarioSchema;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["map"] = {{"bounds", {s.bounds.xmin, s.bounds.xmax, s.bounds.ymin, s.bounds.ymax}}, {"resolution", s.resolution}};
  json obs = json::array();
  for (const Circle & c : s.obstacles) {
    obs.push_back({{"x", c.center.x()}, {"y", c.center.y()}, {"r", c.radius}});
  }
  j["obstacles"] = obs;
  json agents = json::array();
  for (const AgentSpec & a : s.agents) {
    const KinematicParams & k = a.kinematics;
    agents.push_back({
      {"start", detail::pose_to_json(a.start)},
      {"goal", detail::pose_to_json(a.goal)},
      {"radius", a.radius},
      {"kinematics", {{"wheelbase", k.wheelbase}, {"v_max", k.v_max}, {"a_max", k.a_max}, {"phi_max", k.phi_max}}},
    });
  }
  j["agents"] = agents;
  json weights;
  for (int k = 0; k < kConstraintKinds; ++k) {
    weights[detail::kKindNames[k]] = s.penalty.weights.w[k];
  }
  j["penalty"] = {
    {"weights", weights}, {"a0", s.penalty.a0}, {"samples_per_piece", s.penalty.samples_per_piece}};
  const PlannerConfig & p = s.planner;
  j["planner"] = {
    {"time_weight", p.time_weight},
    {"memory", p.memory},
    {"grad_tol", p.grad_tol},
    {"max_iterations", p.max_iterations},
    {"penalty_rounds", p.penalty_rounds},
    {"weight_multiplier", p.weight_multiplier},
    {"violation_tol", p.violation_tol},
    {"clearance_margin", p.clearance_margin},
    {"limit_margin", p.limit_margin},
    {"precondition_refresh", p.precondition_refresh},
    {"stall_rel_tol", p.stall_rel_tol},
  };
  j["frontend"] = {
    {"step_length", s.search.step_length},
    {"reverse_penalty", s.search.reverse_penalty},
    {"switch_penalty", s.search.switch_penalty},
    {"goal_tol_pos", s.search.goal_tol_pos},
    {"goal_tol_theta", s.search.goal_tol_theta},
    {"theta_bins", s.search.theta_bins},
    {"max_expansions", s.search.max_expansions},
    {"piece_length", s.piece_length},
  };
  const TrackingConfig & t = s.tracking;
  j["mpc"] = {
    {"horizon", t.horizon},
    {"dt", t.dt},
    {"q_x", detail::write_vec<4>(t.q_x)},
    {"q_u", detail::write_vec<2>(t.q_u)},
    {"r", detail::write_vec<2>(t.r)},
    {"r_d", detail::write_vec<2>(t.r_d)},
    {"du_max", detail::write_vec<2>(t.du_max)},
  };
  j["metrics"] = {{"fotp_weight", s.fotp_weight}};
  return j;
}

/// Reads a schema-1 scenario. Every block other than map and agents is optional.
inline Scenario scenario_from_json(const nlohmann::json & j)
{
  using detail::read_opt;
  Scenario s;
  try {
    const int schema = j.at("schema").get<int>();
    if (schema != kScenarioSchema) {
      throw InputError("scenario: unsupported schema " + std::to_string(schema));
    }
    read_opt(j, "name", s.name);
    read_opt(j, "seed", s.seed);
    const auto & map = j.at("map");
    const auto & b = map.at("bounds");
    if (!b.is_array() || b.size() != 4) {
      throw InputError("scenario: map.bounds needs [xmin, xmax, ymin, ymax]");
    }
    s.bounds = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    read_opt(map, "resolution", s.resolution);
    if (j.contains("obstacles")) {
      for (const auto & o : j.at("obstacles")) {
        s.obstacles.push_back({{o.at("x").get<double>(), o.at("y").get<double>()}, o.at("r").get<double>()});
      }
    }
    for (const auto & ja : j.at("agents")) {
      AgentSpec a;
      a.start = detail::pose_from_json(ja.at("start"));
      a.goal = detail::pose_from_json(ja.at("goal"));
      read_opt(ja, "radius", a.radius);
      if (ja.contains("kinematics")) {
        const auto & k = ja.at("kinematics");
        read_opt(k, "wheelbase", a.kinematics.wheelbase);
        read_opt(k, "v_max", a.kinematics.v_max);
        read_opt(k, "a_max", a.kinematics.a_max);
        read_opt(k, "phi_max", a.kinematics.phi_max);
      }
      s.agents.push_back(a);
    }
    if (j.contains("penalty")) {
      const auto & p = j.at("penalty");
      if (p.contains("weights")) {
        for (int k = 0; k < kConstraintKinds; ++k) {
          read_opt(p.at("weights"), detail::kKindNames[k], s.penalty.weights.w[k]);
        }
      }
      read_opt(p, "a0", s.penalty.a0);
      read_opt(p, "samples_per_piece", s.penalty.samples_per_piece);
    }
    if (j.contains("planner")) {
      const auto & p = j.at("planner");
      PlannerConfig & c = s.planner;
      read_opt(p, "time_weight", c.time_weight);
      read_opt(p, "memory", c.memory);
      read_opt(p, "grad_tol", c.grad_tol);
      read_opt(p, "max_iterations", c.max_iterations);
      read_opt(p, "penalty_rounds", c.penalty_rounds);
      read_opt(p, "weight_multiplier", c.weight_multiplier);
      read_opt(p, "violation_tol", c.violation_tol);
      read_opt(p, "clearance_margin", c.clearance_margin);
      read_opt(p, "limit_margin", c.limit_margin);
      read_opt(p, "precondition_refresh", c.precondition_refresh);
      read_opt(p, "stall_rel_tol", c.stall_rel_tol);
    }
    if (j.contains("frontend")) {
      const auto & f = j.at("frontend");
      read_opt(f, "step_length", s.search.step_length);
      read_opt(f, "reverse_penalty", s.search.reverse_penalty);
      read_opt(f, "switch_penalty", s.search.switch_penalty);
      read_opt(f, "goal_tol_pos", s.search.goal_tol_pos);
      read_opt(f, "goal_tol_theta", s.search.goal_tol_theta);
      read_opt(f, "theta_bins", s.search.theta_bins);
      read_opt(f, "max_expansions", s.search.max_expansions);
      read_opt(f, "piece_length", s.piece_length);
    }
    if (j.contains("mpc")) {
      const auto & m = j.at("mpc");
      read_opt(m, "horizon", s.tracking.horizon);
      read_opt(m, "dt", s.tracking.dt);
      detail::read_vec<4>(m, "q_x", s.tracking.q_x);
      detail::read_vec<2>(m, "q_u", s.tracking.q_u);
      detail::read_vec<2>(m, "r", s.tracking.r);
      detail::read_vec<2>(m, "r_d", s.tracking.r_d);
      detail::read_vec<2>(m, "du_max", s.tracking.du_max);
    }
    if (j.contains("metrics")) {
      read_opt(j.at("metrics"), "fotp_weight", s.fotp_weight);
    }
  } catch (const nlohmann::json::exception & e) {
    throw InputError(std::string("scenario: ") + e.what());
  }
  s.validate();
  return s;
}

/// Parses scenario text; syntax errors report their line and column.
inline Scenario parse_scenario(const std::string & text)
{
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error & e) {
    const auto [line, col] = detail::line_column(text, e.byte == 0 ? 0 : e.byte - 1);
    std::ostringstream os;
    os << "scenario: malformed JSON at line " << line << ", column " << col << ": " << e.what();
    throw InputError(os.str());
  }
  return scenario_from_json(j);
}

inline Scenario load_scenario(const std::string & path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw InputError("scenario: cannot open '" + path + "'");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario(buf.str());
}

// ---------------------------------------------------------------------------
// Random scenarios
// ---------------------------------------------------------------------------

struct GeneratorParams
{
  int agents{4};
  int obstacles{6};
  double size{20.0};
  double obstacle_r_min{0.5};
  double obstacle_r_max{1.2};
  double border{1.5};            // keep poses this far inside the map
  double obstacle_clearance{0.5};  // beyond radius + agent radius
  double min_travel{8.0};
  double min_spacing{2.5};       // between any two starts, or any two goals
  int max_draws{100000};
};

/**
 * Seeded random scenario: circular obstacles with centers away from the
 * border, and rest-to-rest agents with random headings whose start and goal
 * poses are clear of every obstacle and of each other. The draw sequence
 * uses only the engine's raw output, so it is identical across standard
 * libraries.
 */
inline Scenario random_scenario(std::uint64_t seed, const GeneratorParams & g = {})
{
  std::mt19937_64 rng(seed);
  auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  auto between = [&](double lo, double hi) { return lo + (hi - lo) * unit(); };

  Scenario s;
  s.name = "random-" + std::to_string(seed);
  s.seed = seed;
  s.bounds = {0.0, g.size, 0.0, g.size};
  const double lo = 0.15 * g.size;
  const double hi = 0.85 * g.size;
  for (int i = 0; i < g.obstacles; ++i) {
    s.obstacles.push_back({{between(lo, hi), between(lo, hi)}, between(g.obstacle_r_min, g.obstacle_r_max)});
  }

  const double radius = AgentSpec{}.radius;
  auto clear = [&](double x, double y) {
    for (const Circle & c : s.obstacles) {
      if ((Eigen::Vector2d(x, y) - c.center).norm() < c.radius + radius + g.obstacle_clearance) {
        return false;
      }
    }
    return true;
  };
  auto spaced = [&](double x, double y, bool start) {
    for (const AgentSpec & a : s.agents) {
      const Pose & p = start ? a.start : a.goal;
      if (std::hypot(p.x - x, p.y - y) < g.min_spacing) {
        return false;
      }
    }
    return true;
  };

  int draws = 0;
  while (static_cast<int>(s.agents.size()) < g.agents) {
    if (++draws > g.max_draws) {
      throw InputError("random_scenario: could not place every agent");
    }
    AgentSpec a;
    a.radius = radius;
    a.start = {between(g.border, g.size - g.border), between(g.border, g.size - g.border),
               between(-std::numbers::pi, std::numbers::pi), 0.0};
    a.goal = {between(g.border, g.size - g.border), between(g.border, g.size - g.border),
              between(-std::numbers::pi, std::numbers::pi), 0.0};
    if (std::hypot(a.start.x - a.goal.x, a.start.y - a.goal.y) < g.min_travel) {
      continue;
    }
    if (!clear(a.start.x, a.start.y) || !clear(a.goal.x, a.goal.y)) {
      continue;
    }
    if (!spaced(a.start.x, a.start.y, true) || !spaced(a.goal.x, a.goal.y, false)) {
      continue;
    }
    s.agents.push_back(a);
  }
  s.validate();
  return s;
}

}  // namespace flatcar

#endif  // FLATCAR__SCENARIO_HPP_
