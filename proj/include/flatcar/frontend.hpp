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

#ifndef FLATCAR__FRONTEND_HPP_
#define FLATCAR__FRONTEND_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <queue>
#include <string>
#include <unordered_map>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/parameterization.hpp"
#include "flatcar/penalty.hpp"
#include "flatcar/timewarp.hpp"
#include "json.hpp"

namespace flatcar
{

struct Bounds
{
  double xmin{0.0};
  double xmax{0.0};
  double ymin{0.0};
  double ymax{0.0};

  bool contains(double x, double y) const { return x >= xmin && x <= xmax && y >= ymin && y <= ymax; }
};

/// Occupancy grid of obstacle circles inflated by the robot radius. A cell
/// is occupied when its center lies within an inflated circle; everything
/// outside the bounds reads as occupied.
class GridMap
{
public:
  GridMap(const Bounds & bounds, double resolution, const std::vector<Circle> & circles, double robot_radius)
  : bounds_(bounds), resolution_(resolution), circles_(circles), inflation_(robot_radius)
  {
    if (!(resolution > 0.0) || !(bounds.xmax > bounds.xmin) || !(bounds.ymax > bounds.ymin)) {
      throw DomainError("grid map: need positive resolution and nonempty bounds");
    }
    if (!(robot_radius >= 0.0)) {
      throw DomainError("grid map: robot radius must be non-negative");
    }
    nx_ = static_cast<int>(std::ceil((bounds.xmax - bounds.xmin) / resolution));
    ny_ = static_cast<int>(std::ceil((bounds.ymax - bounds.ymin) / resolution));
    cells_.assign(static_cast<std::size_t>(nx_) * ny_, 0);
    for (const Circle & c : circles) {
      const double r = c.radius + robot_radius;
      const int ix0 = std::max(0, cell_x(c.center.x() - r) - 1);
      const int ix1 = std::min(nx_ - 1, cell_x(c.center.x() + r) + 1);
      const int iy0 = std::max(0, cell_y(c.center.y() - r) - 1);
      const int iy1 = std::min(ny_ - 1, cell_y(c.center.y() + r) + 1);
      for (int iy = iy0; iy <= iy1; ++iy) {
        for (int ix = ix0; ix <= ix1; ++ix) {
          if ((cell_center(ix, iy) - c.center).norm() <= r) {
            cells_[index(ix, iy)] = 1;
          }
        }
      }
    }
  }

  const Bounds & bounds() const { return bounds_; }
  double resolution() const { return resolution_; }
  int width() const { return nx_; }
  int height() const { return ny_; }
  const std::vector<Circle> & circles() const { return circles_; }
  double inflation() const { return inflation_; }

  int cell_x(double x) const { return static_cast<int>(std::floor((x - bounds_.xmin) / resolution_)); }
  int cell_y(double y) const { return static_cast<int>(std::floor((y - bounds_.ymin) / resolution_)); }

  Eigen::Vector2d cell_center(int ix, int iy) const
  {
    return {bounds_.xmin + (ix + 0.5) * resolution_, bounds_.ymin + (iy + 0.5) * resolution_};
  }

  bool cell_occupied(int ix, int iy) const
  {
    if (ix < 0 || iy < 0 || ix >= nx_ || iy >= ny_) {
      return true;
    }
    return cells_[index(ix, iy)] != 0;
  }

  bool occupied(double x, double y) const
  {
    if (!bounds_.contains(x, y)) {
      return true;
    }
    return cell_occupied(std::min(cell_x(x), nx_ - 1), std::min(cell_y(y), ny_ - 1));
  }

private:
  std::size_t index(int ix, int iy) const { return static_cast<std::size_t>(iy) * nx_ + ix; }

  Bounds bounds_;
  double resolution_;
  std::vector<Circle> circles_;
  double inflation_;
  int nx_{0};
  int ny_{0};
  std::vector<std::uint8_t> cells_;
};

struct PathPose
{
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  Gear dir{Gear::kForward};  // direction of the motion that reached this pose
};

using CoarsePath = std::vector<PathPose>;

struct SearchParams
{
  // Arc length of one motion primitive. Must exceed the cell diagonal so a
  // primitive always leaves its cell, and should keep the heading change of a
  // full-lock primitive below twice the heading tolerance.
  double step_length{0.22};
  double reverse_penalty{2.0};
  double switch_penalty{5.0};
  double goal_tol_pos{0.2};
  double goal_tol_theta{10.0 * std::numbers::pi / 180.0};
  int theta_bins{72};
  bool allow_reverse{true};
  int max_expansions{400000};

  void validate(double resolution) const
  {
    if (!(step_length > std::sqrt(2.0) * resolution)) {
      throw DomainError("search: step length must exceed the cell diagonal");
    }
    if (!(reverse_penalty >= 1.0) || !(switch_penalty >= 0.0) || !(goal_tol_pos > 0.0) || !(goal_tol_theta > 0.0) ||
        theta_bins < 4 || max_expansions < 1) {
      throw DomainError("search: invalid parameters");
    }
  }
};

inline double wrap_angle(double a)
{
  a = std::remainder(a, 2.0 * std::numbers::pi);
  return a <= -std::numbers::pi ? a + 2.0 * std::numbers::pi : a;
}

namespace detail
{

struct SearchNode
{
  PathPose pose;
  double g;
  int parent;
};

struct OpenEntry
{
  double f;
  double h;
  std::uint64_t order;
  int node;

  // Min-heap on (f, h, insertion order).
  bool operator<(const OpenEntry & o) const
  {
    if (f != o.f) {
      return f > o.f;
    }
    if (h != o.h) {
      return h > o.h;
    }
    return order > o.order;
  }
};

// Pose after driving `length` along a constant-curvature arc.
inline PathPose drive(const PathPose & p, double length, double curvature, Gear dir)
{
  const double s = sign(dir) * length;
  PathPose out;
  out.dir = dir;
  if (std::abs(curvature) < 1e-12) {
    out.x = p.x + s * std::cos(p.theta);
    out.y = p.y + s * std::sin(p.theta);
    out.theta = p.theta;
  } else {
    const double dth = s * curvature;
    out.theta = p.theta + dth;
    out.x = p.x + (std::sin(out.theta) - std::sin(p.theta)) / curvature;
    out.y = p.y - (std::cos(out.theta) - std::cos(p.theta)) / curvature;
  }
  out.theta = wrap_angle(out.theta);
  return out;
}

}  // namespace detail

/**
 * Hybrid-A* over (x, y, theta, direction) with three full-lock/straight
 * primitives per direction. The heuristic is the larger of the Euclidean
 * distance to the goal disc and the arc needed to turn within the heading
 * tolerance at minimum radius; both are admissible since every primitive
 * costs at least its length.
 */
inline CoarsePath search(
  const PathPose & start, const PathPose & goal, const GridMap & map, const KinematicParams & car,
  const SearchParams & params = {})
{
  params.validate(map.resolution());
  car.validate();
  if (map.occupied(start.x, start.y)) {
    throw NoPathError("search: start pose is in collision");
  }
  if (map.occupied(goal.x, goal.y)) {
    throw NoPathError("search: goal pose is in collision");
  }

  const double kappa = std::tan(car.phi_max) / car.wheelbase;
  const double r_min = 1.0 / kappa;
  const double bin_width = 2.0 * std::numbers::pi / params.theta_bins;
  const std::vector<Gear> dirs = params.allow_reverse ? std::vector<Gear>{Gear::kForward, Gear::kReverse}
                                                      : std::vector<Gear>{Gear::kForward};

  auto heuristic = [&](const PathPose & p) {
    const double dist = std::hypot(goal.x - p.x, goal.y - p.y) - params.goal_tol_pos;
    const double turn = std::abs(wrap_angle(goal.theta - p.theta)) - params.goal_tol_theta;
    return std::max({0.0, dist, r_min * turn});
  };
  auto at_goal = [&](const PathPose & p) {
    return std::hypot(goal.x - p.x, goal.y - p.y) <= params.goal_tol_pos &&
           std::abs(wrap_angle(goal.theta - p.theta)) <= params.goal_tol_theta;
  };
  auto key_of = [&](const PathPose & p) {
    const int ix = map.cell_x(p.x);
    const int iy = map.cell_y(p.y);
    int it = static_cast<int>(std::floor((p.theta + std::numbers::pi) / bin_width));
    it = std::clamp(it, 0, params.theta_bins - 1);
    const int d = p.dir == Gear::kForward ? 0 : 1;
    return ((static_cast<std::int64_t>(iy) * map.width() + ix) * params.theta_bins + it) * 2 + d;
  };
  auto collision_free = [&](const PathPose & from, double curvature, Gear dir) {
    const int samples = std::max(2, static_cast<int>(std::ceil(params.step_length / (0.5 * map.resolution()))));
    for (int k = 1; k <= samples; ++k) {
      const PathPose p = detail::drive(from, params.step_length * k / samples, curvature, dir);
      if (map.occupied(p.x, p.y)) {
        return false;
      }
    }
    return true;
  };

  std::vector<detail::SearchNode> nodes;
  std::unordered_map<std::int64_t, int> best;  // state key -> node index
  std::priority_queue<detail::OpenEntry> open;
  std::uint64_t order = 0;

  nodes.push_back({start, 0.0, -1});
  best.emplace(key_of(start), 0);
  open.push({heuristic(start), heuristic(start), order++, 0});

  int expansions = 0;
  while (!open.empty()) {
    const detail::OpenEntry top = open.top();
    open.pop();
    const detail::SearchNode cur = nodes[top.node];
    if (best.at(key_of(cur.pose)) != top.node) {
      continue;  // superseded by a cheaper node in the same cell
    }
    if (at_goal(cur.pose)) {
      CoarsePath path;
      for (int i = top.node; i >= 0; i = nodes[i].parent) {
        path.push_back(nodes[i].pose);
      }
      std::reverse(path.begin(), path.end());
      if (path.size() > 1) {
        path.front().dir = path[1].dir;
      }
      return path;
    }
    if (++expansions > params.max_expansions) {
      break;
    }
    for (Gear dir : dirs) {
      for (double steer : {-kappa, 0.0, kappa}) {
        if (!collision_free(cur.pose, steer, dir)) {
          continue;
        }
        PathPose next = detail::drive(cur.pose, params.step_length, steer, dir);
        double cost = params.step_length * (dir == Gear::kReverse ? params.reverse_penalty : 1.0);
        if (top.node != 0 && dir != cur.pose.dir) {
          cost += params.switch_penalty;
        }
        const double g = cur.g + cost;
        const std::int64_t key = key_of(next);
        auto it = best.find(key);
        if (it != best.end() && nodes[it->second].g <= g) {
          continue;
        }
        const int idx = static_cast<int>(nodes.size());
        nodes.push_back({next, g, top.node});
        if (it == best.end()) {
          best.emplace(key, idx);
        } else {
          it->second = idx;
        }
        const double h = heuristic(next);
        open.push({g + h, h, order++, idx});
      }
    }
  }
  throw NoPathError(
    expansions > params.max_expansions ? "search: expansion budget exhausted" : "search: open set exhausted");
}

/// Initial guess for one agent, ready to seed the optimizer.
struct InitialGuess
{
  std::vector<Gear> gears;
  WaypointParams params;
  std::vector<double> run_lengths;
  std::vector<std::string> warnings;
};

struct SegmentParams
{
  double target_piece_length{1.0};
  double v_guess{1.0};  // callers usually pass half the speed limit

  void validate() const
  {
    if (!(target_piece_length > 0.0) || !(v_guess > 0.0)) {
      throw DomainError("segment_path: parameters must be positive");
    }
  }
};

inline double path_length(const CoarsePath & path)
{
  double len = 0.0;
  for (std::size_t i = 1; i < path.size(); ++i) {
    len += std::hypot(path[i].x - path[i - 1].x, path[i].y - path[i - 1].y);
  }
  return len;
}

namespace detail
{

// Point at arc length s along the polyline path[first..last].
inline Eigen::Vector2d point_at(const CoarsePath & path, std::size_t first, std::size_t last, double s)
{
  for (std::size_t i = first + 1; i <= last; ++i) {
    const Eigen::Vector2d a(path[i - 1].x, path[i - 1].y);
    const Eigen::Vector2d b(path[i].x, path[i].y);
    const double len = (b - a).norm();
    if (s <= len || i == last) {
      return len > 0.0 ? Eigen::Vector2d(a + (b - a) * std::min(1.0, s / len)) : b;
    }
    s -= len;
  }
  return {path[last].x, path[last].y};
}

}  // namespace detail

/**
 * Splits a coarse path at its direction changes into segments, resamples
 * interior waypoints uniformly by arc length and guesses piece durations from
 * a nominal speed. Zero-length runs are dropped with a warning.
 */
inline InitialGuess segment_path(const CoarsePath & path, const SegmentParams & params = {})
{
  params.validate();
  if (path.empty()) {
    throw InputError("segment_path: empty path");
  }
  struct Run
  {
    std::size_t first;
    std::size_t last;
    Gear dir;
    double length;
  };
  auto run_length = [&](std::size_t first, std::size_t last) {
    double len = 0.0;
    for (std::size_t k = first + 1; k <= last; ++k) {
      len += std::hypot(path[k].x - path[k - 1].x, path[k].y - path[k - 1].y);
    }
    return len;
  };
  std::vector<Run> runs;
  const std::size_t n = path.size();
  std::size_t first = 0;
  Gear dir = n > 1 ? path[1].dir : path[0].dir;
  for (std::size_t i = 2; i < n; ++i) {
    if (path[i].dir != dir) {
      runs.push_back({first, i - 1, dir, run_length(first, i - 1)});
      first = i - 1;
      dir = path[i].dir;
    }
  }
  runs.push_back({first, n - 1, dir, run_length(first, n - 1)});

  InitialGuess guess;
  std::vector<Run> kept;
  for (const Run & r : runs) {
    if (r.length <= 1e-9) {
      guess.warnings.push_back("segment_path: dropped zero-length run at pose " + std::to_string(r.first));
      continue;
    }
    if (!kept.empty() && kept.back().dir == r.dir) {
      // Dropping a run can leave two neighbours with the same direction.
      kept.back().last = r.last;
      kept.back().length += r.length;
      continue;
    }
    kept.push_back(r);
  }
  if (kept.empty()) {
    guess.warnings.push_back("segment_path: path has no length; using a single one-piece forward segment");
    guess.gears = {path.front().dir};
    guess.params.waypoints = {Eigen::Matrix2Xd(2, 0)};
    guess.params.tau = {virtual_time(1.0)};
    guess.run_lengths = {0.0};
    return guess;
  }

  for (std::size_t r = 0; r < kept.size(); ++r) {
    const Run & run = kept[r];
    const int m = std::max(1, static_cast<int>(std::ceil(run.length / params.target_piece_length - 1e-9)));
    Eigen::Matrix2Xd q(2, m - 1);
    for (int i = 1; i < m; ++i) {
      q.col(i - 1) = detail::point_at(path, run.first, run.last, run.length * i / m);
    }
    guess.gears.push_back(run.dir);
    guess.params.waypoints.push_back(q);
    guess.params.tau.push_back(virtual_time(run.length / (m * params.v_guess)));
    guess.run_lengths.push_back(run.length);
    if (r + 1 < kept.size()) {
      const PathPose & s = path[run.last];
      guess.params.shifts.push_back({s.x, s.y, s.theta, 0.0});
    }
  }
  return guess;
}

/// Debug dump of a coarse path as a polyline with direction labels.
inline nlohmann::json path_to_json(const CoarsePath & path)
{
  nlohmann::json points = nlohmann::json::array();
  for (const PathPose & p : path) {
    points.push_back({{"x", p.x}, {"y", p.y}, {"theta", p.theta}, {"dir", static_cast<int>(p.dir)}});
  }
  return {{"length", path_length(path)}, {"points", std::move(points)}};
}

}  // namespace flatcar

#endif  // FLATCAR__FRONTEND_HPP_
