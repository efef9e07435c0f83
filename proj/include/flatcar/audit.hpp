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


#ifndef FLATCAR__AUDIT_HPP_
#define FLATCAR__AUDIT_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "flatcar/trajectory.hpp"

namespace flatcar
{

struct AuditDisc
{
  double x;
  double y;
  double r;
};

struct AuditReport
{
  bool passed{true};
  double min_obstacle_gap{std::numeric_limits<double>::infinity()};  // surface distance, negative on overlap
  double min_agent_gap{std::numeric_limits<double>::infinity()};
  double first_violation_t{std::numeric_limits<double>::quiet_NaN()};
  std::string detail;
  long samples{0};
};

/**
 * Dense collision audit: every agent's disc is placed at its position every
 * `step` seconds on a common clock (agents that have arrived stay put) and
 * checked exactly against every obstacle disc and every other agent. Plain
 * center distances against radius sums; nothing here is shared with the
 * optimizer's constraint code.
 */
inline AuditReport audit_plan(
  const std::vector<AgentTrajectory> & agents, const std::vector<double> & agent_radius,
  const std::vector<AuditDisc> & obstacles, double step = 1e-3)
{
  AuditReport rep;
  const std::size_t n = agents.size();
  double horizon = 0.0;
  for (const auto & a : agents) {
    horizon = std::max(horizon, a.total_duration());
  }
  const long count = static_cast<long>(std::ceil(horizon / step));
  std::vector<Eigen::Vector2d> pos(n);
  for (long k = 0; k <= count; ++k) {
    const double t = std::min(k * step, horizon);
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = agents[i].eval(std::min(t, agents[i].total_duration()), 0);
    }
    ++rep.samples;
    for (std::size_t i = 0; i < n; ++i) {
      for (const AuditDisc & o : obstacles) {
        const double gap = std::hypot(pos[i].x() - o.x, pos[i].y() - o.y) - (o.r + agent_radius[i]);
        rep.min_obstacle_gap = std::min(rep.min_obstacle_gap, gap);
        if (gap < 0.0 && rep.passed) {
          rep.passed = false;
          rep.first_violation_t = t;
          rep.detail = "agent " + std::to_string(i) + " hits an obstacle";
        }
      }
      for (std::size_t j = i + 1; j < n; ++j) {
        const double gap = (pos[i] - pos[j]).norm() - (agent_radius[i] + agent_radius[j]);
        rep.min_agent_gap = std::min(rep.min_agent_gap, gap);
        if (gap < 0.0 && rep.passed) {
          rep.passed = false;
          rep.first_violation_t = t;
          rep.detail = "agents " + std::to_string(i) + " and " + std::to_string(j) + " collide";
        }
      }
    }
  }
  return rep;
}

}  // namespace flatcar

#endif  // FLATCAR__AUDIT_HPP_
