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

#ifndef FLATCAR__PARAMETERIZATION_HPP_
#define FLATCAR__PARAMETERIZATION_HPP_

#include <Eigen/Core>

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/timewarp.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

/**
 * Pose of a gear-shift (cusp) point plus the acceleration magnitude through it.
 *
 * The flat velocity is zero at a cusp. The flat acceleration is aligned with
 * the heading, -eta_before * cusp_accel * (cos theta, sin theta), so the car
 * keeps its heading across the direction change.
 */
struct ShiftPose
{
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  double cusp_accel{0.0};

  bool operator==(const ShiftPose &) const = default;
};

inline FlatState shift_state(const ShiftPose & pose, Gear gear_before)
{
  FlatState s;
  s.pos = {pose.x, pose.y};
  s.acc = -sign(gear_before) * pose.cusp_accel * Eigen::Vector2d(std::cos(pose.theta), std::sin(pose.theta));
  return s;
}

/// Decision variables of one agent: interior waypoints and virtual time per
/// segment, and one shift pose per gear change. A start or goal at rest may
/// carry an acceleration magnitude along its heading (see AgentBoundary).
/// Also used as the gradient container with the same shape.
struct WaypointParams
{
  std::vector<Eigen::Matrix2Xd> waypoints;
  std::vector<double> tau;
  std::vector<ShiftPose> shifts;
  // Virtual magnitudes of the boundary accelerations; see AgentBoundary.
  std::optional<double> launch_accel;
  std::optional<double> arrival_accel;

  int segment_count() const { return static_cast<int>(tau.size()); }

  int dimension() const
  {
    int n = 0;
    for (const auto & w : waypoints) {
      n += static_cast<int>(w.size());
    }
    return n + static_cast<int>(tau.size()) + 4 * static_cast<int>(shifts.size()) + (launch_accel ? 1 : 0) +
           (arrival_accel ? 1 : 0);
  }

  void validate(const std::vector<int> & piece_counts) const
  {
    if (waypoints.size() != tau.size() || piece_counts.size() != tau.size()) {
      throw DomainError("waypoint parameters: segment count mismatch");
    }
    if (!tau.empty() && shifts.size() + 1 != tau.size()) {
      throw DomainError("waypoint parameters: need one shift pose per gear change");
    }
    for (std::size_t s = 0; s < tau.size(); ++s) {
      if (waypoints[s].cols() + 1 != piece_counts[s]) {
        throw DomainError("waypoint parameters: waypoint count does not match piece count");
      }
    }
  }

  std::vector<int> piece_counts() const
  {
    std::vector<int> m;
    m.reserve(waypoints.size());
    for (const auto & w : waypoints) {
      m.push_back(static_cast<int>(w.cols()) + 1);
    }
    return m;
  }

  /// Writes the variables as [q_0, tau_0, q_1, tau_1, ..., shifts, launch,
  /// arrival] into out.
  void pack(Eigen::Ref<Eigen::VectorXd> out) const
  {
    Eigen::Index k = 0;
    for (std::size_t s = 0; s < tau.size(); ++s) {
      const Eigen::Index len = waypoints[s].size();
      out.segment(k, len) = Eigen::Map<const Eigen::VectorXd>(waypoints[s].data(), len);
      k += len;
      out(k++) = tau[s];
    }
    for (const auto & p : shifts) {
      out(k++) = p.x;
      out(k++) = p.y;
      out(k++) = p.theta;
      out(k++) = p.cusp_accel;
    }
    if (launch_accel) {
      out(k++) = *launch_accel;
    }
    if (arrival_accel) {
      out(k++) = *arrival_accel;
    }
  }

  /// Inverse of pack(); the shape must already be set.
  void unpack(const Eigen::Ref<const Eigen::VectorXd> & in)
  {
    Eigen::Index k = 0;
    for (std::size_t s = 0; s < tau.size(); ++s) {
      const Eigen::Index len = waypoints[s].size();
      Eigen::Map<Eigen::VectorXd>(waypoints[s].data(), len) = in.segment(k, len);
      k += len;
      tau[s] = in(k++);
    }
    for (auto & p : shifts) {
      p.x = in(k++);
      p.y = in(k++);
      p.theta = in(k++);
      p.cusp_accel = in(k++);
    }
    if (launch_accel) {
      launch_accel = in(k++);
    }
    if (arrival_accel) {
      arrival_accel = in(k++);
    }
  }

  static WaypointParams zeros_like(const WaypointParams & shape)
  {
    WaypointParams z = shape;
    for (auto & w : z.waypoints) {
      w.setZero();
    }
    for (auto & t : z.tau) {
      t = 0.0;
    }
    for (auto & p : z.shifts) {
      p = ShiftPose{};
    }
    if (z.launch_accel) {
      z.launch_accel = 0.0;
    }
    if (z.arrival_accel) {
      z.arrival_accel = 0.0;
    }
    return z;
  }
};

using WaypointGradient = WaypointParams;

/**
 * Fixed data of one agent's trajectory: terminal flat states and the gear of
 * each segment.
 *
 * A heading at a rest state cannot be read off a zero velocity. When one is
 * given, the flat acceleration there is tied to it the same way as at a gear
 * shift: +eta * a * (cos, sin) at the start and -eta * a * (cos, sin) at the
 * goal. The magnitude a is the time map of an unconstrained decision
 * variable, so it stays positive and the car leaves and arrives along the
 * stated heading rather than its reverse.
 */
struct AgentBoundary
{
  FlatState start;
  FlatState goal;
  std::vector<Gear> gears;
  std::optional<double> start_heading;
  std::optional<double> goal_heading;
};

inline Eigen::Vector2d heading_vector(double theta) { return {std::cos(theta), std::sin(theta)}; }

/// Flat state of a car at rest or cruising with the given pose and signed speed.
inline FlatState pose_state(double x, double y, double theta, double v)
{
  FlatState s;
  s.pos = {x, y};
  s.vel = v * Eigen::Vector2d(std::cos(theta), std::sin(theta));
  return s;
}

/**
 * Builds one agent's trajectory from its decision variables and maps
 * coefficient/duration gradients back onto them. Keeps one solver workspace
 * per segment; propagate_gradient must be called with the parameters of the
 * most recent build.
 */
class TrajectoryBuilder
{
public:
  TrajectoryBuilder() = default;
  explicit TrajectoryBuilder(AgentBoundary boundary) : boundary_(std::move(boundary)) {}

  const AgentBoundary & boundary() const { return boundary_; }

  AgentTrajectory build(const WaypointParams & params)
  {
    const int ns = params.segment_count();
    if (ns != static_cast<int>(boundary_.gears.size())) {
      throw DomainError("build: segment count does not match the gear sequence");
    }
    params.validate(params.piece_counts());
    if (params.launch_accel.has_value() != boundary_.start_heading.has_value() ||
        params.arrival_accel.has_value() != boundary_.goal_heading.has_value()) {
      throw DomainError("build: boundary acceleration variables do not match the locked headings");
    }
    solvers_.resize(ns);
    std::vector<Segment> segments(ns);
    for (int s = 0; s < ns; ++s) {
      const FlatState head = s == 0 ? start_state(params) : shift_state(params.shifts[s - 1], boundary_.gears[s - 1]);
      const FlatState tail = s + 1 == ns ? goal_state(params) : shift_state(params.shifts[s], boundary_.gears[s]);
      solvers_[s].solve(head, tail, params.waypoints[s], real_time(params.tau[s]));
      segments[s].eta = boundary_.gears[s];
      segments[s].pieces = solvers_[s].pieces();
    }
    return AgentTrajectory(std::move(segments));
  }

  WaypointGradient propagate_gradient(const TrajectoryGradient & grad, const WaypointParams & params) const
  {
    const int ns = params.segment_count();
    if (static_cast<int>(solvers_.size()) != ns || static_cast<int>(grad.segments.size()) != ns) {
      throw ContractViolation("propagate_gradient: shape differs from the last build");
    }
    WaypointGradient out = WaypointParams::zeros_like(params);
    for (int s = 0; s < ns; ++s) {
      const FlatState head = s == 0 ? start_state(params) : shift_state(params.shifts[s - 1], boundary_.gears[s - 1]);
      const FlatState tail = s + 1 == ns ? goal_state(params) : shift_state(params.shifts[s], boundary_.gears[s]);
      const double duration = real_time(params.tau[s]);
      if (!solvers_[s].matches(head, tail, params.waypoints[s], duration)) {
        throw ContractViolation("propagate_gradient: parameters differ from the last build (stale factorization)");
      }
      const SegmentInputGradient g = solvers_[s].propagate(grad.segments[s].coeffs, grad.segments[s].duration);
      out.waypoints[s] = g.waypoints;
      out.tau[s] = g.duration * real_time_derivative(params.tau[s]);
      if (s > 0) {
        add_shift_gradient(out.shifts[s - 1], params.shifts[s - 1], boundary_.gears[s - 1], g.head);
      }
      if (s + 1 < ns) {
        add_shift_gradient(out.shifts[s], params.shifts[s], boundary_.gears[s], g.tail);
      }
      if (s == 0 && out.launch_accel) {
        *out.launch_accel += sign(boundary_.gears.front()) * real_time_derivative(*params.launch_accel) *
                             g.head.acc.dot(heading_vector(*boundary_.start_heading));
      }
      if (s + 1 == ns && out.arrival_accel) {
        *out.arrival_accel -= sign(boundary_.gears.back()) * real_time_derivative(*params.arrival_accel) *
                              g.tail.acc.dot(heading_vector(*boundary_.goal_heading));
      }
    }
    return out;
  }

  /// Boundary states with the heading-locked accelerations filled in.
  FlatState start_state(const WaypointParams & params) const
  {
    FlatState f = boundary_.start;
    if (params.launch_accel) {
      f.acc = sign(boundary_.gears.front()) * real_time(*params.launch_accel) * heading_vector(*boundary_.start_heading);
    }
    return f;
  }

  FlatState goal_state(const WaypointParams & params) const
  {
    FlatState f = boundary_.goal;
    if (params.arrival_accel) {
      f.acc = -sign(boundary_.gears.back()) * real_time(*params.arrival_accel) * heading_vector(*boundary_.goal_heading);
    }
    return f;
  }

private:
  static void add_shift_gradient(ShiftPose & out, const ShiftPose & pose, Gear gear_before, const FlatState & d)
  {
    out.x += d.pos.x();
    out.y += d.pos.y();
    const double eta = sign(gear_before);
    const double c = std::cos(pose.theta);
    const double s = std::sin(pose.theta);
    // acc = -eta * a * (c, s)
    out.cusp_accel += -eta * (d.acc.x() * c + d.acc.y() * s);
    out.theta += -eta * pose.cusp_accel * (-d.acc.x() * s + d.acc.y() * c);
  }

  AgentBoundary boundary_;
  std::vector<SegmentSolver> solvers_;
};

}  // namespace flatcar

#endif  // FLATCAR__PARAMETERIZATION_HPP_
