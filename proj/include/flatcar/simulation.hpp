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


#ifndef FLATCAR__SIMULATION_HPP_
#define FLATCAR__SIMULATION_HPP_

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/metrics.hpp"
#include "flatcar/mpc.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

enum class InputSource
{
  kMpc,        // closed loop, zero-order hold of the controller output
  kReference,  // open loop, the trajectory's own inputs at every stage time
};

struct SimOptions
{
  int substeps{10};       // RK4 steps per control interval
  double tail_s{1.0};     // keep running this long past the trajectory end
  double lateral_offset{0.0};  // initial displacement to the left of the start heading
  InputSource source{InputSource::kMpc};
};

struct SimSample
{
  double t;
  MpcState x;
  MpcInput u;
  QpStatus status;
  int qp_iterations;
  Eigen::Vector2d ref;
  double error;  // distance to the reference position at t
};

struct SimLog
{
  std::vector<SimSample> samples;
  double rms_error{0.0};
  double max_error{0.0};
  MpcState final_state{MpcState::Zero()};
  bool aborted{false};
  std::string message;
};

/// Classic fourth-order Runge-Kutta step of the bicycle; `u` is queried at each stage time.
inline MpcState rk4_step(
  const MpcState & x, double t, double h, const std::function<MpcInput(double)> & u, double wheelbase)
{
  const MpcState k1 = bicycle_rhs(x, u(t), wheelbase);
  const MpcState k2 = bicycle_rhs(x + 0.5 * h * k1, u(t + 0.5 * h), wheelbase);
  const MpcState k3 = bicycle_rhs(x + 0.5 * h * k2, u(t + 0.5 * h), wheelbase);
  const MpcState k4 = bicycle_rhs(x + h * k3, u(t + h), wheelbase);
  return x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/**
 * Drives the nonlinear bicycle along one planned trajectory. With the MPC
 * source the controller runs every config.dt and its first input is held
 * over `substeps` RK4 steps. A controller error ends the run early with the
 * partial log.
 */
inline SimLog simulate_agent(
  const AgentTrajectory & traj, const KinematicParams & kin, const MpcConfig & config, const SimOptions & opt = {})
{
  if (opt.substeps < 1 || !(opt.tail_s >= 0.0)) {
    throw DomainError("simulate: need at least one substep and a non-negative tail");
  }
  const double dt = config.dt;
  const double h = dt / opt.substeps;
  const double t_end = traj.total_duration() + opt.tail_s;
  const long steps = static_cast<long>(std::ceil(t_end / dt - 1e-9));

  const RefPoint r0 = detail::ref_at(traj, 0.0, kin);
  MpcState x = r0.x;
  x(0) -= opt.lateral_offset * std::sin(x(2));
  x(1) += opt.lateral_offset * std::cos(x(2));

  MpcController ctrl(config);
  SimLog log;
  double sq = 0.0;
  for (long k = 0; k <= steps; ++k) {
    const double t = k * dt;
    const RefPoint ref = detail::ref_at(traj, t, kin);
    SimSample s{t, x, MpcInput::Zero(), QpStatus::kSolved, 0, ref.x.head<2>(), 0.0};
    s.error = (x.head<2>() - s.ref).norm();
    std::function<MpcInput(double)> input;
    if (k < steps) {
      if (opt.source == InputSource::kMpc) {
        try {
          const MpcSolution sol = ctrl.solve(x, sample_reference(traj, t, config.horizon, dt, kin));
          s.u = sol.u0;
          s.status = sol.status;
          s.qp_iterations = sol.qp_iterations;
        } catch (const ControllerError & e) {
          log.aborted = true;
          log.message = e.what();
        }
        const MpcInput held = s.u;
        input = [held](double) { return held; };
      } else {
        s.u = ref.u;
        input = [&traj, &kin](double tau) { return detail::ref_at(traj, tau, kin).u; };
      }
    }
    log.samples.push_back(s);
    sq += s.error * s.error;
    log.max_error = std::max(log.max_error, s.error);
    if (log.aborted || k == steps) {
      break;
    }
    for (int i = 0; i < opt.substeps; ++i) {
      x = rk4_step(x, t + i * h, h, input, kin.wheelbase);
    }
  }
  log.final_state = x;
  log.rms_error = std::sqrt(sq / static_cast<double>(log.samples.size()));
  return log;
}

/// Header of sim.csv; one row per agent and control step.
inline constexpr const char * kSimHeader =
  "agent,t,x,y,theta,v,a_cmd,phi_cmd,status,qp_iterations,ref_x,ref_y,error";

inline std::string sim_csv_rows(int agent, const SimLog & log)
{
  std::string out;
  for (const SimSample & s : log.samples) {
    out += std::to_string(agent) + ',' + format_double(s.t) + ',' + format_double(s.x(0)) + ',' +
           format_double(s.x(1)) + ',' + format_double(s.x(2)) + ',' + format_double(s.x(3)) + ',' +
           format_double(s.u(0)) + ',' + format_double(s.u(1)) + ',' + std::string(to_string(s.status)) + ',' +
           std::to_string(s.qp_iterations) + ',' + format_double(s.ref.x()) + ',' + format_double(s.ref.y()) + ',' +
           format_double(s.error) + '\n';
  }
  return out;
}

}  // namespace flatcar

#endif  // FLATCAR__SIMULATION_HPP_
