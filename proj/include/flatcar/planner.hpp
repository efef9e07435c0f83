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

#ifndef FLATCAR__PLANNER_HPP_
#define FLATCAR__PLANNER_HPP_

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <array>
#include <chrono>
#include <functional>
#include <optional>
#include <sstream>
#include <utility>
#include <variant>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/lbfgs.hpp"
#include "flatcar/parameterization.hpp"
#include "flatcar/penalty.hpp"
#include "flatcar/timewarp.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

struct PlannerConfig
{
  double time_weight{10.0};
  Eigen::Matrix2d effort_weight{Eigen::Matrix2d::Identity()};
  int memory{8};
  double grad_tol{1e-5};
  int max_iterations{3000};
  int penalty_rounds{3};
  double weight_multiplier{10.0};
  double violation_tol{1e-3};
  // Added to obstacle and inter-agent clearances while planning, so the
  // continuous-time trajectory stays clear between quadrature nodes.
  double clearance_margin{0.05};
  // Relative tightening of the speed, acceleration and curvature limits while
  // planning. The penalty settles slightly outside its boundary, so this keeps
  // the stated limits met.
  double limit_margin{0.01};
  // Seed L-BFGS with the inverse Hessian of effort + time at the start of
  // each round. Effort alone is badly conditioned in the waypoints (the
  // spread grows like the sixth power of the piece count).
  bool precondition{true};
  // Build the seed from finite differences of the full gradient instead.
  bool precondition_full{false};
  // Iterations between preconditioner rebuilds (memory restarts as well).
  int precondition_refresh{150};
  // A round also ends once a whole refresh interval lowers the objective by
  // less than this fraction. The penalty seams make the last digits of the
  // gradient tolerance very slow to reach.
  double stall_rel_tol{2e-3};

  void validate() const
  {
    if (!(time_weight > 0.0) || memory < 1 || !(grad_tol > 0.0) || max_iterations < 1 || penalty_rounds < 1 ||
        !(weight_multiplier > 0.0) || !(violation_tol > 0.0)) {
      throw DomainError("planner config: all parameters must be positive");
    }
    if (!(clearance_margin >= 0.0) || !(stall_rel_tol >= 0.0) || !(limit_margin >= 0.0 && limit_margin < 0.5)) {
      throw DomainError("planner config: margins and stall tolerance out of range");
    }
    const Eigen::Matrix2d & w = effort_weight;
    const double det = w(0, 0) * w(1, 1) - w(0, 1) * w(1, 0);
    if (!(w(0, 0) > 0.0) || !(det > 0.0) || w(0, 1) != w(1, 0)) {
      throw DomainError("planner config: effort weight must be positive definite");
    }
  }
};

/// Task-specific cost over the whole team. Adds its gradient into `grads`
/// (pre-shaped like the trajectories) and returns its value.
using TaskCost = std::function<double(const std::vector<AgentTrajectory> &, std::vector<TrajectoryGradient> &)>;

struct AgentSetup
{
  AgentBoundary boundary;
  WaypointParams initial;
  std::vector<ConstraintSpec> constraints;
};

struct PlanningProblem
{
  std::vector<AgentSetup> agents;
  std::optional<MutualClearance> mutual;
  PenaltyConfig penalty;
  TaskCost task_cost;
};

struct ObjectiveBreakdown
{
  double effort{0.0};
  double time{0.0};
  double penalty{0.0};
  double task{0.0};
  std::vector<double> agent_effort;
  std::array<double, kConstraintKinds> penalty_by_kind{};

  double total() const { return effort + time + penalty + task; }
};

/**
 * The unconstrained planning objective over the stacked decision vector of
 * all agents: control effort + time_weight * total duration + penalty + task
 * cost. Evaluation is deterministic and single-threaded.
 */
class PlanningObjective
{
public:
  PlanningObjective(const PlanningProblem & problem, const PlannerConfig & config)
  : config_(config),
    penalty_{{}, problem.mutual, problem.penalty},
    nominal_{{}, problem.mutual, problem.penalty},
    task_cost_(problem.task_cost)
  {
    config_.validate();
    if (penalty_.mutual) {
      penalty_.mutual->min_separation += config_.clearance_margin;
    }
    problem.penalty.validate();
    shapes_.reserve(problem.agents.size());
    for (const AgentSetup & a : problem.agents) {
      if (a.boundary.gears.size() != a.initial.tau.size()) {
        throw DomainError("objective: gear sequence and initial guess disagree");
      }
      a.initial.validate(a.initial.piece_counts());
      builders_.emplace_back(a.boundary);
      shapes_.push_back(a.initial);
      for (const auto & c : a.constraints) {
        validate(c);
      }
      penalty_.agent_specs.push_back(a.constraints);
      nominal_.agent_specs.push_back(a.constraints);
      for (auto & c : penalty_.agent_specs.back()) {
        const double shrink = 1.0 - config_.limit_margin;
        if (auto * obs = std::get_if<ObstacleClearance>(&c)) {
          obs->robot_radius += config_.clearance_margin;
        } else if (auto * sp = std::get_if<SpeedLimit>(&c)) {
          sp->v_max *= shrink;
        } else if (auto * ac = std::get_if<AccelLimit>(&c)) {
          ac->a_max *= shrink;
        } else if (auto * cu = std::get_if<CurvatureLimit>(&c)) {
          cu->kappa_max *= shrink;
        }
      }
    }
    offsets_.push_back(0);
    for (const auto & s : shapes_) {
      offsets_.push_back(offsets_.back() + s.dimension());
    }
  }

  int dimension() const { return offsets_.back(); }
  int agent_count() const { return static_cast<int>(shapes_.size()); }
  const PenaltyProblem & penalty_problem() const { return penalty_; }
  /// The constraints as stated, without the planning clearance margin.
  const PenaltyProblem & nominal_problem() const { return nominal_; }
  PenaltyWeights & penalty_weights() { return penalty_.config.weights; }

  Eigen::VectorXd pack(const std::vector<WaypointParams> & params) const
  {
    Eigen::VectorXd x(dimension());
    for (int a = 0; a < agent_count(); ++a) {
      params[a].pack(x.segment(offsets_[a], offsets_[a + 1] - offsets_[a]));
    }
    return x;
  }

  std::vector<WaypointParams> unpack(const Eigen::VectorXd & x) const
  {
    std::vector<WaypointParams> out = shapes_;
    for (int a = 0; a < agent_count(); ++a) {
      out[a].unpack(x.segment(offsets_[a], offsets_[a + 1] - offsets_[a]));
    }
    return out;
  }

  std::vector<AgentTrajectory> trajectories(const Eigen::VectorXd & x)
  {
    const auto params = unpack(x);
    std::vector<AgentTrajectory> trajs;
    trajs.reserve(params.size());
    for (int a = 0; a < agent_count(); ++a) {
      trajs.push_back(builders_[a].build(params[a]));
    }
    return trajs;
  }

  double operator()(const Eigen::VectorXd & x, Eigen::VectorXd & grad) { return evaluate(x, &grad, nullptr); }

  ObjectiveBreakdown breakdown(const Eigen::VectorXd & x)
  {
    ObjectiveBreakdown b;
    evaluate(x, nullptr, &b);
    return b;
  }

  double evaluate(const Eigen::VectorXd & x, Eigen::VectorXd * grad, ObjectiveBreakdown * parts)
  {
    const auto params = unpack(x);
    const int n = agent_count();
    std::vector<AgentTrajectory> trajs;
    trajs.reserve(n);
    for (int a = 0; a < n; ++a) {
      trajs.push_back(builders_[a].build(params[a]));
    }

    ObjectiveBreakdown b;
    std::vector<TrajectoryGradient> grads;
    grads.reserve(n);
    for (int a = 0; a < n; ++a) {
      EffortResult e = control_effort(trajs[a], config_.effort_weight);
      b.effort += e.value;
      b.agent_effort.push_back(e.value);
      for (int s = 0; s < trajs[a].segment_count(); ++s) {
        const int m = trajs[a].segments()[s].piece_count();
        b.time += config_.time_weight * m * trajs[a].segments()[s].piece_duration();
        e.gradient.segments[s].duration += config_.time_weight * m;
      }
      grads.push_back(std::move(e.gradient));
    }

    PenaltyResult pen = total_penalty(trajs, penalty_);
    b.penalty = pen.value;
    b.penalty_by_kind = pen.by_kind;
    for (int a = 0; a < n; ++a) {
      grads[a] += pen.gradients[a];
    }
    if (task_cost_) {
      b.task = task_cost_(trajs, grads);
    }

    if (grad != nullptr) {
      grad->resize(dimension());
      for (int a = 0; a < n; ++a) {
        const WaypointGradient g = builders_[a].propagate_gradient(grads[a], params[a]);
        g.pack(grad->segment(offsets_[a], offsets_[a + 1] - offsets_[a]));
      }
    }
    if (parts != nullptr) {
      *parts = b;
    }
    return b.total();
  }

  /// Effort + time of one agent and its gradient in that agent's variables.
  double smooth_agent(int a, const WaypointParams & params, Eigen::VectorXd & grad)
  {
    const AgentTrajectory traj = builders_[a].build(params);
    EffortResult e = control_effort(traj, config_.effort_weight);
    double value = e.value;
    for (int s = 0; s < traj.segment_count(); ++s) {
      const int m = traj.segments()[s].piece_count();
      value += config_.time_weight * m * traj.segments()[s].piece_duration();
      e.gradient.segments[s].duration += config_.time_weight * m;
    }
    grad.resize(params.dimension());
    builders_[a].propagate_gradient(e.gradient, params).pack(grad);
    return value;
  }

  /**
   * Block-diagonal inverse of the effort + time Hessian at x (one block per
   * agent, central differences of the analytic gradient). Eigenvalues are
   * mirrored and floored relative to the largest so the result is positive
   * definite.
   */
  Preconditioner preconditioner(const Eigen::VectorXd & x, bool full)
  {
    const auto params = unpack(x);
    std::vector<Eigen::MatrixXd> blocks;
    Eigen::VectorXd gp;
    Eigen::VectorXd gm;
    for (int a = 0; a < agent_count(); ++a) {
      const int off = offsets_[a];
      const int n = offsets_[a + 1] - off;
      Eigen::MatrixXd h(n, n);
      WaypointParams probe = params[a];
      for (int i = 0; i < n; ++i) {
        const double step = 1e-5 * std::max(1.0, std::abs(x(off + i)));
        Eigen::VectorXd xp = x;
        xp(off + i) += step;
        if (full) {
          evaluate(xp, &gp, nullptr);
        } else {
          probe.unpack(xp.segment(off, n));
          smooth_agent(a, probe, gp);
        }
        xp(off + i) = x(off + i) - step;
        if (full) {
          evaluate(xp, &gm, nullptr);
          h.col(i) = (gp.segment(off, n) - gm.segment(off, n)) / (2.0 * step);
        } else {
          probe.unpack(xp.segment(off, n));
          smooth_agent(a, probe, gm);
          h.col(i) = (gp - gm) / (2.0 * step);
        }
      }
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (h + h.transpose()));
      Eigen::VectorXd lambda = eig.eigenvalues().cwiseAbs();
      const double floor = 1e-8 * std::max(lambda.maxCoeff(), 1e-300);
      lambda = lambda.cwiseMax(floor).cwiseInverse();
      blocks.push_back(eig.eigenvectors() * lambda.asDiagonal() * eig.eigenvectors().transpose());
    }
    return [blocks = std::move(blocks), offsets = offsets_](Eigen::VectorXd & v) {
      for (std::size_t a = 0; a < blocks.size(); ++a) {
        const int n = offsets[a + 1] - offsets[a];
        v.segment(offsets[a], n) = blocks[a] * v.segment(offsets[a], n);
      }
    };
  }

private:
  PlannerConfig config_;
  PenaltyProblem penalty_;
  PenaltyProblem nominal_;
  TaskCost task_cost_;
  std::vector<TrajectoryBuilder> builders_;
  std::vector<WaypointParams> shapes_;
  std::vector<int> offsets_;
};

inline PlanningObjective assemble_objective(const PlanningProblem & problem, const PlannerConfig & config)
{
  return PlanningObjective(problem, config);
}

struct OptimizationRound
{
  LbfgsStatus status;
  int iterations;
  bool stalled{false};
  PenaltyWeights weights;
  std::array<double, kConstraintKinds> violation;
  std::vector<double> objective_history;
};

struct PlanResult
{
  std::vector<AgentTrajectory> trajectories;
  std::vector<WaypointParams> params;
  std::vector<OptimizationRound> rounds;
  std::vector<LbfgsIteration> iteration_log;  // all rounds, in order
  std::array<double, kConstraintKinds> max_violation{};
  ObjectiveBreakdown final_objective;
  double wall_time_s{0.0};
  bool converged{false};

  LbfgsStatus final_status() const { return rounds.back().status; }
  bool feasible(double tol) const
  {
    for (double v : max_violation) {
      if (v > tol) {
        return false;
      }
    }
    return true;
  }
};

/**
 * Minimizes the objective from the problem's initial guess, escalating the
 * weight of every constraint kind still violated beyond violation_tol and
 * re-solving warm-started, for at most penalty_rounds rounds.
 */
inline PlanResult optimize(const PlanningProblem & problem, const PlannerConfig & config)
{
  const auto t_begin = std::chrono::steady_clock::now();
  PlanningObjective objective(problem, config);
  std::vector<WaypointParams> initial;
  for (const auto & a : problem.agents) {
    initial.push_back(a.initial);
  }
  Eigen::VectorXd x = objective.pack(initial);

  LbfgsParams lp;
  lp.memory = config.memory;
  lp.grad_tol = config.grad_tol;
  lp.max_iterations = config.max_iterations;

  PlanResult result;
  for (int round = 0; round < config.penalty_rounds; ++round) {
    OptimizationRound info;
    info.weights = objective.penalty_weights();
    const ObjectiveFn fn = [&objective](const Eigen::VectorXd & v, Eigen::VectorXd & g) { return objective(v, g); };
    LbfgsResult lr;
    lr.x = x;
    int used = 0;
    try {
      Eigen::VectorXd g0(x.size());
      lr.f = objective(x, g0);
      for (;;) {
        const Preconditioner pre =
          config.precondition ? objective.preconditioner(lr.x, config.precondition_full) : Preconditioner{};
        lp.max_iterations = config.precondition_refresh > 0
                              ? std::min(config.precondition_refresh, config.max_iterations - used)
                              : config.max_iterations;
        LbfgsResult chunk = lbfgs_minimize(
          fn, lr.x, lp,
          [&](const LbfgsIteration & it) {
            info.objective_history.push_back(it.objective);
            result.iteration_log.push_back({used + it.iteration, it.objective, it.grad_norm, it.step});
          },
          pre);
        used += chunk.iterations;
        const double before = lr.f;
        const bool stalled = (chunk.status == LbfgsStatus::kLineSearchFailed && chunk.iterations == 0) ||
                             before - chunk.f <= config.stall_rel_tol * std::max(1.0, std::abs(before));
        lr = std::move(chunk);
        lr.iterations = used;
        if (lr.status != LbfgsStatus::kConverged && stalled) {
          info.stalled = true;
        }
        if (lr.status == LbfgsStatus::kConverged || used >= config.max_iterations || stalled ||
            config.precondition_refresh <= 0) {
          break;
        }
      }
    } catch (const InputError & e) {
      throw PlanningError(std::string("optimizer rejected the initial guess: ") + e.what());
    } catch (const NumericalError & e) {
      throw PlanningError(std::string("objective failed at the initial guess: ") + e.what());
    }
    if (round == 0 && lr.status == LbfgsStatus::kLineSearchFailed && lr.iterations == 0) {
      std::ostringstream os;
      os << "line search failed on the first iteration (objective " << lr.f << ")";
      throw PlanningError(os.str());
    }
    x = lr.x;
    info.status = lr.status;
    info.iterations = lr.iterations;
    const auto trajs = objective.trajectories(x);
    info.violation = max_violation(trajs, objective.nominal_problem());
    result.rounds.push_back(info);

    bool any = false;
    for (int k = 0; k < kConstraintKinds; ++k) {
      any = any || info.violation[k] > config.violation_tol;
    }
    if (!any || round + 1 == config.penalty_rounds) {
      break;
    }
    for (int k = 0; k < kConstraintKinds; ++k) {
      if (info.violation[k] > config.violation_tol) {
        objective.penalty_weights().w[k] *= config.weight_multiplier;
      }
    }
  }

  result.params = objective.unpack(x);
  result.trajectories = objective.trajectories(x);
  result.max_violation = result.rounds.back().violation;
  result.final_objective = objective.breakdown(x);
  const bool stationary = result.final_status() == LbfgsStatus::kConverged || result.rounds.back().stalled;
  result.converged = stationary && result.feasible(config.violation_tol);
  result.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_begin).count();
  return result;
}

}  // namespace flatcar

#endif  // FLATCAR__PLANNER_HPP_
