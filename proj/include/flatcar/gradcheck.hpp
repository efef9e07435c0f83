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


#ifndef FLATCAR__GRADCHECK_HPP_
#define FLATCAR__GRADCHECK_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flatcar/harness.hpp"
#include "flatcar/parameterization.hpp"
#include "flatcar/penalty.hpp"
#include "flatcar/planner.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

/// Central differences of a scalar function of a vector.
inline Eigen::VectorXd central_difference(
  const std::function<double(const Eigen::VectorXd &)> & f, const Eigen::VectorXd & x, double h = 1e-6)
{
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Richardson-extrapolated central differences, fourth order in h.
inline Eigen::VectorXd richardson_difference(
  const std::function<double(const Eigen::VectorXd &)> & f, const Eigen::VectorXd & x, double h = 1e-6)
{
  return (4.0 * central_difference(f, x, 0.5 * h) - central_difference(f, x, h)) / 3.0;
}

inline double relative_gradient_error(const Eigen::VectorXd & analytic, const Eigen::VectorXd & reference)
{
  return (analytic - reference).norm() / std::max(reference.norm(), 1e-8);
}

struct GradSuiteReport
{
  std::string name;
  int instances{0};
  int failures{0};
  double worst{0.0};
  bool passed() const { return instances > 0 && failures == 0; }
};

struct GradCheckOptions
{
  int instances{50};
  double step{1e-6};
  double tolerance{1e-5};
  double jitter{0.05};  // std-dev of the perturbation applied to the front-end guess
  std::uint64_t seed{1};
};

struct GradCheckReport
{
  std::vector<GradSuiteReport> suites;
  bool passed() const
  {
    return std::all_of(suites.begin(), suites.end(), [](const GradSuiteReport & s) { return s.passed(); });
  }
};

/**
 * Finite-difference suites on the scenario's own decision space: control
 * effort per agent, the team penalty, and the assembled objective. Each
 * instance is the front-end guess plus seeded Gaussian jitter. The penalty
 * terms have a third derivative of order 1/a0^2 inside the smooth_l1 blend,
 * so those suites use the extrapolated oracle.
 */
inline GradCheckReport check_gradients(const Scenario & sc, const GradCheckOptions & opt = {})
{
  const PlanningProblem prob = planning_problem(sc, initial_guesses(sc));
  PlanningObjective objective(prob, sc.planner);
  std::vector<WaypointParams> init;
  for (const auto & a : prob.agents) {
    init.push_back(a.initial);
  }
  const Eigen::VectorXd x0 = objective.pack(init);
  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> gauss(0.0, opt.jitter);
  auto instance = [&] {
    Eigen::VectorXd x = x0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      x(i) += gauss(rng);
    }
    return x;
  };
  auto record = [&](GradSuiteReport & r, const Eigen::VectorXd & analytic, const Eigen::VectorXd & fd) {
    const double e = relative_gradient_error(analytic, fd);
    ++r.instances;
    r.worst = std::max(r.worst, e);
    if (!(e < opt.tolerance)) {
      ++r.failures;
    }
  };

  GradCheckReport rep;
  const int n_agents = static_cast<int>(prob.agents.size());

  // Control effort of one agent at a time.
  GradSuiteReport effort{"control_effort"};
  for (int k = 0; k < opt.instances; ++k) {
    const int a = k % n_agents;
    const std::vector<WaypointParams> params = objective.unpack(instance());
    const WaypointParams & p = params[a];
    auto f = [&](const Eigen::VectorXd & v, Eigen::VectorXd * g) {
      WaypointParams q = p;
      q.unpack(v);
      TrajectoryBuilder b(prob.agents[a].boundary);
      const AgentTrajectory t = b.build(q);
      const EffortResult e = control_effort(t, sc.planner.effort_weight);
      if (g != nullptr) {
        g->resize(v.size());
        b.propagate_gradient(e.gradient, q).pack(*g);
      }
      return e.value;
    };
    Eigen::VectorXd v(p.dimension());
    p.pack(v);
    Eigen::VectorXd analytic;
    f(v, &analytic);
    record(effort, analytic, central_difference([&](const Eigen::VectorXd & y) { return f(y, nullptr); }, v, opt.step));
  }
  rep.suites.push_back(effort);

  // Team penalty with the scenario's weights.
  GradSuiteReport penalty{"penalty"};
  for (int k = 0; k < opt.instances; ++k) {
    const Eigen::VectorXd x = instance();
    auto f = [&](const Eigen::VectorXd & v, Eigen::VectorXd * g) {
      const auto params = objective.unpack(v);
      std::vector<TrajectoryBuilder> builders;
      std::vector<AgentTrajectory> trajs;
      for (int a = 0; a < n_agents; ++a) {
        builders.emplace_back(prob.agents[a].boundary);
        trajs.push_back(builders.back().build(params[a]));
      }
      const PenaltyResult r = total_penalty(trajs, objective.penalty_problem());
      if (g != nullptr) {
        g->resize(v.size());
        Eigen::Index off = 0;
        for (int a = 0; a < n_agents; ++a) {
          const int d = params[a].dimension();
          builders[a].propagate_gradient(r.gradients[a], params[a]).pack(g->segment(off, d));
          off += d;
        }
      }
      return r.value;
    };
    Eigen::VectorXd analytic;
    f(x, &analytic);
    record(penalty, analytic, richardson_difference([&](const Eigen::VectorXd & y) { return f(y, nullptr); }, x, opt.step));
  }
  rep.suites.push_back(penalty);

  // Everything together.
  GradSuiteReport total{"objective"};
  for (int k = 0; k < opt.instances; ++k) {
    const Eigen::VectorXd x = instance();
    Eigen::VectorXd analytic;
    objective(x, analytic);
    const Eigen::VectorXd fd = richardson_difference(
      [&](const Eigen::VectorXd & y) { return objective.evaluate(y, nullptr, nullptr); },
      x, opt.step);
    record(total, analytic, fd);
  }
  rep.suites.push_back(total);
  return rep;
}

}  // namespace flatcar

#endif  // FLATCAR__GRADCHECK_HPP_
