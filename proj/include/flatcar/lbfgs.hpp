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

#ifndef FLATCAR__LBFGS_HPP_
#define FLATCAR__LBFGS_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string_view>
#include <vector>

#include "flatcar/errors.hpp"

namespace flatcar
{

enum class LbfgsStatus { kConverged, kMaxIterations, kLineSearchFailed };

inline std::string_view to_string(LbfgsStatus s)
{
  switch (s) {
    case LbfgsStatus::kConverged:
      return "Converged";
    case LbfgsStatus::kMaxIterations:
      return "MaxIter";
    case LbfgsStatus::kLineSearchFailed:
      return "LineSearchFail";
  }
  return "unknown";
}

struct LbfgsParams
{
  int memory{8};
  /// Converged when |g|_inf <= grad_tol * max(1, |x|_inf).
  double grad_tol{1e-5};
  int max_iterations{3000};
  double armijo{1e-4};
  double curvature{0.9};
  int max_linesearch{60};
  double min_step{1e-20};
  double max_step{1e20};
  // Relative objective change treated as rounding noise by the line search.
  double flat_tol{1e-10};
};

struct LbfgsIteration
{
  int iteration;
  double objective;
  double grad_norm;  // infinity norm
  double step;
};

struct LbfgsResult
{
  Eigen::VectorXd x;
  double f{0.0};
  LbfgsStatus status{LbfgsStatus::kMaxIterations};
  int iterations{0};
  int evaluations{0};
};

/// f(x, grad) -> value; grad is resized by the caller to x.size().
using ObjectiveFn = std::function<double(const Eigen::VectorXd &, Eigen::VectorXd &)>;
using IterationCallback = std::function<void(const LbfgsIteration &)>;
/// Applies an approximate inverse Hessian (symmetric positive definite) to a
/// vector in place. Seeds the two-loop recursion in place of the identity.
using Preconditioner = std::function<void(Eigen::VectorXd &)>;

namespace detail
{

// Objective evaluation where a thrown numerical error or a non-finite value
// reads as +inf, so the line search backs off.
inline double safe_eval(const ObjectiveFn & f, const Eigen::VectorXd & x, Eigen::VectorXd & g)
{
  try {
    const double v = f(x, g);
    if (!std::isfinite(v) || !g.allFinite()) {
      return std::numeric_limits<double>::infinity();
    }
    return v;
  } catch (const NumericalError &) {
    return std::numeric_limits<double>::infinity();
  }
}

}  // namespace detail

/**
 * Limited-memory BFGS with the two-loop recursion and a bisection/expansion
 * line search enforcing the weak Wolfe conditions. Only curvature pairs with
 * s^T y > 0 enter the memory. Accepted iterates never increase the objective.
 */
inline LbfgsResult lbfgs_minimize(
  const ObjectiveFn & f, Eigen::VectorXd x0, const LbfgsParams & params = {},
  const IterationCallback & on_iteration = {}, const Preconditioner & precondition = {})
{
  if (params.memory < 1 || !(params.grad_tol > 0.0) || params.max_iterations < 1) {
    throw InputError("lbfgs: invalid parameters");
  }
  if (!(0.0 < params.armijo && params.armijo < params.curvature && params.curvature < 1.0)) {
    throw InputError("lbfgs: need 0 < c1 < c2 < 1");
  }
  const Eigen::Index n = x0.size();
  LbfgsResult res;
  res.x = std::move(x0);
  Eigen::VectorXd g(n);
  res.f = f(res.x, g);
  res.evaluations = 1;
  if (!std::isfinite(res.f) || !g.allFinite()) {
    throw InputError("lbfgs: objective or gradient not finite at the initial point");
  }

  const int m = params.memory;
  std::vector<Eigen::VectorXd> s_hist(m, Eigen::VectorXd(n));
  std::vector<Eigen::VectorXd> y_hist(m, Eigen::VectorXd(n));
  std::vector<double> rho(m, 0.0);
  std::vector<double> alpha(m, 0.0);
  int stored = 0;
  int head = 0;

  auto converged = [&](const Eigen::VectorXd & x, const Eigen::VectorXd & grad) {
    const double xn = n > 0 ? x.cwiseAbs().maxCoeff() : 0.0;
    const double gn = n > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    return gn <= params.grad_tol * std::max(1.0, xn);
  };

  if (converged(res.x, g)) {
    res.status = LbfgsStatus::kConverged;
    return res;
  }

  // Steepest descent in the preconditioner's metric. Without one the first
  // trial has unit length; with one it is the full step. Both choices keep
  // the iterates invariant under scaling of the objective.
  auto first_trial = [&](const Eigen::VectorXd & grad, double & trial) {
    Eigen::VectorXd dir = -grad;
    if (precondition) {
      precondition(dir);
      trial = 1.0;
    } else {
      trial = 1.0 / std::max(dir.norm(), 1e-300);
    }
    return dir;
  };
  double step = 1.0;
  Eigen::VectorXd d = first_trial(g, step);
  Eigen::VectorXd x_new(n);
  Eigen::VectorXd g_new(n);

  for (int iter = 1; iter <= params.max_iterations; ++iter) {
    const double f0 = res.f;
    const double dg0 = g.dot(d);
    if (!(dg0 < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      stored = 0;
      d = first_trial(g, step);
      continue;
    }

    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    bool accepted = false;
    double f_new = f0;
    for (int ls = 0; ls < params.max_linesearch; ++ls) {
      x_new = res.x + step * d;
      f_new = detail::safe_eval(f, x_new, g_new);
      ++res.evaluations;
      const double dg = g_new.dot(d);
      // Near a minimum the decrease falls below the rounding level of f and
      // the Armijo test turns into noise. There the step is steered by the
      // directional derivative alone (approximate Wolfe), and it is still
      // accepted only if the objective did not increase.
      const bool flat = std::abs(f_new - f0) <= params.flat_tol * std::max(1.0, std::abs(f0));
      const bool armijo = f_new <= f0 + params.armijo * step * dg0;
      if (flat && !armijo) {
        if (dg < params.curvature * dg0) {
          lo = step;
        } else if (dg <= (2.0 * params.armijo - 1.0) * dg0 && f_new <= f0) {
          accepted = true;
          break;
        } else {
          hi = step;
        }
      } else if (!armijo) {
        hi = step;
      } else if (dg < params.curvature * dg0) {
        lo = step;
      } else {
        accepted = true;
        break;
      }
      step = std::isinf(hi) ? 2.0 * lo : 0.5 * (lo + hi);
      if (step < params.min_step || step > params.max_step) {
        break;
      }
    }
    if (!accepted) {
      res.status = LbfgsStatus::kLineSearchFailed;
      res.iterations = iter - 1;
      return res;
    }

    Eigen::VectorXd & s = s_hist[head];
    Eigen::VectorXd & y = y_hist[head];
    s = x_new - res.x;
    y = g_new - g;
    res.x.swap(x_new);
    g.swap(g_new);
    res.f = f_new;
    res.iterations = iter;

    if (on_iteration) {
      on_iteration({iter, res.f, g.cwiseAbs().maxCoeff(), step});
    }
    if (converged(res.x, g)) {
      res.status = LbfgsStatus::kConverged;
      return res;
    }

    const double sy = s.dot(y);
    const double yy = y.squaredNorm();
    if (sy > std::numeric_limits<double>::epsilon() * yy && yy > 0.0) {
      rho[head] = 1.0 / sy;
      head = (head + 1) % m;
      stored = std::min(stored + 1, m);
    }

    // Two-loop recursion.
    d = -g;
    int idx = head;
    for (int k = 0; k < stored; ++k) {
      idx = (idx + m - 1) % m;
      alpha[idx] = rho[idx] * s_hist[idx].dot(d);
      d -= alpha[idx] * y_hist[idx];
    }
    if (precondition) {
      precondition(d);
    }
    if (stored > 0) {
      const int last = (head + m - 1) % m;
      Eigen::VectorXd hy = y_hist[last];
      if (precondition) {
        precondition(hy);
      }
      d *= 1.0 / (rho[last] * y_hist[last].dot(hy));
    }
    for (int k = 0; k < stored; ++k) {
      const double beta = rho[idx] * y_hist[idx].dot(d);
      d += (alpha[idx] - beta) * s_hist[idx];
      idx = (idx + 1) % m;
    }
    step = 1.0;
    if (stored == 0) {
      d = first_trial(g, step);
    }
  }
  res.status = LbfgsStatus::kMaxIterations;
  return res;
}

}  // namespace flatcar

#endif  // FLATCAR__LBFGS_HPP_
