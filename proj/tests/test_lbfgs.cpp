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

#include <cmath>
#include <limits>
#include <vector>

#include "flatcar/lbfgs.hpp"
#include "test_support.hpp"

namespace flatcar
{
namespace
{

double rosenbrock(const Eigen::VectorXd & x, Eigen::VectorXd & g)
{
  const double a = 1.0 - x(0);
  const double b = x(1) - x(0) * x(0);
  g.resize(2);
  g(0) = -2.0 * a - 400.0 * x(0) * b;
  g(1) = 200.0 * b;
  return a * a + 100.0 * b * b;
}

TEST(Lbfgs, ConvexQuadratic)
{
  const Eigen::Vector2d target(1.0, 2.0);
  auto f = [&](const Eigen::VectorXd & x, Eigen::VectorXd & g) {
    g = 2.0 * (x - target);
    return (x - target).squaredNorm();
  };
  LbfgsParams p;
  p.grad_tol = 1e-10;
  const LbfgsResult r = lbfgs_minimize(f, Eigen::Vector2d::Zero(), p);
  EXPECT_EQ(r.status, LbfgsStatus::kConverged);
  EXPECT_LT((r.x - target).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Lbfgs, Rosenbrock)
{
  LbfgsParams p;
  p.grad_tol = 1e-9;
  const LbfgsResult r = lbfgs_minimize(rosenbrock, Eigen::Vector2d(-1.2, 1.0), p);
  EXPECT_EQ(r.status, LbfgsStatus::kConverged);
  EXPECT_LT((r.x - Eigen::Vector2d(1.0, 1.0)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Lbfgs, SingleIterationDecreases)
{
  LbfgsParams p;
  p.max_iterations = 1;
  const Eigen::Vector2d x0(-1.2, 1.0);
  Eigen::VectorXd g;
  const double f0 = rosenbrock(x0, g);
  const LbfgsResult r = lbfgs_minimize(rosenbrock, x0, p);
  EXPECT_EQ(r.status, LbfgsStatus::kMaxIterations);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT(r.f, f0);
}

TEST(Lbfgs, NonFiniteStartIsRejected)
{
  auto nan_value = [](const Eigen::VectorXd & x, Eigen::VectorXd & g) {
    g = x;
    return std::numeric_limits<double>::quiet_NaN();
  };
  EXPECT_THROW(lbfgs_minimize(nan_value, Eigen::Vector2d::Ones()), InputError);
  auto inf_grad = [](const Eigen::VectorXd & x, Eigen::VectorXd & g) {
    g = x;
    g(0) = std::numeric_limits<double>::infinity();
    return 1.0;
  };
  EXPECT_THROW(lbfgs_minimize(inf_grad, Eigen::Vector2d::Ones()), InputError);
}

TEST(Lbfgs, InvalidParameters)
{
  LbfgsParams p;
  p.curvature = 1e-5;
  EXPECT_THROW(lbfgs_minimize(rosenbrock, Eigen::Vector2d::Zero(), p), InputError);
}

TEST(Lbfgs, AcceptedIteratesAreMonotone)
{
  testing::Rng rng(61);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 2 * (1 + trial % 5);
    Eigen::VectorXd x0(n);
    for (int i = 0; i < n; ++i) {
      x0(i) = rng.uniform(-2.0, 2.0);
    }
    // Extended Rosenbrock.
    auto f = [](const Eigen::VectorXd & x, Eigen::VectorXd & g) {
      g = Eigen::VectorXd::Zero(x.size());
      double v = 0.0;
      for (Eigen::Index i = 0; i + 1 < x.size(); i += 2) {
        const double a = 1.0 - x(i);
        const double b = x(i + 1) - x(i) * x(i);
        v += a * a + 100.0 * b * b;
        g(i) += -2.0 * a - 400.0 * x(i) * b;
        g(i + 1) += 200.0 * b;
      }
      return v;
    };
    std::vector<double> history;
    Eigen::VectorXd g0;
    history.push_back(f(x0, g0));
    const LbfgsResult r =
      lbfgs_minimize(f, x0, {}, [&](const LbfgsIteration & it) { history.push_back(it.objective); });
    for (std::size_t k = 1; k < history.size(); ++k) {
      ASSERT_LE(history[k], history[k - 1]) << "trial " << trial << " iteration " << k;
    }
    EXPECT_EQ(r.status, LbfgsStatus::kConverged);
  }
}

TEST(Lbfgs, ThrownNumericalErrorBacksOffTheStep)
{
  // Minimizer at 0.5; the region x > 1 throws, so an overlong step must shrink.
  auto f = [](const Eigen::VectorXd & x, Eigen::VectorXd & g) {
    if (x(0) > 1.0) {
      throw NumericalError("outside domain");
    }
    g = 2.0 * (x.array() - 0.5).matrix();
    return (x.array() - 0.5).square().sum();
  };
  LbfgsParams p;
  p.grad_tol = 1e-10;
  const LbfgsResult r = lbfgs_minimize(f, Eigen::VectorXd::Constant(1, -40.0), p);
  EXPECT_EQ(r.status, LbfgsStatus::kConverged);
  EXPECT_NEAR(r.x(0), 0.5, 1e-8);
}

TEST(Lbfgs, StatusNames)
{
  EXPECT_EQ(to_string(LbfgsStatus::kConverged), "Converged");
  EXPECT_EQ(to_string(LbfgsStatus::kMaxIterations), "MaxIter");
  EXPECT_EQ(to_string(LbfgsStatus::kLineSearchFailed), "LineSearchFail");
}

}  // namespace
}  // namespace flatcar
