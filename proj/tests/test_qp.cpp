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

#include <chrono>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "flatcar/qp.hpp"
#include "test_support.hpp"

namespace flatcar
{
namespace
{

constexpr double kInf = std::numeric_limits<double>::infinity();

Eigen::SparseMatrix<double> sparse(const Eigen::MatrixXd & m) { return m.sparseView(0.0, 0.0); }

QpProblem from_box(const testing::BoxQp & b)
{
  const auto n = b.q.size();
  QpProblem p;
  p.P = sparse(b.P);
  p.q = b.q;
  p.A = sparse(Eigen::MatrixXd::Identity(n, n));
  p.l = b.lo;
  p.u = b.hi;
  return p;
}

// Random QP with general rows, bounds bracketing a known feasible point.
QpProblem random_general_qp(std::mt19937_64 & rng, int n, int m)
{
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Eigen::MatrixXd r = Eigen::MatrixXd::NullaryExpr(n, n, [&] { return gauss(rng); });
  Eigen::MatrixXd a = Eigen::MatrixXd::NullaryExpr(m, n, [&] { return unit(rng) < 0.5 ? gauss(rng) : 0.0; });
  const Eigen::VectorXd x0 = Eigen::VectorXd::NullaryExpr(n, [&] { return gauss(rng); });
  const Eigen::VectorXd ax0 = a * x0;
  QpProblem p;
  p.P = sparse(r.transpose() * r + 0.01 * Eigen::MatrixXd::Identity(n, n));
  p.q = Eigen::VectorXd::NullaryExpr(n, [&] { return 5.0 * gauss(rng); });
  p.A = sparse(a);
  p.l.resize(m);
  p.u.resize(m);
  for (int i = 0; i < m; ++i) {
    const double roll = unit(rng);
    if (roll < 0.1) {
      p.l(i) = p.u(i) = ax0(i);
    } else {
      p.l(i) = roll < 0.3 ? -kInf : ax0(i) - unit(rng);
      p.u(i) = roll > 0.9 ? kInf : ax0(i) + unit(rng);
    }
  }
  return p;
}

TEST(Qp, ProjectsOntoActiveBound)
{
  // min x^2 s.t. x >= 1
  QpProblem p;
  p.P = sparse(Eigen::MatrixXd::Constant(1, 1, 2.0));
  p.q = Eigen::VectorXd::Zero(1);
  p.A = sparse(Eigen::MatrixXd::Ones(1, 1));
  p.l = Eigen::VectorXd::Constant(1, 1.0);
  p.u = Eigen::VectorXd::Constant(1, kInf);
  const QpResult r = solve_qp(p);
  ASSERT_EQ(r.status, QpStatus::kSolved);
  EXPECT_NEAR(r.x(0), 1.0, 1e-6);
  EXPECT_NEAR(r.y(0), -2.0, 1e-5);
}

TEST(Qp, UnconstrainedIsStationaryPoint)
{
  std::mt19937_64 rng(7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n = 5;
  QpProblem p;
  p.P = sparse(Eigen::MatrixXd::Identity(n, n));
  p.q = Eigen::VectorXd::NullaryExpr(n, [&] { return gauss(rng); });
  p.A = sparse(Eigen::MatrixXd::Identity(n, n));
  p.l = Eigen::VectorXd::Constant(n, -kInf);
  p.u = Eigen::VectorXd::Constant(n, kInf);
  const QpResult r = solve_qp(p);
  ASSERT_EQ(r.status, QpStatus::kSolved);
  EXPECT_LT((r.x + p.q).cwiseAbs().maxCoeff(), 1e-6);

  // No rows at all.
  p.A = Eigen::SparseMatrix<double>(0, n);
  p.l.resize(0);
  p.u.resize(0);
  const QpResult r0 = solve_qp(p);
  ASSERT_EQ(r0.status, QpStatus::kSolved);
  EXPECT_LT((r0.x + p.q).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Qp, MatchesActiveSetEnumeration)
{
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> dim(1, 6);
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (int k = 0; k < 200; ++k) {
    const testing::BoxQp b = testing::random_box_qp(rng, dim(rng));
    const Eigen::VectorXd expect = testing::box_qp_oracle(b);
    const QpResult r = solve_qp(from_box(b));
    ASSERT_EQ(r.status, QpStatus::kSolved) << "problem " << k;
    worst = std::max(worst, (r.x - expect).cwiseAbs().maxCoeff());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(worst, 1e-6);
  EXPECT_LT(secs, 10.0);
}

TEST(Qp, SolvedMeansKktResidualsWithinTolerance)
{
  std::mt19937_64 rng(99);
  QpSettings s;
  s.polish = false;  // check the ADMM termination test itself
  for (int k = 0; k < 50; ++k) {
    const QpProblem p = random_general_qp(rng, 8, 12);
    const QpResult r = solve_qp(p, s);
    ASSERT_EQ(r.status, QpStatus::kSolved) << "problem " << k;
    const Eigen::VectorXd ax = p.A * r.x;
    const Eigen::VectorXd z = ax.cwiseMax(p.l).cwiseMin(p.u);
    const Eigen::VectorXd px = p.P * r.x;
    const Eigen::VectorXd aty = p.A.transpose() * r.y;
    const double eps_prim = s.eps_abs + s.eps_rel * std::max(ax.cwiseAbs().maxCoeff(), z.cwiseAbs().maxCoeff());
    const double eps_dual =
      s.eps_abs +
      s.eps_rel * std::max({px.cwiseAbs().maxCoeff(), aty.cwiseAbs().maxCoeff(), p.q.cwiseAbs().maxCoeff()});
    // The returned z is the projection, so |Ax - z| measures bound violation.
    EXPECT_LE((ax - z).cwiseAbs().maxCoeff(), eps_prim);
    EXPECT_LE((px + p.q + aty).cwiseAbs().maxCoeff(), eps_dual);
  }
}

TEST(Qp, PolishedSolutionsSatisfyComplementarity)
{
  std::mt19937_64 rng(5);
  for (int k = 0; k < 50; ++k) {
    const QpProblem p = random_general_qp(rng, 6, 9);
    const QpResult r = solve_qp(p);
    ASSERT_EQ(r.status, QpStatus::kSolved);
    const Eigen::VectorXd ax = p.A * r.x;
    for (Eigen::Index i = 0; i < ax.size(); ++i) {
      EXPECT_GE(ax(i), p.l(i) - 1e-6);
      EXPECT_LE(ax(i), p.u(i) + 1e-6);
      if (r.y(i) > 1e-6) {
        EXPECT_NEAR(ax(i), p.u(i), 1e-6);
      }
      if (r.y(i) < -1e-6) {
        EXPECT_NEAR(ax(i), p.l(i), 1e-6);
      }
    }
  }
}

TEST(Qp, WarmStartedResolveIsImmediate)
{
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const QpProblem p = random_general_qp(rng, 10, 15);
    QpSolver solver;
    const QpResult cold = solver.solve(p);
    ASSERT_EQ(cold.status, QpStatus::kSolved);
    const QpResult warm = solver.solve(p, QpWarmStart{cold.x, cold.y});
    ASSERT_EQ(warm.status, QpStatus::kSolved);
    EXPECT_LE(warm.iterations, 5);
    EXPECT_LT((warm.x - cold.x).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Qp, InvariantUnderRowScaling)
{
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> scale(0.1, 10.0);
  for (int k = 0; k < 20; ++k) {
    const QpProblem p = random_general_qp(rng, 6, 10);
    QpProblem q = p;
    Eigen::VectorXd d = Eigen::VectorXd::NullaryExpr(p.constraints(), [&] { return scale(rng); });
    q.A = d.asDiagonal() * p.A;
    q.l = d.cwiseProduct(p.l);
    q.u = d.cwiseProduct(p.u);
    const QpResult a = solve_qp(p);
    const QpResult b = solve_qp(q);
    ASSERT_EQ(a.status, QpStatus::kSolved);
    ASSERT_EQ(b.status, QpStatus::kSolved);
    EXPECT_LT((a.x - b.x).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(Qp, DetectsPrimalInfeasibility)
{
  // x >= 2 and x <= 1 through two separate rows.
  QpProblem p;
  p.P = sparse(Eigen::MatrixXd::Constant(1, 1, 1.0));
  p.q = Eigen::VectorXd::Zero(1);
  p.A = sparse(Eigen::MatrixXd::Ones(2, 1));
  p.l = Eigen::Vector2d(2.0, -kInf);
  p.u = Eigen::Vector2d(kInf, 1.0);
  EXPECT_EQ(solve_qp(p).status, QpStatus::kPrimalInfeasible);
}

TEST(Qp, DetectsUnboundedProblem)
{
  // min -x s.t. x >= 0 with no curvature.
  QpProblem p;
  p.P = Eigen::SparseMatrix<double>(1, 1);
  p.q = Eigen::VectorXd::Constant(1, -1.0);
  p.A = sparse(Eigen::MatrixXd::Ones(1, 1));
  p.l = Eigen::VectorXd::Zero(1);
  p.u = Eigen::VectorXd::Constant(1, kInf);
  EXPECT_EQ(solve_qp(p).status, QpStatus::kDualInfeasible);
}

TEST(Qp, RejectsMalformedInput)
{
  QpProblem p;
  p.P = sparse(Eigen::MatrixXd::Identity(2, 2));
  p.q = Eigen::VectorXd::Zero(3);
  p.A = sparse(Eigen::MatrixXd::Identity(2, 2));
  p.l = Eigen::VectorXd::Zero(2);
  p.u = Eigen::VectorXd::Ones(2);
  EXPECT_THROW(solve_qp(p), InputError);

  p.q = Eigen::VectorXd::Zero(2);
  p.l(0) = 2.0;
  EXPECT_THROW(solve_qp(p), InputError);

  p.l(0) = 0.0;
  Eigen::MatrixXd asym = Eigen::MatrixXd::Identity(2, 2);
  asym(0, 1) = 1e-3;
  p.P = sparse(asym);
  EXPECT_THROW(solve_qp(p), InputError);

  QpSettings s;
  s.alpha = 2.0;
  EXPECT_THROW(QpSolver{s}, InputError);
}

}  // namespace
}  // namespace flatcar
