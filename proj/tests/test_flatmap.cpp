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
#include <numbers>

#include "flatcar/flatmap.hpp"
#include "test_support.hpp"

namespace flatcar
{
namespace
{

KinematicParams params_with_wheelbase(double l)
{
  KinematicParams p;
  p.wheelbase = l;
  return p;
}

TEST(FlatMap, StraightForward)
{
  const CarState s = flat_to_state({0, 0}, {1, 0}, {0, 0}, Gear::kForward, params_with_wheelbase(0.6));
  EXPECT_DOUBLE_EQ(s.v, 1.0);
  EXPECT_DOUBLE_EQ(s.theta, 0.0);
  EXPECT_DOUBLE_EQ(s.a_t, 0.0);
  EXPECT_DOUBLE_EQ(s.a_n, 0.0);
  EXPECT_DOUBLE_EQ(s.phi, 0.0);
  EXPECT_DOUBLE_EQ(s.kappa, 0.0);
}

TEST(FlatMap, ReverseFlipsSpeedAndHeading)
{
  const CarState s = flat_to_state({0, 0}, {1, 0}, {0, 0}, Gear::kReverse, params_with_wheelbase(0.6));
  EXPECT_DOUBLE_EQ(s.v, -1.0);
  EXPECT_NEAR(std::abs(s.theta), std::numbers::pi, 1e-15);
}

TEST(FlatMap, UnitCircleCurvature)
{
  // sigma(t) = (cos t, sin t) at t = 0
  const CarState s = flat_to_state({1, 0}, {0, 1}, {-1, 0}, Gear::kForward, params_with_wheelbase(0.6));
  EXPECT_NEAR(s.kappa, 1.0, 1e-15);
  EXPECT_NEAR(s.theta, std::numbers::pi / 2, 1e-15);
  EXPECT_NEAR(s.phi, std::atan(0.6), 1e-15);
}

TEST(FlatMap, SingularSpeedThrows)
{
  try {
    flat_to_state({0, 0}, {1e-7, 0}, {1, 0}, Gear::kForward, params_with_wheelbase(0.6), 3.5);
    FAIL() << "expected SingularSpeedError";
  } catch (const SingularSpeedError & e) {
    EXPECT_DOUBLE_EQ(e.time(), 3.5);
  }
}

TEST(FlatMap, CurvatureLimit)
{
  KinematicParams p;
  p.wheelbase = 1.0;
  p.phi_max = std::numbers::pi / 4;
  EXPECT_NEAR(curvature_limit(p), 1.0, 1e-15);
  p.wheelbase = 0.6;
  p.phi_max = 0.7;
  EXPECT_NEAR(curvature_limit(p), 1.40381, 1e-5);
  EXPECT_NEAR(curvature_limit(p), std::tan(0.7) / 0.6, 1e-15);
  p.phi_max = 0.0;
  EXPECT_EQ(curvature_limit(p), 0.0);
}

TEST(FlatMap, ParamsValidation)
{
  KinematicParams p;
  EXPECT_NO_THROW(p.validate());
  p.phi_max = std::numbers::pi / 2;
  EXPECT_THROW(p.validate(), DomainError);
  p = {};
  p.wheelbase = 0.0;
  EXPECT_THROW(p.validate(), DomainError);
  EXPECT_THROW(gear_from_int(0), DomainError);
}

TEST(FlatMap, Properties)
{
  testing::Rng rng(21);
  const KinematicParams params = params_with_wheelbase(0.7);
  for (int i = 0; i < 2000; ++i) {
    const Eigen::Vector2d sigma(rng.uniform(-5, 5), rng.uniform(-5, 5));
    const Eigen::Vector2d d1(rng.uniform(-3, 3), rng.uniform(-3, 3));
    const Eigen::Vector2d d2(rng.uniform(-3, 3), rng.uniform(-3, 3));
    if (d1.norm() < 1e-3) {
      continue;
    }
    const CarState f = flat_to_state(sigma, d1, d2, Gear::kForward, params);
    const CarState r = flat_to_state(sigma, d1, d2, Gear::kReverse, params);

    // Tangential and normal parts recompose the flat acceleration.
    const double acc2 = d2.squaredNorm();
    EXPECT_NEAR(f.a_t * f.a_t + f.a_n * f.a_n, acc2, 1e-9 * std::max(1.0, acc2));

    // Reversing negates v, a_t, a_n, kappa and turns the heading by pi.
    EXPECT_EQ(r.v, -f.v);
    EXPECT_EQ(r.a_t, -f.a_t);
    EXPECT_EQ(r.a_n, -f.a_n);
    EXPECT_EQ(r.kappa, -f.kappa);
    const double dtheta = std::remainder(r.theta - f.theta - std::numbers::pi, 2 * std::numbers::pi);
    EXPECT_NEAR(dtheta, 0.0, 1e-12);

    EXPECT_NEAR(f.phi, std::atan(f.kappa * params.wheelbase), 1e-9);
    EXPECT_LT(std::abs(f.phi), std::numbers::pi / 2);
    if (std::abs(f.phi) > 1e-9) {
      EXPECT_NEAR(f.kappa, std::tan(f.phi) / params.wheelbase, 1e-9 * std::max(1.0, std::abs(f.kappa)));
    }
  }
}

TEST(FlatMap, HeadingRateMatchesBicycleModel)
{
  // Along sigma(t) = (t, 0.3 t^2), theta' must equal v tan(phi) / L in both gears.
  const KinematicParams params = params_with_wheelbase(0.5);
  auto state = [&](double t, Gear g) {
    return flat_to_state({t, 0.3 * t * t}, {1.0, 0.6 * t}, {0.0, 0.6}, g, params);
  };
  for (Gear g : {Gear::kForward, Gear::kReverse}) {
    for (double t : {-1.0, 0.0, 0.7, 2.0}) {
      const double h = 1e-6;
      const double rate = std::remainder(state(t + h, g).theta - state(t - h, g).theta, 2 * std::numbers::pi) / (2 * h);
      const CarState s = state(t, g);
      EXPECT_NEAR(rate, s.v * std::tan(s.phi) / params.wheelbase, 1e-6);
      const double dv = (state(t + h, g).v - state(t - h, g).v) / (2 * h);
      EXPECT_NEAR(dv, s.a_t, 1e-6);
    }
  }
}

}  // namespace
}  // namespace flatcar
