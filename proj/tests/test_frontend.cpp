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
#include <numbers>
#include <vector>

#include "flatcar/frontend.hpp"
#include "test_support.hpp"

namespace flatcar
{
namespace
{

constexpr double kPi = std::numbers::pi;

GridMap empty_map(double half = 10.0) { return GridMap({-half, half, -half, half}, 0.15, {}, 0.3); }

// Distance from a point to a polyline.
double polyline_distance(const Eigen::Vector2d & p, const CoarsePath & path)
{
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < path.size(); ++i) {
    const Eigen::Vector2d a(path[i - 1].x, path[i - 1].y);
    const Eigen::Vector2d b(path[i].x, path[i].y);
    const Eigen::Vector2d ab = b - a;
    const double t = ab.squaredNorm() > 0.0 ? std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0) : 0.0;
    best = std::min(best, (a + t * ab - p).norm());
  }
  return best;
}

TEST(GridMap, ConservativeRasterization)
{
  const Circle c{{1.0, 1.0}, 0.5};
  const GridMap map({0, 4, 0, 3}, 0.1, {c}, 0.25);
  EXPECT_EQ(map.width(), 40);
  EXPECT_EQ(map.height(), 30);
  for (int iy = 0; iy < map.height(); ++iy) {
    for (int ix = 0; ix < map.width(); ++ix) {
      const bool inside = (map.cell_center(ix, iy) - c.center).norm() <= 0.75;
      ASSERT_EQ(map.cell_occupied(ix, iy), inside) << ix << "," << iy;
    }
  }
  EXPECT_TRUE(map.occupied(-0.01, 1.0));
  EXPECT_TRUE(map.occupied(1.0, 3.5));
  EXPECT_FALSE(map.occupied(3.0, 2.0));
  EXPECT_THROW(GridMap({0, 1, 0, 1}, 0.0, {}, 0.1), DomainError);
}

TEST(Search, StraightRunOnEmptyMap)
{
  const CoarsePath path = search({0, 0, 0}, {5, 0, 0}, empty_map(), {});
  ASSERT_GE(path.size(), 2u);
  for (const PathPose & p : path) {
    EXPECT_EQ(p.dir, Gear::kForward);
  }
  EXPECT_NEAR(path_length(path), 5.0, 0.05 * 5.0);
  EXPECT_LE(std::hypot(path.back().x - 5.0, path.back().y), 0.2);
}

TEST(Search, GoalBehindUsesReverse)
{
  const CoarsePath path = search({0, 0, 0}, {-1, 0, 0}, empty_map(), {});
  bool reverse = false;
  for (const PathPose & p : path) {
    reverse = reverse || p.dir == Gear::kReverse;
  }
  EXPECT_TRUE(reverse);
  EXPECT_LE(std::hypot(path.back().x + 1.0, path.back().y), 0.2);
}

TEST(Search, GoalInsideObstacleHasNoPath)
{
  const GridMap map({-5, 5, -5, 5}, 0.15, {{{3.0, 0.0}, 0.8}}, 0.3);
  EXPECT_THROW(search({0, 0, 0}, {3, 0, 0}, map, {}), NoPathError);
}

TEST(Search, EnclosedStartHasNoPath)
{
  std::vector<Circle> ring;
  for (int k = 0; k < 24; ++k) {
    const double a = 2.0 * kPi * k / 24;
    ring.push_back({{2.0 * std::cos(a), 2.0 * std::sin(a)}, 0.4});
  }
  const GridMap map({-6, 6, -6, 6}, 0.15, ring, 0.3);
  EXPECT_THROW(search({0, 0, 0}, {5, 0, 0}, map, {}), NoPathError);
}

TEST(Search, PathAvoidsObstaclesAndMeetsTolerance)
{
  const std::vector<Circle> circles{{{3.0, 0.0}, 1.0}, {{6.0, 2.5}, 0.8}};
  const GridMap map({-2, 10, -5, 6}, 0.15, circles, 0.3);
  const PathPose goal{8.5, 1.0, kPi / 2};
  const CoarsePath path = search({0, 0, 0}, goal, map, {});
  for (const PathPose & p : path) {
    ASSERT_FALSE(map.occupied(p.x, p.y));
  }
  EXPECT_LE(std::hypot(path.back().x - goal.x, path.back().y - goal.y), 0.2);
  EXPECT_LE(std::abs(wrap_angle(path.back().theta - goal.theta)), 10.0 * kPi / 180.0 + 1e-12);
}

TEST(Search, ReachesArbitraryHeadings)
{
  testing::Rng rng(81);
  const GridMap map = empty_map(12.0);
  for (int trial = 0; trial < 10; ++trial) {
    const PathPose goal{rng.uniform(-6, 6), rng.uniform(-6, 6), rng.uniform(-kPi, kPi)};
    const CoarsePath path = search({0, 0, rng.uniform(-kPi, kPi)}, goal, map, {});
    EXPECT_LE(std::abs(wrap_angle(path.back().theta - goal.theta)), 10.0 * kPi / 180.0 + 1e-12);
  }
}

TEST(Search, Deterministic)
{
  const GridMap map({-2, 10, -5, 6}, 0.15, {{{3.0, 0.2}, 1.0}}, 0.3);
  const CoarsePath a = search({0, 0, 0}, {8, 0, kPi}, map, {});
  const CoarsePath b = search({0, 0, 0}, {8, 0, kPi}, map, {});
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].x, b[i].x);
    EXPECT_EQ(a[i].y, b[i].y);
    EXPECT_EQ(a[i].theta, b[i].theta);
    EXPECT_EQ(a[i].dir, b[i].dir);
  }
}

CoarsePath straight_path(double length, double step, Gear dir = Gear::kForward)
{
  CoarsePath p;
  const int n = static_cast<int>(std::round(length / step));
  for (int i = 0; i <= n; ++i) {
    p.push_back({sign(dir) * i * step, 0.0, 0.0, dir});
  }
  return p;
}

TEST(SegmentPath, StraightFiveMeters)
{
  const InitialGuess g = segment_path(straight_path(5.0, 0.25), {1.0, 1.0});
  ASSERT_EQ(g.gears.size(), 1u);
  EXPECT_EQ(g.gears[0], Gear::kForward);
  ASSERT_EQ(g.params.waypoints[0].cols(), 4);
  for (int i = 0; i < 4; ++i) {
    EXPECT_NEAR(g.params.waypoints[0](0, i), i + 1.0, 1e-12);
    EXPECT_NEAR(g.params.waypoints[0](1, i), 0.0, 1e-12);
  }
  EXPECT_NEAR(real_time(g.params.tau[0]), 1.0, 1e-12);
  EXPECT_TRUE(g.params.shifts.empty());
  EXPECT_TRUE(g.warnings.empty());
}

TEST(SegmentPath, ForwardThenReverse)
{
  CoarsePath p = straight_path(3.0, 0.5);
  for (int i = 1; i <= 4; ++i) {
    p.push_back({3.0 - 0.5 * i, 0.1 * i, 0.0, Gear::kReverse});
  }
  const InitialGuess g = segment_path(p, {1.0, 1.0});
  ASSERT_EQ(g.gears.size(), 2u);
  EXPECT_EQ(g.gears[0], Gear::kForward);
  EXPECT_EQ(g.gears[1], Gear::kReverse);
  ASSERT_EQ(g.params.shifts.size(), 1u);
  EXPECT_EQ(g.params.shifts[0].x, 3.0);
  EXPECT_EQ(g.params.shifts[0].y, 0.0);
  EXPECT_EQ(g.params.shifts[0].cusp_accel, 0.0);
  EXPECT_EQ(g.params.waypoints[0].cols(), 2);
  EXPECT_NEAR(g.run_lengths[0] + g.run_lengths[1], path_length(p), 1e-9);
}

TEST(SegmentPath, ZeroLengthRunIsDropped)
{
  CoarsePath p = straight_path(2.0, 0.5);
  p.push_back({2.0, 0.0, 0.0, Gear::kReverse});  // zero-length reverse blip
  for (int i = 1; i <= 4; ++i) {
    p.push_back({2.0 + 0.5 * i, 0.0, 0.0, Gear::kForward});
  }
  const InitialGuess g = segment_path(p, {1.0, 1.0});
  ASSERT_EQ(g.gears.size(), 1u);
  EXPECT_EQ(g.warnings.size(), 1u);
  EXPECT_NEAR(g.run_lengths[0], 4.0, 1e-12);
  EXPECT_EQ(g.params.waypoints[0].cols(), 3);
}

TEST(SegmentPath, PartitionAndResamplingOnSearchedPaths)
{
  const GridMap map({-2, 10, -5, 6}, 0.15, {{{3.0, 0.0}, 1.0}}, 0.3);
  const std::vector<PathPose> goals{{8, 1, 0}, {-1, 0, 0}, {6, -2, kPi}, {0, 2, -kPi / 2}};
  for (const PathPose & goal : goals) {
    const CoarsePath path = search({0, 0, 0}, goal, map, {});
    const InitialGuess g = segment_path(path, {1.0, 1.0});
    double total = 0.0;
    for (std::size_t s = 0; s < g.gears.size(); ++s) {
      total += g.run_lengths[s];
      for (int i = 0; i < g.params.waypoints[s].cols(); ++i) {
        EXPECT_LE(polyline_distance(g.params.waypoints[s].col(i), path), 0.15 / 2);
      }
      if (s > 0) {
        EXPECT_NE(g.gears[s], g.gears[s - 1]);
      }
    }
    EXPECT_NEAR(total, path_length(path), 1e-9);
    EXPECT_EQ(g.params.shifts.size() + 1, g.gears.size());
  }
}

TEST(SegmentPath, DebugJson)
{
  const nlohmann::json j = path_to_json(straight_path(1.0, 0.5, Gear::kReverse));
  ASSERT_EQ(j["points"].size(), 3u);
  EXPECT_EQ(j["points"][1]["dir"], -1);
  EXPECT_DOUBLE_EQ(j["length"].get<double>(), 1.0);
}

}  // namespace
}  // namespace flatcar
