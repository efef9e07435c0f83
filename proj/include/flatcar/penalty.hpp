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

#ifndef FLATCAR__PENALTY_HPP_
#define FLATCAR__PENALTY_HPP_

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

// ---------------------------------------------------------------------------
// Constraint set
// ---------------------------------------------------------------------------

struct SpeedLimit
{
  double v_max;
};

struct AccelLimit
{
  double a_max;
};

struct CurvatureLimit
{
  double kappa_max;
};

struct Circle
{
  Eigen::Vector2d center;
  double radius;
};

struct ObstacleClearance
{
  std::vector<Circle> circles;
  double robot_radius;
};

struct MutualClearance
{
  double min_separation;
};

using ConstraintSpec = std::variant<SpeedLimit, AccelLimit, CurvatureLimit, ObstacleClearance, MutualClearance>;

enum class ConstraintKind : int { kSpeed = 0, kAccel, kCurvature, kObstacle, kMutual };
inline constexpr int kConstraintKinds = 5;

inline constexpr std::array<std::string_view, kConstraintKinds> kConstraintNames{
  "speed", "accel", "curvature", "obstacle", "mutual"};

inline ConstraintKind kind_of(const ConstraintSpec & spec)
{
  return static_cast<ConstraintKind>(spec.index());
}

inline void validate(const ConstraintSpec & spec)
{
  const bool ok = std::visit(
    [](const auto & c) {
      using T = std::decay_t<decltype(c)>;
      if constexpr (std::is_same_v<T, SpeedLimit>) {
        return c.v_max > 0.0;
      } else if constexpr (std::is_same_v<T, AccelLimit>) {
        return c.a_max > 0.0;
      } else if constexpr (std::is_same_v<T, CurvatureLimit>) {
        return c.kappa_max > 0.0;
      } else if constexpr (std::is_same_v<T, ObstacleClearance>) {
        return c.robot_radius > 0.0 &&
               std::all_of(c.circles.begin(), c.circles.end(), [](const Circle & o) { return o.radius > 0.0; });
      } else {
        return c.min_separation > 0.0;
      }
    },
    spec);
  if (!ok) {
    throw DomainError("constraint limits must be strictly positive");
  }
}

/// Per-kind weights, indexed by ConstraintKind.
struct PenaltyWeights
{
  std::array<double, kConstraintKinds> w{1e2, 1e2, 1e2, 1e2, 1e2};

  double & operator[](ConstraintKind k) { return w[static_cast<int>(k)]; }
  double operator[](ConstraintKind k) const { return w[static_cast<int>(k)]; }
};

struct PenaltyConfig
{
  PenaltyWeights weights;
  double a0{1e-4};
  int samples_per_piece{16};
  /// End nodes of every piece are moved inward by this fraction of its duration.
  double endpoint_nudge{1e-3};

  void validate() const
  {
    if (!(a0 > 0.0) || samples_per_piece < 4) {
      throw DomainError("penalty config: need a0 > 0 and at least 4 samples per piece");
    }
    for (double x : weights.w) {
      if (!(x >= 0.0)) {
        throw DomainError("penalty weights must be nonnegative");
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Smoothed hinge
// ---------------------------------------------------------------------------

struct SmoothL1
{
  double value;
  double derivative;
};

/// C^1 relaxation of max(x, 0): zero below 0, quartic blend on (0, a0], linear after.
inline SmoothL1 smooth_l1(double x, double a0)
{
  if (x <= 0.0) {
    return {0.0, 0.0};
  }
  if (x <= a0) {
    const double x2 = x * x;
    const double inv_a0_2 = 1.0 / (a0 * a0);
    const double inv_a0_3 = inv_a0_2 / a0;
    return {(-0.5 * x * inv_a0_3 + inv_a0_2) * x2 * x, (-2.0 * x * inv_a0_3 + 3.0 * inv_a0_2) * x2};
  }
  return {x - 0.5 * a0, 1.0};
}

// ---------------------------------------------------------------------------
// Pointwise constraint values
// ---------------------------------------------------------------------------

/// One scalar component g <= 0 and its partials with respect to the sample
/// (and the peer position for mutual clearance).
struct ConstraintSample
{
  double g{0.0};
  FlatState d;
  Eigen::Vector2d d_peer{Eigen::Vector2d::Zero()};
};

namespace detail
{

// With ActiveOnly set, obstacle components that are strictly satisfied are
// skipped before their partials are formed.
template <bool ActiveOnly = false, typename F>
void for_each_component(
  const ConstraintSpec & spec, const FlatState & x, const Eigen::Vector2d * peer, double t, F && f)
{
  std::visit(
    [&](const auto & c) {
      using T = std::decay_t<decltype(c)>;
      ConstraintSample s;
      if constexpr (std::is_same_v<T, SpeedLimit>) {
        s.g = x.vel.squaredNorm() - c.v_max * c.v_max;
        s.d.vel = 2.0 * x.vel;
        f(s);
      } else if constexpr (std::is_same_v<T, AccelLimit>) {
        s.g = x.acc.squaredNorm() - c.a_max * c.a_max;
        s.d.acc = 2.0 * x.acc;
        f(s);
      } else if constexpr (std::is_same_v<T, CurvatureLimit>) {
        const double speed_sq = x.vel.squaredNorm();
        if (!(std::sqrt(speed_sq) >= kSingularSpeed)) {
          throw SingularSpeedError("curvature constraint evaluated at singular speed", t);
        }
        const double cross = x.vel.x() * x.acc.y() - x.vel.y() * x.acc.x();
        const double k2 = c.kappa_max * c.kappa_max;
        const double s4 = speed_sq * speed_sq;
        s.g = cross * cross - k2 * s4 * speed_sq;
        s.d.vel = 2.0 * cross * Eigen::Vector2d(x.acc.y(), -x.acc.x()) - 6.0 * k2 * s4 * x.vel;
        s.d.acc = 2.0 * cross * Eigen::Vector2d(-x.vel.y(), x.vel.x());
        f(s);
      } else if constexpr (std::is_same_v<T, ObstacleClearance>) {
        for (const Circle & o : c.circles) {
          const double r = o.radius + c.robot_radius;
          const Eigen::Vector2d diff = x.pos - o.center;
          const double g = r * r - diff.squaredNorm();
          if (ActiveOnly && g <= 0.0) {
            continue;
          }
          ConstraintSample oc;
          oc.g = g;
          oc.d.pos = -2.0 * diff;
          f(oc);
        }
      } else {
        if (peer == nullptr) {
          throw DomainError("mutual clearance needs a peer sample");
        }
        const Eigen::Vector2d diff = x.pos - *peer;
        s.g = c.min_separation * c.min_separation - diff.squaredNorm();
        s.d.pos = -2.0 * diff;
        s.d_peer = 2.0 * diff;
        f(s);
      }
    },
    spec);
}

}  // namespace detail

/**
 * Evaluates every scalar component of a constraint at one flat sample.
 * Obstacle clearance yields one component per circle; the other kinds yield one.
 */
inline std::vector<ConstraintSample> constraint_value(
  const ConstraintSpec & spec, const FlatState & sample, const Eigen::Vector2d * peer = nullptr,
  double t = std::numeric_limits<double>::quiet_NaN())
{
  std::vector<ConstraintSample> out;
  detail::for_each_component(spec, sample, peer, t, [&](const ConstraintSample & s) { out.push_back(s); });
  return out;
}

// ---------------------------------------------------------------------------
// Discretized penalty integral
// ---------------------------------------------------------------------------

/// Per-agent constraints (everything but mutual clearance, which is shared).
struct PenaltyProblem
{
  std::vector<std::vector<ConstraintSpec>> agent_specs;
  std::optional<MutualClearance> mutual;
  PenaltyConfig config;
};

struct PenaltyResult
{
  double value{0.0};
  std::array<double, kConstraintKinds> by_kind{};
  std::vector<TrajectoryGradient> gradients;
};

namespace detail
{

struct QuadratureNode
{
  double fraction;  // u / T
  double weight;    // trapezoid weight / T
};

inline std::vector<QuadratureNode> quadrature_nodes(const PenaltyConfig & cfg)
{
  const int n = cfg.samples_per_piece;
  std::vector<QuadratureNode> nodes(n + 1);
  for (int k = 0; k <= n; ++k) {
    nodes[k].fraction = static_cast<double>(k) / n;
    nodes[k].weight = (k == 0 || k == n ? 0.5 : 1.0) / n;
  }
  nodes.front().fraction = cfg.endpoint_nudge;
  nodes.back().fraction = 1.0 - cfg.endpoint_nudge;
  return nodes;
}

inline FlatState sample_at(const PolyPiece & p, double u)
{
  return {p.eval(u, 0), p.eval(u, 1), p.eval(u, 2)};
}

// Walks a trajectory's pieces for nondecreasing query times; each query
// returns exactly what locate_clamped() would.
class PieceCursor
{
public:
  explicit PieceCursor(const AgentTrajectory & traj) : traj_(&traj), total_(traj.total_duration()) {}

  PieceLocation locate(double t)
  {
    const auto & segs = traj_->segments();
    const int ns = traj_->segment_count();
    for (;;) {
      const Segment & seg = segs[s_];
      const double dur = seg.piece_duration();
      const bool last = (s_ == ns - 1) && (j_ == seg.piece_count() - 1);
      if (t < start_ + dur || last) {
        PieceLocation loc{s_, j_, t - start_, false};
        if (loc.u < 0.0) {
          loc.u = 0.0;
        }
        const bool past_end = t > total_;
        if (loc.u > dur || past_end) {
          loc.u = dur;
        }
        loc.clamped = past_end;
        return loc;
      }
      start_ += dur;
      if (++j_ == seg.piece_count()) {
        j_ = 0;
        ++s_;
      }
    }
  }

private:
  const AgentTrajectory * traj_;
  double total_;
  int s_{0};
  int j_{0};
  double start_{0.0};
};

inline bool below_singular_speed(const ConstraintSpec & spec, const FlatState & x)
{
  return std::holds_alternative<CurvatureLimit>(spec) && !(x.vel.norm() >= kSingularSpeed);
}

}  // namespace detail

/**
 * Total penalty S over all agents, constraint kinds and pieces, integrated by
 * a composite trapezoid rule on each piece, with gradients with respect to
 * every coefficient block and every segment duration.
 *
 * Mutual clearance of a pair is integrated on both agents' grids with weight
 * one half each; an agent past its horizon holds its final position.
 * Curvature samples at rest (speed below kSingularSpeed) contribute nothing.
 */
inline PenaltyResult total_penalty(const std::vector<AgentTrajectory> & agents, const PenaltyProblem & problem)
{
  const PenaltyConfig & cfg = problem.config;
  cfg.validate();
  if (problem.agent_specs.size() != agents.size()) {
    throw DomainError("total_penalty: one constraint list per agent required");
  }
  const auto nodes = detail::quadrature_nodes(cfg);
  const int n_agents = static_cast<int>(agents.size());

  PenaltyResult r;
  r.gradients.reserve(n_agents);
  for (const auto & a : agents) {
    r.gradients.push_back(TrajectoryGradient::zeros_like(a));
  }

  const bool use_mutual = problem.mutual && cfg.weights[ConstraintKind::kMutual] != 0.0;
  const ConstraintSpec mutual_spec = problem.mutual ? ConstraintSpec{*problem.mutual} : ConstraintSpec{};

  for (int a = 0; a < n_agents; ++a) {
    const AgentTrajectory & traj = agents[a];
    TrajectoryGradient & grad = r.gradients[a];
    std::vector<detail::PieceCursor> cursors;
    if (use_mutual) {
      cursors.reserve(n_agents);
      for (const auto & other : agents) {
        cursors.emplace_back(other);
      }
    }
    double seg_start = 0.0;
    for (int s = 0; s < traj.segment_count(); ++s) {
      const Segment & seg = traj.segments()[s];
      const double dur = seg.piece_duration();
      for (int j = 0; j < seg.piece_count(); ++j) {
        const PolyPiece & piece = seg.pieces[j];
        for (const auto & node : nodes) {
          const double u = node.fraction * dur;
          const PieceLocation loc{s, j, u, false};
          const FlatState x = detail::sample_at(piece, u);
          const double t = seg_start + j * dur + u;
          const double w = node.weight * dur;

          for (const ConstraintSpec & spec : problem.agent_specs[a]) {
            const ConstraintKind kind = kind_of(spec);
            const double wd = cfg.weights[kind];
            if (wd == 0.0 || detail::below_singular_speed(spec, x)) {
              continue;
            }
            detail::for_each_component<true>(spec, x, nullptr, t, [&](const ConstraintSample & cs) {
              const SmoothL1 l1 = smooth_l1(cs.g, cfg.a0);
              if (l1.value == 0.0 && l1.derivative == 0.0) {
                return;
              }
              const double contrib = wd * w * l1.value;
              r.value += contrib;
              r.by_kind[static_cast<int>(kind)] += contrib;
              const double scale = wd * w * l1.derivative;
              FlatState d{scale * cs.d.pos, scale * cs.d.vel, scale * cs.d.acc};
              const double du = accumulate_sample(grad, traj, loc, d);
              grad.segments[s].duration += du * node.fraction + wd * node.weight * l1.value;
            });
          }

          if (!use_mutual) {
            continue;
          }
          const double wd = cfg.weights[ConstraintKind::kMutual];
          for (int q = 0; q < n_agents; ++q) {
            if (q == a) {
              continue;
            }
            const AgentTrajectory & other = agents[q];
            const PieceLocation loc_q = cursors[q].locate(t);
            const PolyPiece & piece_q = other.piece(loc_q);
            const Eigen::Vector2d peer = piece_q.eval(loc_q.u, 0);
            detail::for_each_component(mutual_spec, x, &peer, t, [&](const ConstraintSample & cs) {
              const SmoothL1 l1 = smooth_l1(cs.g, cfg.a0);
              if (l1.value == 0.0 && l1.derivative == 0.0) {
                return;
              }
              const double half_w = 0.5 * w;
              const double contrib = wd * half_w * l1.value;
              r.value += contrib;
              r.by_kind[static_cast<int>(ConstraintKind::kMutual)] += contrib;
              const double scale = wd * half_w * l1.derivative;

              // Own sample moves with its piece duration through u = f T.
              FlatState d_own;
              d_own.pos = scale * cs.d.pos;
              const double du_own = accumulate_sample(grad, traj, loc, d_own);
              grad.segments[s].duration += du_own * node.fraction + wd * 0.5 * node.weight * l1.value;

              // Peer sample sits at global time t of this agent's grid.
              FlatState d_peer;
              d_peer.pos = scale * cs.d_peer;
              TrajectoryGradient & grad_q = r.gradients[q];
              const double du_q = accumulate_sample(grad_q, other, loc_q, d_peer);
              distribute_local_time(grad_q, other, loc_q, du_q);
              const double dt = loc_q.clamped ? 0.0 : du_q;
              if (dt != 0.0) {
                for (int sp = 0; sp < s; ++sp) {
                  grad.segments[sp].duration += dt * traj.segments()[sp].piece_count();
                }
                grad.segments[s].duration += dt * (j + node.fraction);
              }
            });
          }
        }
      }
      seg_start += seg.duration();
    }
  }
  return r;
}

/// Largest raw constraint value per kind on the penalty sample grid (0 when satisfied).
inline std::array<double, kConstraintKinds> max_violation(
  const std::vector<AgentTrajectory> & agents, const PenaltyProblem & problem)
{
  std::array<double, kConstraintKinds> worst{};
  const auto nodes = detail::quadrature_nodes(problem.config);
  const int n_agents = static_cast<int>(agents.size());
  for (int a = 0; a < n_agents; ++a) {
    const AgentTrajectory & traj = agents[a];
    double seg_start = 0.0;
    for (const Segment & seg : traj.segments()) {
      const double dur = seg.piece_duration();
      for (int j = 0; j < seg.piece_count(); ++j) {
        for (const auto & node : nodes) {
          const double u = node.fraction * dur;
          const FlatState x = detail::sample_at(seg.pieces[j], u);
          const double t = seg_start + j * dur + u;
          for (const ConstraintSpec & spec : problem.agent_specs[a]) {
            if (detail::below_singular_speed(spec, x)) {
              continue;
            }
            const int k = static_cast<int>(kind_of(spec));
            detail::for_each_component<true>(spec, x, nullptr, t, [&](const ConstraintSample & cs) {
              worst[k] = std::max(worst[k], cs.g);
            });
          }
          if (problem.mutual) {
            for (int q = 0; q < n_agents; ++q) {
              if (q == a) {
                continue;
              }
              const PieceLocation lq = agents[q].locate_clamped(t);
              const Eigen::Vector2d peer = agents[q].piece(lq).eval(lq.u, 0);
              const double g = problem.mutual->min_separation * problem.mutual->min_separation -
                               (x.pos - peer).squaredNorm();
              worst[static_cast<int>(ConstraintKind::kMutual)] =
                std::max(worst[static_cast<int>(ConstraintKind::kMutual)], g);
            }
          }
        }
      }
      seg_start += seg.duration();
    }
  }
  return worst;
}

}  // namespace flatcar

#endif  // FLATCAR__PENALTY_HPP_
