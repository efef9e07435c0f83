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

#ifndef FLATCAR__TRAJECTORY_HPP_
#define FLATCAR__TRAJECTORY_HPP_

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <vector>

#include "flatcar/banded.hpp"
#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"

namespace flatcar
{

/// Monomial coefficients of one quintic piece, one column per axis, ascending degree.
using CoeffMatrix = Eigen::Matrix<double, 6, 2>;

inline constexpr int kPolyOrder = 6;

/// Position, velocity and acceleration of the flat output.
struct FlatState
{
  Eigen::Vector2d pos{Eigen::Vector2d::Zero()};
  Eigen::Vector2d vel{Eigen::Vector2d::Zero()};
  Eigen::Vector2d acc{Eigen::Vector2d::Zero()};

  bool operator==(const FlatState &) const = default;
};

/// Row vector of d^order/du^order [1, u, ..., u^5].
inline Eigen::Matrix<double, 1, 6> monomial_basis(double u, int order)
{
  Eigen::Matrix<double, 1, 6> b = Eigen::Matrix<double, 1, 6>::Zero();
  for (int k = order; k < kPolyOrder; ++k) {
    double factor = 1.0;
    for (int m = 0; m < order; ++m) {
      factor *= static_cast<double>(k - m);
    }
    b(k) = factor * std::pow(u, k - order);
  }
  return b;
}

struct PolyPiece
{
  CoeffMatrix coeffs{CoeffMatrix::Zero()};
  double duration{1.0};

  Eigen::Vector2d eval(double u, int order) const
  {
    // Horner on the differentiated coefficients.
    Eigen::Vector2d r = Eigen::Vector2d::Zero();
    for (int k = kPolyOrder - 1; k >= order; --k) {
      double factor = 1.0;
      for (int m = 0; m < order; ++m) {
        factor *= static_cast<double>(k - m);
      }
      r = r * u + factor * coeffs.row(k).transpose();
    }
    return r;
  }
};

struct Segment
{
  Gear eta{Gear::kForward};
  std::vector<PolyPiece> pieces;

  int piece_count() const { return static_cast<int>(pieces.size()); }
  double piece_duration() const { return pieces.front().duration; }
  double duration() const { return piece_duration() * piece_count(); }
};

/// Where a global time lands: segment, piece, local time within the piece.
struct PieceLocation
{
  int segment{0};
  int piece{0};
  double u{0.0};
  bool clamped{false};  // true when the query was past the end and held the terminal state
};

class AgentTrajectory
{
public:
  AgentTrajectory() = default;
  explicit AgentTrajectory(std::vector<Segment> segments) : segments_(std::move(segments)) { validate(); }

  const std::vector<Segment> & segments() const { return segments_; }
  std::vector<Segment> & mutable_segments() { return segments_; }
  int segment_count() const { return static_cast<int>(segments_.size()); }
  bool empty() const { return segments_.empty(); }

  double total_duration() const
  {
    double total = 0.0;
    for (const auto & s : segments_) {
      total += s.duration();
    }
    return total;
  }

  double segment_start(int segment) const
  {
    double t = 0.0;
    for (int s = 0; s < segment; ++s) {
      t += segments_[s].duration();
    }
    return t;
  }

  /// Locates t in [0, total]; junction times resolve to the right-hand piece.
  PieceLocation locate(double t) const
  {
    if (segments_.empty()) {
      throw DomainError("locate: empty trajectory");
    }
    const double total = total_duration();
    if (!(t >= 0.0) || t > total) {
      std::ostringstream os;
      os << "time " << t << " outside [0, " << total << "]";
      throw DomainError(os.str());
    }
    return locate_clamped(t);
  }

  /// Like locate(), but times past the end hold the terminal state.
  PieceLocation locate_clamped(double t) const
  {
    const bool past_end = t > total_duration();
    double start = 0.0;
    const int ns = segment_count();
    for (int s = 0; s < ns; ++s) {
      const Segment & seg = segments_[s];
      const double dur = seg.piece_duration();
      const int m = seg.piece_count();
      for (int j = 0; j < m; ++j) {
        const bool last = (s == ns - 1) && (j == m - 1);
        if (t < start + dur || last) {
          PieceLocation loc{s, j, t - start, false};
          if (loc.u < 0.0) {
            loc.u = 0.0;
          }
          if (loc.u > dur || past_end) {
            loc.u = dur;
          }
          loc.clamped = past_end;
          return loc;
        }
        start += dur;
      }
    }
    return {};  // unreachable
  }

  const PolyPiece & piece(const PieceLocation & loc) const
  {
    return segments_[loc.segment].pieces[loc.piece];
  }

  Eigen::Vector2d eval(double t, int order) const
  {
    if (order < 0 || order > 5) {
      throw DomainError("eval: derivative order must be in [0, 5]");
    }
    const PieceLocation loc = locate(t);
    return piece(loc).eval(loc.u, order);
  }

  FlatState flat_state(double t) const
  {
    const PieceLocation loc = locate(t);
    const PolyPiece & p = piece(loc);
    return {p.eval(loc.u, 0), p.eval(loc.u, 1), p.eval(loc.u, 2)};
  }

  Gear gear_at(double t) const { return segments_[locate(t).segment].eta; }

  FlatState start_state() const
  {
    const PolyPiece & p = segments_.front().pieces.front();
    return {p.eval(0.0, 0), p.eval(0.0, 1), p.eval(0.0, 2)};
  }

  FlatState end_state() const
  {
    const PolyPiece & p = segments_.back().pieces.back();
    return {p.eval(p.duration, 0), p.eval(p.duration, 1), p.eval(p.duration, 2)};
  }

  void validate() const
  {
    for (const auto & seg : segments_) {
      if (seg.pieces.empty()) {
        throw DomainError("segment without pieces");
      }
      const double dur = seg.piece_duration();
      for (const auto & p : seg.pieces) {
        if (!(p.duration > 0.0) || !std::isfinite(p.duration)) {
          throw DomainError("piece duration must be finite and positive");
        }
        if (p.duration != dur) {
          throw DomainError("pieces of one segment must share their duration");
        }
        if (!p.coeffs.allFinite()) {
          throw DomainError("non-finite polynomial coefficients");
        }
      }
    }
  }

private:
  std::vector<Segment> segments_;
};

/// Gradient of a scalar with respect to every coefficient matrix and every
/// segment's shared piece duration. Same shape as the trajectory it refers to.
struct TrajectoryGradient
{
  struct SegmentPart
  {
    std::vector<CoeffMatrix> coeffs;
    double duration{0.0};
  };
  std::vector<SegmentPart> segments;

  static TrajectoryGradient zeros_like(const AgentTrajectory & traj)
  {
    TrajectoryGradient g;
    g.segments.resize(traj.segment_count());
    for (int s = 0; s < traj.segment_count(); ++s) {
      g.segments[s].coeffs.assign(traj.segments()[s].piece_count(), CoeffMatrix::Zero());
    }
    return g;
  }

  TrajectoryGradient & operator+=(const TrajectoryGradient & other)
  {
    for (std::size_t s = 0; s < segments.size(); ++s) {
      for (std::size_t j = 0; j < segments[s].coeffs.size(); ++j) {
        segments[s].coeffs[j] += other.segments[s].coeffs[j];
      }
      segments[s].duration += other.segments[s].duration;
    }
    return *this;
  }
};

/**
 * Accumulates the effect of a sample's flat-state sensitivity into a gradient.
 *
 * d_state holds dJ/d(sigma, sigma', sigma'') at the located sample. Returns
 * dJ/du, the sensitivity to the sample's local time, which callers distribute
 * onto durations according to how the sample time depends on them.
 */
inline double accumulate_sample(
  TrajectoryGradient & grad, const AgentTrajectory & traj, const PieceLocation & loc,
  const FlatState & d_state)
{
  const PolyPiece & p = traj.piece(loc);
  CoeffMatrix & gc = grad.segments[loc.segment].coeffs[loc.piece];
  const std::array<const Eigen::Vector2d *, 3> d{&d_state.pos, &d_state.vel, &d_state.acc};
  double du = 0.0;
  for (int k = 0; k < 3; ++k) {
    if (d[k]->isZero(0.0)) {
      continue;
    }
    gc.noalias() += monomial_basis(loc.u, k).transpose() * d[k]->transpose();
    du += d[k]->dot(p.eval(loc.u, k + 1));
  }
  return du;
}

/**
 * Distributes dJ/du of a sample at a fixed global time onto durations:
 * u = t - start(piece), so every preceding piece contributes -1 per unit of
 * its segment's duration. Clamped samples sit at u = T of the last piece.
 */
inline void distribute_local_time(
  TrajectoryGradient & grad, const AgentTrajectory & traj, const PieceLocation & loc, double du)
{
  if (loc.clamped) {
    grad.segments[loc.segment].duration += du;
    return;
  }
  for (int s = 0; s < loc.segment; ++s) {
    grad.segments[s].duration -= du * traj.segments()[s].piece_count();
  }
  grad.segments[loc.segment].duration -= du * loc.piece;
}

// ---------------------------------------------------------------------------
// Control effort
// ---------------------------------------------------------------------------

struct EffortResult
{
  double value{0.0};
  TrajectoryGradient gradient;
};

/// Exact integral of jerk^T W jerk over every piece, with analytic gradients.
inline EffortResult control_effort(const AgentTrajectory & traj, const Eigen::Matrix2d & weight)
{
  EffortResult r;
  r.gradient = TrajectoryGradient::zeros_like(traj);
  const Eigen::Matrix2d w = 0.5 * (weight + weight.transpose());
  for (int s = 0; s < traj.segment_count(); ++s) {
    const Segment & seg = traj.segments()[s];
    const double t1 = seg.piece_duration();
    const double t2 = t1 * t1;
    const double t3 = t2 * t1;
    const double t4 = t3 * t1;
    const double t5 = t4 * t1;
    // Gram matrix of the jerk basis [6, 24u, 60u^2] over [0, T].
    Eigen::Matrix3d gram;
    gram << 36.0 * t1, 72.0 * t2, 120.0 * t3,
            72.0 * t2, 192.0 * t3, 360.0 * t4,
            120.0 * t3, 360.0 * t4, 720.0 * t5;
    for (int j = 0; j < seg.piece_count(); ++j) {
      const PolyPiece & p = seg.pieces[j];
      const Eigen::Matrix<double, 3, 2> c = p.coeffs.bottomRows<3>();
      const Eigen::Matrix<double, 3, 2> gc = gram * c;
      r.value += (c.transpose() * gc * w).trace();
      r.gradient.segments[s].coeffs[j].bottomRows<3>() += 2.0 * gc * w;
      const Eigen::Vector2d jerk_end = p.eval(t1, 3);
      r.gradient.segments[s].duration += jerk_end.dot(w * jerk_end);
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Coefficient solve for one segment
// ---------------------------------------------------------------------------

/// Sensitivities of a scalar with respect to the inputs of one segment solve.
struct SegmentInputGradient
{
  FlatState head;
  FlatState tail;
  Eigen::Matrix2Xd waypoints;
  double duration{0.0};
};

/**
 * Workspace that solves the 6M x 6M banded system mapping boundary states,
 * interior waypoints and a shared piece duration onto quintic coefficients.
 *
 * Row layout per interior junction i (base = 6i): position of piece i at T
 * equals the waypoint, derivative orders 1..4 match the next piece, and the
 * next piece starts at the waypoint. The factorization is kept for adjoint
 * solves; single-threaded.
 */
class SegmentSolver
{
public:
  void solve(const FlatState & head, const FlatState & tail, const Eigen::Matrix2Xd & waypoints, double duration)
  {
    const int m = static_cast<int>(waypoints.cols()) + 1;
    if (m < 1) {
      throw DomainError("solve_coefficients: need at least one piece");
    }
    if (!(duration >= 1e-9) || !std::isfinite(duration)) {
      throw NumericalError("solve_coefficients: piece duration too small or non-finite");
    }
    head_ = head;
    tail_ = tail;
    waypoints_ = waypoints;
    duration_ = duration;
    pieces_ = m;

    const int n = 6 * m;
    lu_.resize(n, 5, 3);
    Eigen::MatrixX2d rhs = Eigen::MatrixX2d::Zero(n, 2);

    lu_(0, 0) = 1.0;
    lu_(1, 1) = 1.0;
    lu_(2, 2) = 2.0;
    rhs.row(0) = head.pos.transpose();
    rhs.row(1) = head.vel.transpose();
    rhs.row(2) = head.acc.transpose();

    std::array<Eigen::Matrix<double, 1, 6>, 5> end_rows;
    for (int d = 0; d < 5; ++d) {
      end_rows[d] = monomial_basis(duration, d);
    }
    static constexpr std::array<double, 5> kFactorial{1.0, 1.0, 2.0, 6.0, 24.0};

    for (int i = 0; i + 1 < m; ++i) {
      const int base = 6 * i;
      for (int k = 0; k < 6; ++k) {
        lu_(base + 3, base + k) = end_rows[0](k);
      }
      rhs.row(base + 3) = waypoints.col(i).transpose();
      for (int d = 1; d <= 4; ++d) {
        for (int k = d; k < 6; ++k) {
          lu_(base + 3 + d, base + k) = end_rows[d](k);
        }
        lu_(base + 3 + d, base + 6 + d) = -kFactorial[d];
      }
      lu_(base + 8, base + 6) = 1.0;
      rhs.row(base + 8) = waypoints.col(i).transpose();
    }
    const int base = 6 * (m - 1);
    for (int d = 0; d < 3; ++d) {
      for (int k = d; k < 6; ++k) {
        lu_(base + 3 + d, base + k) = end_rows[d](k);
      }
    }
    rhs.row(n - 3) = tail.pos.transpose();
    rhs.row(n - 2) = tail.vel.transpose();
    rhs.row(n - 1) = tail.acc.transpose();

    lu_.factorize();
    lu_.solve(rhs);
    if (!rhs.allFinite()) {
      throw NumericalError("solve_coefficients: non-finite coefficients");
    }
    coeffs_ = std::move(rhs);
    valid_ = true;
  }

  bool valid() const { return valid_; }
  int piece_count() const { return pieces_; }
  double duration() const { return duration_; }

  bool matches(const FlatState & head, const FlatState & tail, const Eigen::Matrix2Xd & waypoints, double duration) const
  {
    return valid_ && head == head_ && tail == tail_ && duration == duration_ &&
           waypoints.cols() == waypoints_.cols() && waypoints == waypoints_;
  }

  std::vector<PolyPiece> pieces() const
  {
    std::vector<PolyPiece> out(pieces_);
    for (int j = 0; j < pieces_; ++j) {
      out[j].coeffs = coeffs_.middleRows<6>(6 * j);
      out[j].duration = duration_;
    }
    return out;
  }

  /**
   * Adjoint of the solve. Takes dJ/dcoeffs (one 6x2 block per piece) and the
   * explicit dJ/dT; returns sensitivities to head, tail, waypoints and the
   * total derivative with respect to the shared duration.
   */
  SegmentInputGradient propagate(const std::vector<CoeffMatrix> & d_coeffs, double d_duration) const
  {
    if (!valid_) {
      throw ContractViolation("propagate: no factorization available");
    }
    if (static_cast<int>(d_coeffs.size()) != pieces_) {
      throw ContractViolation("propagate: gradient shape does not match the last solve");
    }
    const int n = 6 * pieces_;
    Eigen::MatrixX2d adj(n, 2);
    for (int j = 0; j < pieces_; ++j) {
      adj.middleRows<6>(6 * j) = d_coeffs[j];
    }
    lu_.solve_transpose(adj);

    SegmentInputGradient g;
    g.head.pos = adj.row(0).transpose();
    g.head.vel = adj.row(1).transpose();
    g.head.acc = adj.row(2).transpose();
    g.tail.pos = adj.row(n - 3).transpose();
    g.tail.vel = adj.row(n - 2).transpose();
    g.tail.acc = adj.row(n - 1).transpose();
    g.waypoints.resize(2, pieces_ - 1);
    for (int i = 0; i + 1 < pieces_; ++i) {
      g.waypoints.col(i) = (adj.row(6 * i + 3) + adj.row(6 * i + 8)).transpose();
    }

    // dA/dT * c has, in each T-dependent row, the next derivative at the
    // piece end; d(J)/dT = -adj^T (dA/dT c).
    double implicit = 0.0;
    for (int j = 0; j < pieces_; ++j) {
      const int base = 6 * j;
      const CoeffMatrix c = coeffs_.middleRows<6>(base);
      const bool last = j + 1 == pieces_;
      const int orders = last ? 3 : 5;
      for (int d = 0; d < orders; ++d) {
        Eigen::Vector2d next = Eigen::Vector2d::Zero();
        const Eigen::Matrix<double, 1, 6> b = monomial_basis(duration_, d + 1);
        next = (b * c).transpose();
        implicit -= adj.row(base + 3 + d).dot(next.transpose());
      }
    }
    g.duration = d_duration + implicit;
    return g;
  }

private:
  BandedLu lu_;
  Eigen::MatrixX2d coeffs_;
  FlatState head_;
  FlatState tail_;
  Eigen::Matrix2Xd waypoints_;
  double duration_{0.0};
  int pieces_{0};
  bool valid_{false};
};

/// One-shot coefficient solve for a single segment.
inline std::vector<PolyPiece> solve_coefficients(
  const FlatState & head, const FlatState & tail, const Eigen::Matrix2Xd & waypoints, double duration)
{
  SegmentSolver solver;
  solver.solve(head, tail, waypoints, duration);
  return solver.pieces();
}

}  // namespace flatcar

#endif  // FLATCAR__TRAJECTORY_HPP_
