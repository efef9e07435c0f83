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

#ifndef FLATCAR__MPC_HPP_
#define FLATCAR__MPC_HPP_

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/qp.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

using MpcState = Eigen::Vector4d;  // x, y, theta, v
using MpcInput = Eigen::Vector2d;  // a, phi

struct MpcConfig
{
  int horizon{20};
  double dt{0.05};
  Eigen::Vector4d q_x{10.0, 10.0, 1.0, 1.0};
  Eigen::Vector2d q_u{0.1, 0.1};
  Eigen::Vector2d r{0.01, 0.01};
  Eigen::Vector2d r_d{0.1, 0.1};
  Eigen::Vector2d u_max{2.0, 0.7};
  // Only the speed bound is finite by default.
  Eigen::Vector4d x_max{kQpInfinity, kQpInfinity, kQpInfinity, 2.0};
  // Per-step change of (a, phi).
  Eigen::Vector2d du_max{0.5, 0.2};
  double wheelbase{0.6};
  QpSettings qp{};

  static MpcConfig for_vehicle(const KinematicParams & k)
  {
    MpcConfig c;
    c.u_max = {k.a_max, k.phi_max};
    c.x_max(3) = k.v_max;
    c.wheelbase = k.wheelbase;
    return c;
  }

  void validate() const
  {
    if (horizon < 1 || !(dt > 0.0) || !(wheelbase > 0.0)) {
      throw InputError("mpc config: need K >= 1, dt > 0 and a positive wheelbase");
    }
    if ((q_x.array() < 0.0).any() || (q_u.array() < 0.0).any() || (r.array() < 0.0).any() ||
        (r_d.array() < 0.0).any()) {
      throw InputError("mpc config: weights must be non-negative");
    }
    if ((u_max.array() < 0.0).any() || (x_max.array() < 0.0).any() || (du_max.array() < 0.0).any()) {
      throw InputError("mpc config: limits must be non-negative");
    }
    qp.validate();
  }
};

struct RefPoint
{
  MpcState x{MpcState::Zero()};
  MpcInput u{MpcInput::Zero()};
};

/// Angle wrapped to (-pi, pi].
inline double wrap_pi(double a)
{
  const double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a <= 0.0) {
    a += two_pi;
  }
  return a - std::numbers::pi;
}

namespace detail
{

inline RefPoint ref_from_state(const CarState & s)
{
  RefPoint p;
  p.x << s.x, s.y, s.theta, s.v;
  p.u << s.a_t, s.phi;
  return p;
}

// Nearest time in [0, total] whose flat speed is regular, searched outward
// on a doubling ladder of offsets.
inline std::optional<CarState> nearest_regular_state(
  const AgentTrajectory & traj, double t, const KinematicParams & kin)
{
  const double total = traj.total_duration();
  for (double h = 1e-4; h <= total + 1e-4; h *= 2.0) {
    for (double cand : {t - h, t + h}) {
      if (cand < 0.0 || cand > total) {
        continue;
      }
      const FlatState f = traj.flat_state(cand);
      if (f.vel.norm() >= kSingularSpeed) {
        return flat_to_state(f.pos, f.vel, f.acc, traj.gear_at(cand), kin, cand);
      }
    }
  }
  return std::nullopt;
}

inline RefPoint ref_at(const AgentTrajectory & traj, double t, const KinematicParams & kin)
{
  const double total = traj.total_duration();
  const bool past_end = t >= total;
  const double tc = std::min(t, total);
  const FlatState f = traj.flat_state(tc);
  const Gear gear = traj.gear_at(tc);
  if (!past_end && f.vel.norm() >= kSingularSpeed) {
    return ref_from_state(flat_to_state(f.pos, f.vel, f.acc, gear, kin, tc));
  }
  // Singular speed: heading and steer from the nearest regular sample.
  RefPoint p;
  p.x << f.pos.x(), f.pos.y(), 0.0, sign(gear) * f.vel.norm();
  if (const auto near = nearest_regular_state(traj, tc, kin)) {
    p.x(2) = near->theta;
    p.u << near->a_t, near->phi;
  }
  if (past_end) {
    p.x(3) = 0.0;
    p.u.setZero();
  }
  return p;
}

}  // namespace detail

/**
 * Reference states and inputs at t0 + k*dt, k = 0..K, read off the flat
 * trajectory. Past the end the terminal pose is held at rest. Headings are
 * unwrapped so consecutive samples differ by less than pi.
 */
inline std::vector<RefPoint> sample_reference(
  const AgentTrajectory & traj, double t0, int horizon, double dt, const KinematicParams & kin)
{
  if (!(t0 >= 0.0) || horizon < 0 || !(dt > 0.0)) {
    throw DomainError("sample_reference: need t0 >= 0, K >= 0 and dt > 0");
  }
  std::vector<RefPoint> refs;
  refs.reserve(static_cast<std::size_t>(horizon + 1));
  for (int k = 0; k <= horizon; ++k) {
    RefPoint p = detail::ref_at(traj, t0 + k * dt, kin);
    if (k > 0) {
      const double prev = refs.back().x(2);
      p.x(2) = prev + wrap_pi(p.x(2) - prev);
    }
    refs.push_back(p);
  }
  return refs;
}

/// Continuous-time kinematic bicycle about the rear axle.
inline MpcState bicycle_rhs(const MpcState & s, const MpcInput & u, double wheelbase)
{
  return {s(3) * std::cos(s(2)), s(3) * std::sin(s(2)), s(3) * std::tan(u(1)) / wheelbase, u(0)};
}

/// One forward-Euler step of the bicycle; the model the controller predicts with.
inline MpcState euler_step(const MpcState & s, const MpcInput & u, double dt, double wheelbase)
{
  return s + dt * bicycle_rhs(s, u, wheelbase);
}

struct LinearModel
{
  Eigen::Matrix4d A;
  Eigen::Matrix<double, 4, 2> B;
  Eigen::Vector4d C;
};

/**
 * Affine model X+ = A X + B U + C of the Euler step about (xh, uh). The yaw
 * rate v tan(phi) / L is expanded in both v and phi, and C is chosen so the
 * model reproduces the nonlinear step at the expansion point.
 */
inline LinearModel linearize(const MpcState & xh, const MpcInput & uh, double dt, double wheelbase)
{
  if (!xh.allFinite() || !uh.allFinite()) {
    throw DomainError("linearize: non-finite expansion point");
  }
  if (std::abs(uh(1)) >= std::numbers::pi / 2.0 - 1e-6) {
    throw DomainError("linearize: steer angle too close to pi/2");
  }
  const double c = std::cos(xh(2));
  const double s = std::sin(xh(2));
  const double v = xh(3);
  const double tp = std::tan(uh(1));
  const double cp = std::cos(uh(1));
  LinearModel m;
  m.A.setIdentity();
  m.A(0, 2) = -v * s * dt;
  m.A(0, 3) = c * dt;
  m.A(1, 2) = v * c * dt;
  m.A(1, 3) = s * dt;
  m.A(2, 3) = tp / wheelbase * dt;
  m.B.setZero();
  m.B(2, 1) = v / (wheelbase * cp * cp) * dt;
  m.B(3, 0) = dt;
  m.C = euler_step(xh, uh, dt, wheelbase) - m.A * xh - m.B * uh;
  return m;
}

struct MpcSolution
{
  MpcInput u0{MpcInput::Zero()};
  std::vector<MpcState> predicted;  // X_1 .. X_K
  std::vector<MpcInput> inputs;     // U_0 .. U_{K-1}
  QpStatus status{QpStatus::kSolved};
  int qp_iterations{0};
  bool degraded{false};
};

/**
 * Builds the horizon QP about the reference and solves it. Decision vector
 * [X_1 .. X_K, U_0 .. U_{K-1}]; dynamics enter as equality rows.
 */
class MpcController
{
public:
  explicit MpcController(MpcConfig config) : config_(std::move(config)), solver_(config_.qp) { config_.validate(); }

  const MpcConfig & config() const { return config_; }
  void reset() { warm_.reset(); }

  /// Assembles the horizon QP for the measured state and references.
  QpProblem build(const MpcState & state, const std::vector<RefPoint> & refs) const
  {
    const int K = config_.horizon;
    if (static_cast<int>(refs.size()) != K + 1) {
      throw InputError("mpc: need K + 1 reference points");
    }
    if (!state.allFinite()) {
      throw InputError("mpc: non-finite state");
    }
    const int nx = 4 * K;
    const int n = nx + 2 * K;
    auto xi = [](int k) { return 4 * (k - 1); };  // X_k, k >= 1
    auto ui = [nx](int k) { return nx + 2 * k; };  // U_k

    // Current heading expressed next to the reference heading.
    MpcState x0 = state;
    x0(2) = refs[0].x(2) + wrap_pi(state(2) - refs[0].x(2));

    std::vector<Eigen::Triplet<double>> pt;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
    for (int k = 1; k <= K; ++k) {
      for (int i = 0; i < 4; ++i) {
        pt.emplace_back(xi(k) + i, xi(k) + i, 2.0 * config_.q_x(i));
        q(xi(k) + i) = -2.0 * config_.q_x(i) * refs[k].x(i);
      }
    }
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < 2; ++i) {
        pt.emplace_back(ui(k) + i, ui(k) + i, 2.0 * (config_.q_u(i) + config_.r(i)));
        q(ui(k) + i) = -2.0 * config_.q_u(i) * refs[k].u(i);
      }
    }
    for (int k = 1; k < K; ++k) {
      for (int i = 0; i < 2; ++i) {
        const double w = 2.0 * config_.r_d(i);
        pt.emplace_back(ui(k) + i, ui(k) + i, w);
        pt.emplace_back(ui(k - 1) + i, ui(k - 1) + i, w);
        pt.emplace_back(ui(k) + i, ui(k - 1) + i, -w);
        pt.emplace_back(ui(k - 1) + i, ui(k) + i, -w);
      }
    }

    std::vector<Eigen::Triplet<double>> at;
    std::vector<double> lo;
    std::vector<double> hi;
    int row = 0;
    for (int k = 0; k < K; ++k) {
      const LinearModel lm = linearize(refs[k].x, refs[k].u, config_.dt, config_.wheelbase);
      Eigen::Vector4d rhs = lm.C;
      if (k == 0) {
        rhs += lm.A * x0;
      }
      for (int i = 0; i < 4; ++i) {
        at.emplace_back(row + i, xi(k + 1) + i, 1.0);
        if (k > 0) {
          for (int j = 0; j < 4; ++j) {
            if (lm.A(i, j) != 0.0) {
              at.emplace_back(row + i, xi(k) + j, -lm.A(i, j));
            }
          }
        }
        for (int j = 0; j < 2; ++j) {
          if (lm.B(i, j) != 0.0) {
            at.emplace_back(row + i, ui(k) + j, -lm.B(i, j));
          }
        }
        lo.push_back(rhs(i));
        hi.push_back(rhs(i));
      }
      row += 4;
    }
    for (int k = 0; k < K; ++k) {
      for (int i = 0; i < 2; ++i) {
        at.emplace_back(row, ui(k) + i, 1.0);
        lo.push_back(-config_.u_max(i));
        hi.push_back(config_.u_max(i));
        ++row;
      }
    }
    for (int k = 1; k <= K; ++k) {
      for (int i = 0; i < 4; ++i) {
        if (config_.x_max(i) >= kQpInfinity) {
          continue;
        }
        at.emplace_back(row, xi(k) + i, 1.0);
        lo.push_back(-config_.x_max(i));
        hi.push_back(config_.x_max(i));
        ++row;
      }
    }
    for (int k = 1; k < K; ++k) {
      for (int i = 0; i < 2; ++i) {
        if (config_.du_max(i) >= kQpInfinity) {
          continue;
        }
        at.emplace_back(row, ui(k) + i, 1.0);
        at.emplace_back(row, ui(k - 1) + i, -1.0);
        lo.push_back(-config_.du_max(i));
        hi.push_back(config_.du_max(i));
        ++row;
      }
    }

    QpProblem p;
    p.P.resize(n, n);
    p.P.setFromTriplets(pt.begin(), pt.end());
    p.q = q;
    p.A.resize(row, n);
    p.A.setFromTriplets(at.begin(), at.end());
    p.l = Eigen::Map<const Eigen::VectorXd>(lo.data(), row);
    p.u = Eigen::Map<const Eigen::VectorXd>(hi.data(), row);
    return p;
  }

  /// Solves one horizon and returns the first input, clipped to U_max.
  MpcSolution solve(const MpcState & state, const std::vector<RefPoint> & refs)
  {
    const QpProblem p = build(state, refs);
    std::optional<QpWarmStart> warm;
    if (warm_ && warm_->x.size() == p.variables() && warm_->y.size() == p.constraints()) {
      warm = warm_;
    }
    const QpResult r = solver_.solve(p, warm);
    if (r.status == QpStatus::kPrimalInfeasible || r.status == QpStatus::kDualInfeasible) {
      warm_.reset();
      throw ControllerError(std::string("mpc: horizon QP is ") + std::string(to_string(r.status)));
    }
    const int K = config_.horizon;
    MpcSolution out;
    out.status = r.status;
    out.qp_iterations = r.iterations;
    out.degraded = r.status != QpStatus::kSolved;
    for (int k = 1; k <= K; ++k) {
      out.predicted.emplace_back(r.x.segment<4>(4 * (k - 1)));
    }
    for (int k = 0; k < K; ++k) {
      out.inputs.emplace_back(r.x.segment<2>(4 * K + 2 * k));
    }
    out.u0 = out.inputs.front().cwiseMax(-config_.u_max).cwiseMin(config_.u_max);
    warm_ = QpWarmStart{r.x, r.y};
    return out;
  }

private:
  MpcConfig config_;
  QpSolver solver_;
  std::optional<QpWarmStart> warm_;
};

}  // namespace flatcar

#endif  // FLATCAR__MPC_HPP_
