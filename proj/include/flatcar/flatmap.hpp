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

#ifndef FLATCAR__FLATMAP_HPP_
#define FLATCAR__FLATMAP_HPP_

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "flatcar/errors.hpp"

namespace flatcar
{

/// Direction of travel within a trajectory segment.
enum class Gear : int { kReverse = -1, kForward = 1 };

inline double sign(Gear gear) { return static_cast<double>(static_cast<int>(gear)); }

inline Gear gear_from_int(int eta)
{
  if (eta == 1) {
    return Gear::kForward;
  }
  if (eta == -1) {
    return Gear::kReverse;
  }
  throw DomainError("direction flag must be -1 or +1");
}

inline Gear opposite(Gear gear) { return gear == Gear::kForward ? Gear::kReverse : Gear::kForward; }

struct KinematicParams
{
  double wheelbase{0.6};
  double v_max{2.0};
  double a_max{2.0};
  double phi_max{0.7};

  void validate() const
  {
    if (!(wheelbase > 0.0) || !(v_max > 0.0) || !(a_max > 0.0)) {
      throw DomainError("kinematic limits must be strictly positive");
    }
    if (!(phi_max > 0.0) || !(phi_max < std::numbers::pi / 2.0)) {
      throw DomainError("phi_max must lie in (0, pi/2)");
    }
  }
};

/// Rear-axle car state recovered from the flat output.
struct CarState
{
  double x{0.0};
  double y{0.0};
  double theta{0.0};
  double v{0.0};    // signed by the gear
  double a_t{0.0};  // tangential
  double a_n{0.0};  // normal
  double phi{0.0};  // steer
  double kappa{0.0};
};

/// Flat speed below which heading, curvature and steer are undefined [m/s].
inline constexpr double kSingularSpeed = 1e-6;

inline double curvature_limit(const KinematicParams & params)
{
  return std::tan(params.phi_max) / params.wheelbase;
}

/**
 * Differential-flatness map of the kinematic bicycle.
 *
 * The flat output is the rear-axle position. Heading is atan2(eta*vy, eta*vx),
 * speed is eta*|v|, and the signed curvature is eta*(v x a)/|v|^3. The
 * optional time is only carried into the error for diagnostics.
 */
inline CarState flat_to_state(
  const Eigen::Vector2d & sigma, const Eigen::Vector2d & d1, const Eigen::Vector2d & d2, Gear gear,
  const KinematicParams & params, double t = std::numeric_limits<double>::quiet_NaN())
{
  const double speed_sq = d1.squaredNorm();
  const double speed = std::sqrt(speed_sq);
  if (!(speed >= kSingularSpeed)) {
    std::ostringstream os;
    os << "flat_to_state: flat speed " << speed << " below singular threshold at t=" << t;
    throw SingularSpeedError(os.str(), t);
  }
  const double eta = sign(gear);
  const double cross = d1.x() * d2.y() - d1.y() * d2.x();

  CarState s;
  s.x = sigma.x();
  s.y = sigma.y();
  s.theta = std::atan2(eta * d1.y(), eta * d1.x());
  s.v = eta * speed;
  s.a_t = eta * d1.dot(d2) / speed;
  s.a_n = eta * cross / speed;
  s.kappa = eta * cross / (speed_sq * speed);
  s.phi = std::atan(s.kappa * params.wheelbase);
  return s;
}

}  // namespace flatcar

#endif  // FLATCAR__FLATMAP_HPP_
