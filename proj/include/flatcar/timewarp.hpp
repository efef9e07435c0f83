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

#ifndef FLATCAR__TIMEWARP_HPP_
#define FLATCAR__TIMEWARP_HPP_

#include <cmath>

#include "flatcar/errors.hpp"

// Smooth bijection between an unconstrained virtual time and a strictly
// positive piece duration. Quadratic for tau > 0, rational for tau <= 0; both
// branches meet at (0, 1) with unit slope.

namespace flatcar
{

inline double real_time(double tau)
{
  if (tau > 0.0) {
    return (0.5 * tau + 1.0) * tau + 1.0;
  }
  const double den = (tau - 2.0) * tau + 2.0;
  return 2.0 / den;
}

inline double real_time_derivative(double tau)
{
  if (tau > 0.0) {
    return tau + 1.0;
  }
  const double den = (tau - 2.0) * tau + 2.0;
  return 4.0 * (1.0 - tau) / (den * den);
}

inline double virtual_time(double duration)
{
  if (!(duration > 0.0) || !std::isfinite(duration)) {
    throw DomainError("virtual_time: duration must be finite and positive");
  }
  if (duration >= 1.0) {
    return std::sqrt(2.0 * duration - 1.0) - 1.0;
  }
  return 1.0 - std::sqrt(2.0 / duration - 1.0);
}

}  // namespace flatcar

#endif  // FLATCAR__TIMEWARP_HPP_
