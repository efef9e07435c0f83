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


#ifndef FLATCAR__TRAJECTORY_IO_HPP_
#define FLATCAR__TRAJECTORY_IO_HPP_

#include <string>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/flatmap.hpp"
#include "flatcar/trajectory.hpp"
#include "json.hpp"

namespace flatcar
{

/**
 * JSON form of one agent's trajectory:
 *   {"segments": [{"eta": 1, "T": 0.8, "M": 3, "coeffs": [[[x0..x5], [y0..y5]], ...]}]}
 * T is the shared piece duration of the segment and coefficients ascend in
 * degree. Doubles are written in shortest round-trip form, so parsing the
 * output reproduces every bit.
 */
inline nlohmann::json trajectory_to_json(const AgentTrajectory & traj)
{
  nlohmann::json segs = nlohmann::json::array();
  for (const Segment & seg : traj.segments()) {
    nlohmann::json pieces = nlohmann::json::array();
    for (const PolyPiece & p : seg.pieces) {
      nlohmann::json axes = nlohmann::json::array();
      for (int axis = 0; axis < 2; ++axis) {
        nlohmann::json c = nlohmann::json::array();
        for (int k = 0; k < kPolyOrder; ++k) {
          c.push_back(p.coeffs(k, axis));
        }
        axes.push_back(std::move(c));
      }
      pieces.push_back(std::move(axes));
    }
    segs.push_back({
      {"eta", static_cast<int>(seg.eta)},
      {"T", seg.piece_duration()},
      {"M", seg.piece_count()},
      {"coeffs", std::move(pieces)},
    });
  }
  return {{"segments", std::move(segs)}};
}

inline AgentTrajectory trajectory_from_json(const nlohmann::json & j)
{
  try {
    std::vector<Segment> segments;
    for (const auto & js : j.at("segments")) {
      Segment seg;
      seg.eta = gear_from_int(js.at("eta").get<int>());
      const double T = js.at("T").get<double>();
      const int M = js.at("M").get<int>();
      const auto & coeffs = js.at("coeffs");
      if (M < 1 || static_cast<int>(coeffs.size()) != M) {
        throw InputError("trajectory json: M disagrees with the number of coefficient blocks");
      }
      for (const auto & jp : coeffs) {
        PolyPiece p;
        p.duration = T;
        if (jp.size() != 2) {
          throw InputError("trajectory json: each piece needs x and y coefficient rows");
        }
        for (int axis = 0; axis < 2; ++axis) {
          const auto & row = jp.at(axis);
          if (static_cast<int>(row.size()) != kPolyOrder) {
            throw InputError("trajectory json: each axis needs six coefficients");
          }
          for (int k = 0; k < kPolyOrder; ++k) {
            p.coeffs(k, axis) = row.at(k).get<double>();
          }
        }
        seg.pieces.push_back(p);
      }
      segments.push_back(std::move(seg));
    }
    if (segments.empty()) {
      throw InputError("trajectory json: no segments");
    }
    return AgentTrajectory(std::move(segments));
  } catch (const nlohmann::json::exception & e) {
    throw InputError(std::string("trajectory json: ") + e.what());
  } catch (const DomainError & e) {
    throw InputError(std::string("trajectory json: ") + e.what());
  }
}

}  // namespace flatcar

#endif  // FLATCAR__TRAJECTORY_IO_HPP_
