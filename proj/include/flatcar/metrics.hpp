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


#ifndef FLATCAR__METRICS_HPP_
#define FLATCAR__METRICS_HPP_

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "flatcar/errors.hpp"
#include "flatcar/trajectory.hpp"

namespace flatcar
{

struct MetricsRow
{
  bool success{false};
  double computation_s{0.0};
  double mean_travel_s{0.0};
  double longest_travel_s{0.0};
  double avg_travel_distance_m{0.0};
  double avg_accel_cost{0.0};  // m^2 s^-3
  double fotp_cost_J{0.0};

  bool operator==(const MetricsRow &) const = default;
};

/// Frozen column order of metrics.csv.
inline constexpr const char * kMetricsHeader =
  "success,computation_s,mean_travel_s,longest_travel_s,avg_travel_distance_m,avg_accel_cost,fotp_cost_J";

struct MetricsOptions
{
  double dense_step{1e-3};
  double fotp_step{0.1};
  double fotp_weight{0.01};
};

/// Arc length and integral of |acc|^2, both on a uniform grid of `step` plus the endpoint.
struct DenseTotals
{
  double distance{0.0};
  double accel_sq{0.0};
};

inline DenseTotals dense_totals(const AgentTrajectory & traj, double step)
{
  DenseTotals d;
  const double T = traj.total_duration();
  const long n = static_cast<long>(std::floor(T / step));
  double t_prev = 0.0;
  FlatState prev = traj.flat_state(0.0);
  for (long k = 1; k <= n + 1; ++k) {
    const double t = k <= n ? k * step : T;
    if (!(t > t_prev)) {
      continue;
    }
    const FlatState cur = traj.flat_state(t);
    d.distance += (cur.pos - prev.pos).norm();
    d.accel_sq += 0.5 * (t - t_prev) * (prev.acc.squaredNorm() + cur.acc.squaredNorm());
    prev = cur;
    t_prev = t;
  }
  return d;
}

/**
 * Table-style metrics of a team plan. The FOTP-style cost is
 *   J = T_max + w * sum_i sum_j (a_ij^2 + v_ij^2 w_ij^2)
 * on the grid t_j = j * fotp_step within each agent's horizon, where
 * a^2 + v^2 w^2 = a_t^2 + a_n^2 = |acc|^2 of the flat output.
 */
inline MetricsRow compute_metrics(
  const std::vector<AgentTrajectory> & trajs, bool success, double computation_s, const MetricsOptions & opt = {})
{
  MetricsRow m;
  m.success = success;
  m.computation_s = computation_s;
  if (trajs.empty()) {
    return m;
  }
  const double n = static_cast<double>(trajs.size());
  double smooth = 0.0;
  for (const AgentTrajectory & t : trajs) {
    const double T = t.total_duration();
    m.mean_travel_s += T / n;
    m.longest_travel_s = std::max(m.longest_travel_s, T);
    const DenseTotals d = dense_totals(t, opt.dense_step);
    m.avg_travel_distance_m += d.distance / n;
    m.avg_accel_cost += d.accel_sq / n;
    const long h = static_cast<long>(std::floor(T / opt.fotp_step + 1e-9));
    for (long j = 0; j <= h; ++j) {
      smooth += t.flat_state(std::min(j * opt.fotp_step, T)).acc.squaredNorm();
    }
  }
  m.fotp_cost_J = m.longest_travel_s + opt.fotp_weight * smooth;
  return m;
}

/// Cost forms of the other compared planners, evaluated on the plan as diagnostics.
struct AuxiliaryCosts
{
  double scp{0.0};           // sum of |acc|^2 over the coarse grid
  double mnhp_smooth{0.0};   // sum of |delta (a_t, a_n)|^2 between coarse samples
  double dmpc_effort{0.0};   // integral of |acc|^2 plus integral of |jerk|^2
};

inline AuxiliaryCosts auxiliary_costs(const std::vector<AgentTrajectory> & trajs, const MetricsOptions & opt = {})
{
  AuxiliaryCosts c;
  for (const AgentTrajectory & t : trajs) {
    const double T = t.total_duration();
    const long h = static_cast<long>(std::floor(T / opt.fotp_step + 1e-9));
    Eigen::Vector2d prev_u = Eigen::Vector2d::Zero();
    for (long j = 0; j <= h; ++j) {
      const double tj = std::min(j * opt.fotp_step, T);
      const FlatState s = t.flat_state(tj);
      c.scp += s.acc.squaredNorm();
      const double speed = s.vel.norm();
      Eigen::Vector2d u = Eigen::Vector2d::Zero();
      if (speed > 0.0) {
        const Eigen::Vector2d e = s.vel / speed;
        u << e.dot(s.acc), e.x() * s.acc.y() - e.y() * s.acc.x();
      } else {
        u << s.acc.norm(), 0.0;
      }
      if (j > 0) {
        c.mnhp_smooth += (u - prev_u).squaredNorm();
      }
      prev_u = u;
    }
    c.dmpc_effort += dense_totals(t, opt.dense_step).accel_sq;
    const long n = static_cast<long>(std::floor(T / opt.dense_step));
    for (long k = 0; k <= n; ++k) {
      const double w = (k == 0 || k == n) ? 0.5 : 1.0;
      c.dmpc_effort += w * opt.dense_step * t.eval(k * opt.dense_step, 3).squaredNorm();
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Shortest text that parses back to the same double.
inline std::string format_double(double v)
{
  std::array<char, 32> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), r.ptr);
}

inline std::string metrics_csv_line(const MetricsRow & m)
{
  std::ostringstream os;
  os << (m.success ? 1 : 0) << ',' << format_double(m.computation_s) << ',' << format_double(m.mean_travel_s) << ','
     << format_double(m.longest_travel_s) << ',' << format_double(m.avg_travel_distance_m) << ','
     << format_double(m.avg_accel_cost) << ',' << format_double(m.fotp_cost_J);
  return os.str();
}

inline double parse_double(const std::string & cell)
{
  double v = 0.0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size()) {
    throw InputError("csv: cannot parse '" + cell + "' as a number");
  }
  return v;
}

inline std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    out.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') {
    out.emplace_back();
  }
  return out;
}

inline MetricsRow parse_metrics_line(const std::string & line)
{
  const auto cells = split_csv(line);
  if (cells.size() != 7) {
    throw InputError("metrics csv: expected 7 columns");
  }
  if (cells[0] != "0" && cells[0] != "1") {
    throw InputError("metrics csv: success must be 0 or 1");
  }
  MetricsRow m;
  m.success = cells[0] == "1";
  m.computation_s = parse_double(cells[1]);
  m.mean_travel_s = parse_double(cells[2]);
  m.longest_travel_s = parse_double(cells[3]);
  m.avg_travel_distance_m = parse_double(cells[4]);
  m.avg_accel_cost = parse_double(cells[5]);
  m.fotp_cost_J = parse_double(cells[6]);
  return m;
}

/// Header plus one line per row.
inline std::string metrics_csv(const std::vector<MetricsRow> & rows)
{
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto & r : rows) {
    out += metrics_csv_line(r) + "\n";
  }
  return out;
}

inline std::vector<MetricsRow> parse_metrics_csv(const std::string & text)
{
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kMetricsHeader) {
    throw InputError("metrics csv: header does not match the frozen schema");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(is, line)) {
    if (!line.empty()) {
      rows.push_back(parse_metrics_line(line));
    }
  }
  return rows;
}

}  // namespace flatcar

#endif  // FLATCAR__METRICS_HPP_
