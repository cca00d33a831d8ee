// Copyright 2026 The GridPilot Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef GRIDPILOT_SAFETY_HPP_
#define GRIDPILOT_SAFETY_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

struct SafeSpeedParams {
  double v_max = 16.67;  // m/s, highest permitted speed
  double c = 1.0;        // 1/s
  double d = -0.5;       // dimensionless; d <= 0 gives a full stop at contact

  /// Obstacle distance at which the clamped law commands zero speed.
  double standstill_distance() const { return -d * v_max / c; }
};

/// v_max * (1 - exp(-(c/v_max) * dist - d)), clamped to [0, v_max].
/// Monotone non-decreasing in dist; zero at and below the standstill
/// distance whenever d <= 0.
inline double safe_speed(double dist, const SafeSpeedParams& params) {
  if (!(dist >= 0.0)) {
    throw std::invalid_argument("safe_speed: dist must be non-negative");
  }
  const double raw =
      params.v_max * (1.0 - std::exp(-(params.c / params.v_max) * dist - params.d));
  return std::clamp(raw, 0.0, params.v_max);
}

/// Constant-curvature arc predicted from the runtime control state alone
/// (bicycle model, R = wheelbase / tan(delta)); the shadow channel's view of
/// where the vehicle is headed regardless of what the planner thinks.
struct ShadowPath {
  std::vector<Pose2D> samples;  // relative to the current vehicle pose
  double curvature = 0.0;
  double spacing = 0.2;
};

inline ShadowPath predict_shadow_path(double delta, double v, double wheelbase,
                                      double horizon, double spacing = 0.2) {
  if (!(std::abs(delta) < kPi / 3.0)) {
    throw std::invalid_argument("predict_shadow_path: |delta| must be < pi/3");
  }
  if (!(v >= 0.0)) {
    throw std::invalid_argument("predict_shadow_path: v must be non-negative");
  }
  if (wheelbase <= 0.0 || horizon < 0.0 || spacing <= 0.0) {
    throw std::invalid_argument("predict_shadow_path: bad geometry");
  }
  ShadowPath path;
  path.curvature = std::tan(delta) / wheelbase;
  path.spacing = spacing;
  const int n = static_cast<int>(std::ceil(horizon / spacing));
  path.samples.reserve(n + 1);
  for (int i = 0; i <= n; ++i) {
    const double s = std::min(i * spacing, horizon);
    if (std::abs(path.curvature) < 1e-12) {
      path.samples.emplace_back(s, 0.0, 0.0);
    } else {
      const double theta = path.curvature * s;
      path.samples.emplace_back(std::sin(theta) / path.curvature,
                                (1.0 - std::cos(theta)) / path.curvature,
                                theta);
    }
  }
  return path;
}

/// Arc length to the first obstacle cell inside the swept band of the
/// shadow path, infinity when the band is clear. The sweep checks a disc of
/// the given half width around every sample.
inline double shadow_clearance(const OccupancyGrid& map, const ShadowPath& path,
                               double sweep_half_width,
                               double obstacle_threshold = 0.75) {
  const double res = map.resolution();
  const int radius = static_cast<int>(std::ceil(sweep_half_width / res));
  for (std::size_t i = 0; i < path.samples.size(); ++i) {
    const Pose2D& pose = path.samples[i];
    const auto center = map.cell_at({pose.x, pose.y});
    if (!center) {
      continue;
    }
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        if (std::hypot(dr * res, dc * res) > sweep_half_width) {
          continue;
        }
        const int r = center->row + dr;
        const int c = center->col + dc;
        if (map.in_bounds(r, c) && map.at(r, c) > obstacle_threshold) {
          return static_cast<double>(i) * path.spacing;
        }
      }
    }
  }
  return kInfinity;
}

enum class LimitSource { kMapLimit, kPlannerSafe, kShadowSafe };

inline const char* to_string(LimitSource source) {
  switch (source) {
    case LimitSource::kMapLimit:
      return "map_limit";
    case LimitSource::kPlannerSafe:
      return "planner_safe";
    case LimitSource::kShadowSafe:
      return "shadow_safe";
  }
  return "unknown";
}

struct SpeedCommand {
  double v_cmd = 0.0;
  LimitSource limiting_source = LimitSource::kMapLimit;
};

/// Final speed command: the minimum of the map speed limit and the two safe
/// speeds. Channels with infinite clearance impose no constraint beyond
/// v_max and are excluded from attribution; among equal finite constraints
/// the attribution picks the most conservative channel (shadow before
/// planner before map).
inline SpeedCommand govern(double map_limit, double planner_dist,
                           double shadow_dist, const SafeSpeedParams& params) {
  SpeedCommand cmd;
  cmd.v_cmd = std::min(map_limit, params.v_max);
  cmd.limiting_source = LimitSource::kMapLimit;
  if (std::isfinite(planner_dist)) {
    const double v = safe_speed(planner_dist, params);
    if (v <= cmd.v_cmd) {
      cmd.v_cmd = v;
      cmd.limiting_source = LimitSource::kPlannerSafe;
    }
  }
  if (std::isfinite(shadow_dist)) {
    const double v = safe_speed(shadow_dist, params);
    if (v <= cmd.v_cmd) {
      cmd.v_cmd = v;
      cmd.limiting_source = LimitSource::kShadowSafe;
    }
  }
  cmd.v_cmd = std::clamp(cmd.v_cmd, 0.0, params.v_max);
  return cmd;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_SAFETY_HPP_
