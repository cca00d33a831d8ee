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

#include "gridpilot/safety.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

namespace gridpilot {
namespace {

TEST_CASE("safe speed approaches v_max as the distance grows") {
  SafeSpeedParams params;
  CHECK(safe_speed(kInfinity, params) == params.v_max);
  CHECK(safe_speed(1e6, params) == Catch::Approx(params.v_max).margin(1e-6));
}

TEST_CASE("safe speed reaches zero at the standstill distance") {
  SafeSpeedParams params;  // v_max 16.67, c 1.0, d -0.5
  CHECK(params.standstill_distance() == Catch::Approx(8.335));
  // exponent = -(1/16.67)*8.335 + 0.5 = 0, raw = 0
  CHECK(safe_speed(8.335, params) == 0.0);
  CHECK(safe_speed(4.0, params) == 0.0);  // clamp below standstill
  CHECK(safe_speed(0.0, params) == 0.0);
}

TEST_CASE("safe speed closed-form spot value at 25 m") {
  SafeSpeedParams params;
  CHECK(safe_speed(25.0, params) == Catch::Approx(10.54).margin(0.01));
}

TEST_CASE("safe speed is continuous and monotone non-decreasing") {
  SafeSpeedParams params;
  double previous = safe_speed(0.0, params);
  for (int i = 1; i <= 4000; ++i) {
    const double dist = i * 0.025;
    const double v = safe_speed(dist, params);
    CHECK(v >= previous);
    CHECK(v - previous < 0.05);  // no jumps across a 2.5 cm step
    previous = v;
  }
}

TEST_CASE("shadow path with zero steering is a straight ray") {
  const ShadowPath path = predict_shadow_path(0.0, 10.0, 2.8, 30.0);
  CHECK(path.curvature == 0.0);
  REQUIRE(path.samples.size() == 151);
  CHECK(path.samples.back().x == Catch::Approx(30.0));
  CHECK(path.samples.back().y == 0.0);
  CHECK(path.samples.back().theta == 0.0);
}

TEST_CASE("shadow path follows circle geometry") {
  // R = wheelbase / tan(delta) = 10 m; a quarter circle of arc.
  const double wheelbase = 2.8;
  const double delta = std::atan(wheelbase / 10.0);
  const double horizon = 2.0 * kPi * 10.0 / 4.0;
  const ShadowPath path = predict_shadow_path(delta, 5.0, wheelbase, horizon);
  const Pose2D& end = path.samples.back();
  CHECK(end.x == Catch::Approx(10.0).margin(1e-6));
  CHECK(end.y == Catch::Approx(10.0).margin(1e-6));
  CHECK(end.theta == Catch::Approx(kPi / 2.0).margin(1e-9));
}

TEST_CASE("zero horizon yields a single sample at the ego pose") {
  const ShadowPath path = predict_shadow_path(0.3, 1.0, 2.8, 0.0);
  REQUIRE(path.samples.size() == 1);
  CHECK(path.samples[0].x == 0.0);
  CHECK(path.samples[0].y == 0.0);
}

TEST_CASE("shadow clearance finds the first obstacle in the swept band") {
  OccupancyGrid map;
  map.at(*map.cell_at({12.0, 0.3})) = 1.0;
  const ShadowPath path = predict_shadow_path(0.0, 10.0, 2.8, 40.0);
  const double clearance = shadow_clearance(map, path, 1.2);
  CHECK(clearance == Catch::Approx(12.0).margin(1.3));
  // An obstacle far outside the band is ignored.
  OccupancyGrid clear;
  clear.at(*clear.cell_at({12.0, 5.0})) = 1.0;
  CHECK(shadow_clearance(clear, path, 1.2) == kInfinity);
}

TEST_CASE("govern picks the minimum and attributes it conservatively") {
  SafeSpeedParams params;

  // All clear: the map limit rules.
  const SpeedCommand clear = govern(16.67, kInfinity, kInfinity, params);
  CHECK(clear.v_cmd == Catch::Approx(16.67));
  CHECK(clear.limiting_source == LimitSource::kMapLimit);

  // AEB full stop from the shadow channel.
  const SpeedCommand stop = govern(16.67, kInfinity, 8.335, params);
  CHECK(stop.v_cmd == 0.0);
  CHECK(stop.limiting_source == LimitSource::kShadowSafe);

  // Planner-limited cruise.
  const SpeedCommand cruise = govern(16.67, 25.0, kInfinity, params);
  CHECK(cruise.v_cmd == Catch::Approx(10.54).margin(0.01));
  CHECK(cruise.limiting_source == LimitSource::kPlannerSafe);

  // Equal finite constraints attribute to the shadow channel.
  const SpeedCommand tie = govern(16.67, 25.0, 25.0, params);
  CHECK(tie.limiting_source == LimitSource::kShadowSafe);
}

TEST_CASE("govern output never exceeds any input bound") {
  SafeSpeedParams params;
  for (double map_limit : {5.0, 10.0, 20.0}) {
    for (double planner_dist : {3.0, 12.0, 40.0, kInfinity}) {
      for (double shadow_dist : {3.0, 12.0, 40.0, kInfinity}) {
        const SpeedCommand cmd =
            govern(map_limit, planner_dist, shadow_dist, params);
        CHECK(cmd.v_cmd <= map_limit + 1e-12);
        CHECK(cmd.v_cmd <= params.v_max);
        CHECK(cmd.v_cmd >= 0.0);
        if (std::isfinite(planner_dist)) {
          CHECK(cmd.v_cmd <= safe_speed(planner_dist, params) + 1e-12);
        }
        if (std::isfinite(shadow_dist)) {
          CHECK(cmd.v_cmd <= safe_speed(shadow_dist, params) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("two redundant governors agree and min-combine") {
  SafeSpeedParams params;
  const SpeedCommand a = govern(14.0, 30.0, 22.0, params);
  const SpeedCommand b = govern(14.0, 30.0, 22.0, params);
  CHECK(a.v_cmd == b.v_cmd);
  CHECK(std::min(a.v_cmd, b.v_cmd) == a.v_cmd);
}

}  // namespace
}  // namespace gridpilot
