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

#include "gridpilot/core.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <random>
#include <set>

namespace gridpilot {
namespace {

TEST_CASE("normalize_angle basic values") {
  CHECK(normalize_angle(0.0) == 0.0);
  CHECK(normalize_angle(3.0 * kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(-kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(kPi) == Catch::Approx(kPi));
  CHECK(normalize_angle(2.0 * kPi) == Catch::Approx(0.0).margin(1e-12));
  CHECK_THROWS_AS(normalize_angle(std::nan("")), InvalidAngle);
  CHECK_THROWS_AS(normalize_angle(kInfinity), InvalidAngle);
}

TEST_CASE("normalize_angle is congruent mod 2pi and idempotent") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  for (int i = 0; i < 1000; ++i) {
    const double theta = dist(rng);
    const double r = normalize_angle(theta);
    CHECK(r > -kPi);
    CHECK(r <= kPi);
    const double k = (theta - r) / (2.0 * kPi);
    CHECK(std::abs(k - std::round(k)) < 1e-9);
    CHECK(normalize_angle(r) == r);
  }
}

TEST_CASE("default grid has the spec dimensions") {
  OccupancyGrid grid;
  CHECK(grid.rows() == 400);
  CHECK(grid.cols() == 150);
  CHECK(grid.resolution() == 0.2);
  for (double p : grid.cells()) {
    CHECK(p == 0.5);
  }
  // 80 m x 30 m coverage.
  CHECK(grid.rows() * grid.resolution() == Catch::Approx(80.0));
  CHECK(grid.cols() * grid.resolution() == Catch::Approx(30.0));
}

TEST_CASE("world_to_cell anchor and bounds") {
  OccupancyGrid grid;
  const Pose2D ego{12.0, -4.0, 0.7};

  const auto anchor = world_to_cell(grid, {12.0, -4.0}, ego);
  REQUIRE(anchor.has_value());
  CHECK(anchor->row == grid.anchor_row());
  CHECK(anchor->col == grid.anchor_col());

  // 0.2 m ahead along heading: forward decreases the row index.
  const Vec2 ahead = to_world(ego, {0.2, 0.0});
  const auto cell = world_to_cell(grid, ahead, ego);
  REQUIRE(cell.has_value());
  CHECK(cell->row == grid.anchor_row() - 1);
  CHECK(cell->col == grid.anchor_col());

  const Vec2 far = to_world(ego, {100.0, 0.0});
  CHECK_FALSE(world_to_cell(grid, far, ego).has_value());
}

TEST_CASE("align_grid with identical stamps is bit-identical") {
  StampedGrid obs;
  obs.stamp = {1.0, 3.0, 4.0, 0.3};
  obs.source = "front";
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& p : obs.grid.cells()) {
    p = dist(rng);
  }
  const OccupancyGrid aligned = align_grid(obs, obs.stamp);
  CHECK(aligned.cells() == obs.grid.cells());
}

TEST_CASE("align_grid shifts contents toward the rear when the ego advances") {
  StampedGrid obs;
  obs.stamp = {1.0, 0.0, 0.0, 0.0};
  obs.source = "front";
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& p : obs.grid.cells()) {
    p = dist(rng);
  }
  const SpatioTemporalStamp target{1.1, 1.0, 0.0, 0.0};
  const OccupancyGrid aligned = align_grid(obs, target);
  // Per-cell oracle: target cell (r, c) covers the source cell (r - 5, c).
  for (int r = 0; r < aligned.rows(); ++r) {
    for (int c = 0; c < aligned.cols(); ++c) {
      const double expected = r >= 5 ? obs.grid.at(r - 5, c) : 0.5;
      CHECK(aligned.at(r, c) == expected);
    }
  }
}

TEST_CASE("align_grid maps a forward obstacle to the right under +90 deg") {
  StampedGrid obs;
  obs.stamp = {0.0, 0.0, 0.0, 0.0};
  const int k = 25;  // 5 m ahead
  obs.grid.at(obs.grid.anchor_row() - k, obs.grid.anchor_col()) = 0.9;
  const SpatioTemporalStamp target{0.0, 0.0, 0.0, kPi / 2.0};
  const OccupancyGrid aligned = align_grid(obs, target);
  // Offset (d, 0) in the source frame becomes (0, -d): same row as the
  // anchor, k cells toward higher column indices (the right side).
  CHECK(aligned.at(aligned.anchor_row(), aligned.anchor_col() + k) == 0.9);
}

TEST_CASE("align_grid rejects stale observations") {
  StampedGrid obs;
  obs.stamp = {0.0, 0.0, 0.0, 0.0};
  const SpatioTemporalStamp target{0.6, 0.0, 0.0, 0.0};
  CHECK_THROWS_AS(align_grid(obs, target), StaleObservation);
  CHECK_NOTHROW(align_grid(obs, target, 0.7));
}

TEST_CASE("align_grid round trip is the identity away from coverage loss") {
  // Pure translation: the nearest-cell resample composes to the identity,
  // so the only differences are cells whose source ran out of coverage.
  StampedGrid obs;
  obs.stamp = {0.0, 5.0, 2.0, 0.0};
  for (int r = 140; r < 170; ++r) {
    for (int c = 60; c < 90; ++c) {
      obs.grid.at(r, c) = 0.9;
    }
  }
  const SpatioTemporalStamp mid{0.1, 5.7, 2.3, 0.0};
  StampedGrid shifted{mid, align_grid(obs, mid), "rt"};
  const OccupancyGrid back = align_grid(shifted, obs.stamp);
  for (int r = 0; r < back.rows(); ++r) {
    for (int c = 0; c < back.cols(); ++c) {
      const bool occ_a = obs.grid.at(r, c) > 0.75;
      const bool occ_b = back.at(r, c) > 0.75;
      if (occ_a != occ_b) {
        // Any flip must come from the unknown band introduced by the
        // round trip, i.e. the cell or one of its neighbors is unknown.
        bool near_unknown = back.at(r, c) == 0.5;
        for (int dr = -1; dr <= 1 && !near_unknown; ++dr) {
          for (int dc = -1; dc <= 1 && !near_unknown; ++dc) {
            if (back.in_bounds(r + dr, c + dc) &&
                back.at(r + dr, c + dc) == 0.5) {
              near_unknown = true;
            }
          }
        }
        CHECK(near_unknown);
      }
    }
  }
}

TEST_CASE("align_grid only emits source values or unknown") {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::uniform_real_distribution<double> pose(-3.0, 3.0);
  for (int trial = 0; trial < 20; ++trial) {
    StampedGrid obs;
    obs.stamp = {0.0, pose(rng), pose(rng), pose(rng) / 3.0};
    std::set<double> values{0.5};
    OccupancyGrid small(40, 30, 0.2, 30, 15);
    for (double& p : small.cells()) {
      p = dist(rng);
      values.insert(p);
    }
    obs.grid = small;
    const SpatioTemporalStamp target{0.2, pose(rng), pose(rng), pose(rng) / 3.0};
    const OccupancyGrid aligned = align_grid(obs, target);
    for (double p : aligned.cells()) {
      CHECK(values.count(p) == 1);
    }
  }
}

TEST_CASE("grid_ray_cells walks straight rays cell by cell") {
  OccupancyGrid grid;
  const auto cells = grid_ray_cells(grid, {0.0, 0.0}, {2.0, 0.0});
  REQUIRE(cells.size() == 11);
  for (std::size_t i = 0; i < cells.size(); ++i) {
    CHECK(cells[i].row == grid.anchor_row() - static_cast<int>(i));
    CHECK(cells[i].col == grid.anchor_col());
  }
}

TEST_CASE("grid_ray_cells visits every crossed cell on diagonals") {
  OccupancyGrid grid;
  const auto cells = grid_ray_cells(grid, {0.0, 0.0}, {3.0, 1.3});
  // Consecutive cells share an edge (4-connected chain) and the ray ends in
  // the cell containing the endpoint.
  for (std::size_t i = 1; i < cells.size(); ++i) {
    const int dr = std::abs(cells[i].row - cells[i - 1].row);
    const int dc = std::abs(cells[i].col - cells[i - 1].col);
    CHECK(dr + dc == 1);
  }
  const auto end = grid.cell_at({3.0, 1.3});
  REQUIRE(end.has_value());
  CHECK(cells.back() == *end);
}

TEST_CASE("graymap round trip preserves bytes and the unknown sentinel") {
  OccupancyGrid grid(20, 10, 0.2, 15, 5);
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& p : grid.cells()) {
    p = dist(rng);
  }
  grid.at(3, 3) = 0.5;
  grid.at(4, 4) = 0.0;
  grid.at(5, 5) = 1.0;
  const std::string path = "core_test_roundtrip.pgm";
  write_pgm(grid, path);
  const OccupancyGrid back = read_pgm(path);
  REQUIRE(back.rows() == grid.rows());
  REQUIRE(back.cols() == grid.cols());
  CHECK(back.at(3, 3) == 0.5);
  CHECK(back.at(4, 4) == 0.0);
  CHECK(back.at(5, 5) == 1.0);
  for (std::size_t i = 0; i < grid.cells().size(); ++i) {
    CHECK(quantize_probability(back.cells()[i]) ==
          quantize_probability(grid.cells()[i]));
  }
  std::remove(path.c_str());
}

TEST_CASE("quantization keeps the ternary anchor points exact") {
  CHECK(quantize_probability(0.0) == 0);
  CHECK(quantize_probability(0.5) == 128);
  CHECK(quantize_probability(1.0) == 255);
  CHECK(dequantize_probability(128) == 0.5);
  CHECK(dequantize_probability(0) == 0.0);
  CHECK(dequantize_probability(255) == 1.0);
}

}  // namespace
}  // namespace gridpilot
