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

#include "gridpilot/mapper.hpp"

#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <random>

namespace gridpilot {
namespace {

namespace fs = std::filesystem;

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

OccupancyGrid ternary_patch(int rows, int cols, double res, int ar, int ac) {
  OccupancyGrid grid(rows, cols, res, ar, ac);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if ((r + c) % 3 == 0) {
        grid.at(r, c) = 1.0;
      } else if ((r + c) % 3 == 1) {
        grid.at(r, c) = 0.0;
      }
    }
  }
  return grid;
}

TEST_CASE("first observation lands world-transformed in fresh tiles") {
  TempDir dir("gp_mapper_first");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  TileIndex index(cfg);
  const OccupancyGrid obs = ternary_patch(20, 20, 0.2, 10, 10);
  const SpatioTemporalStamp stamp{100.0, 3.0, 7.0, 0.0};
  index.insert_observation(obs, stamp);
  CHECK(index.tile_count() >= 1);
  const auto tiles = index.query_visible(-50.0, -50.0, 50.0, 50.0);
  REQUIRE_FALSE(tiles.empty());
  for (int r = 0; r < obs.rows(); ++r) {
    for (int c = 0; c < obs.cols(); ++c) {
      if (obs.at(r, c) == OccupancyGrid::kUnknown) {
        continue;
      }
      const Vec2 world = to_world(stamp.pose(), obs.cell_center(r, c));
      CHECK(fuse_overlapping(tiles, world) == obs.at(r, c));
    }
  }
}

TEST_CASE("consistent re-observation leaves overlap cells unchanged") {
  TempDir dir("gp_mapper_rewrite");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  TileIndex index(cfg);
  OccupancyGrid obs(10, 10, 0.2, 5, 5);
  for (double& p : obs.cells()) {
    p = 0.9;
  }
  index.insert_observation(obs, {10.0, 0.0, 0.0, 0.0});
  const auto before = index.query_visible(-10.0, -10.0, 10.0, 10.0);
  index.insert_observation(obs, {11.0, 1.0, 0.0, 0.0});
  const auto after = index.query_visible(-10.0, -10.0, 10.0, 10.0);
  // Overlap cells were written twice with the same value.
  const Vec2 probe{0.5, 0.1};
  CHECK(fuse_overlapping(before, probe) == 0.9);
  CHECK(fuse_overlapping(after, probe) == 0.9);
}

TEST_CASE("observations straddling a tile boundary conserve cells") {
  TempDir dir("gp_mapper_straddle");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 10.0;
  TileIndex index(cfg);
  OccupancyGrid obs(10, 10, 0.2, 5, 5);
  for (double& p : obs.cells()) {
    p = 1.0;
  }
  // Anchored on the x = 10 lattice line so cells land in both tiles.
  index.insert_observation(obs, {0.0, 10.0, 5.0, 0.0});
  CHECK(index.tile_count() == 2);
  std::size_t written = 0;
  for (const auto& tile : index.query_visible(0.0, 0.0, 20.0, 10.0)) {
    for (double p : tile->cells) {
      if (p != OccupancyGrid::kUnknown) {
        ++written;
      }
    }
  }
  CHECK(written == obs.cells().size());
}

TEST_CASE("queries over unmapped space return nothing") {
  TempDir dir("gp_mapper_empty");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  TileIndex index(cfg);
  CHECK(index.query_visible(100.0, 100.0, 200.0, 200.0).empty());
}

TEST_CASE("LRU eviction streams tiles to disk and back intact") {
  TempDir dir("gp_mapper_lru");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 10.0;
  cfg.max_resident = 2;
  TileIndex index(cfg);
  OccupancyGrid obs(5, 5, 0.2, 2, 2);
  for (double& p : obs.cells()) {
    p = 0.9;
  }
  for (int k = 0; k < 6; ++k) {
    index.insert_observation(obs, {k * 1.0, k * 10.0 + 5.0, 5.0, 0.0});
    CHECK(index.resident_count() <= 2);
  }
  CHECK(index.tile_count() == 6);
  // The first tile was evicted long ago; its content streams back with the
  // u8 quantization the file format applies.
  const auto tiles = index.query_visible(4.0, 4.0, 6.0, 6.0);
  REQUIRE(tiles.size() == 1);
  CHECK(fuse_overlapping(tiles, {5.0, 5.0}) ==
        dequantize_probability(quantize_probability(0.9)));
  CHECK(index.resident_count() <= 2);
}

TEST_CASE("recency weights normalize to the tile count") {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> date(0.0, 1e7);
  std::uniform_int_distribution<int> count(1, 10);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> dates(count(rng));
    for (double& d : dates) {
      d = date(rng);
    }
    const std::vector<double> weights = recency_weights(dates);
    double sum = 0.0;
    for (double w : weights) {
      CHECK(w > 0.0);
      sum += w;
    }
    CHECK(sum == Catch::Approx(static_cast<double>(dates.size())).margin(1e-9));
  }
}

std::shared_ptr<const LocalMapTile> tile_with(double value, double date) {
  auto tile = std::make_shared<LocalMapTile>();
  tile->min_x = 0.0;
  tile->min_y = 0.0;
  tile->max_x = 10.0;
  tile->max_y = 10.0;
  tile->rows = tile->cols = 50;
  tile->resolution = 0.2;
  tile->acquisition_date = date;
  tile->cells.assign(50 * 50, value);
  return tile;
}

TEST_CASE("overlap fusion follows the weighted-average formula") {
  // Single tile: its own value.
  CHECK(fuse_overlapping({tile_with(0.7, 0.0)}, {5.0, 5.0}) == 0.7);

  // Equal dates: plain mean.
  CHECK(fuse_overlapping({tile_with(0.6, 50.0), tile_with(0.8, 50.0)},
                         {5.0, 5.0}) == Catch::Approx(0.7).margin(1e-12));

  // Dates chosen so the weights come out (0.5, 1.5): the older tile must
  // be 30*log2(3) days older than the newer one.
  const double age_days = 30.0 * std::log2(3.0);
  const double t_new = 1e6;
  const double t_old = t_new - age_days * 86400.0;
  const double fused = fuse_overlapping(
      {tile_with(0.6, t_old), tile_with(0.8, t_new)}, {5.0, 5.0});
  CHECK(fused == Catch::Approx(0.75).margin(1e-9));
}

TEST_CASE("overlap fusion of equal values is value-preserving") {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> date(0.0, 1e8);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double v = value(rng);
    std::vector<std::shared_ptr<const LocalMapTile>> tiles;
    const int n = 1 + trial % 5;
    for (int i = 0; i < n; ++i) {
      tiles.push_back(tile_with(v, date(rng)));
    }
    CHECK(fuse_overlapping(tiles, {1.0, 1.0}) ==
          Catch::Approx(v).margin(1e-12));
  }
}

TEST_CASE("uncovered points raise Uncovered") {
  CHECK_THROWS_AS(fuse_overlapping({tile_with(0.5, 0.0)}, {50.0, 50.0}),
                  Uncovered);
}

TEST_CASE("save and restore round-trip an empty index") {
  TempDir dir("gp_mapper_save_empty");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  TileIndex index(cfg);
  const std::string manifest = index.save_session();
  TileIndex restored = TileIndex::restore_session(manifest, cfg);
  CHECK(restored.tile_count() == 0);
  CHECK(restored.query_visible(-100, -100, 100, 100).empty());
}

TEST_CASE("save and restore is lossless and tile files are byte-stable") {
  TempDir dir("gp_mapper_save");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 10.0;
  TileIndex index(cfg);
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> value(0.0, 1.0);
  OccupancyGrid obs(20, 20, 0.2, 10, 10);
  for (int k = 0; k < 12; ++k) {
    for (double& p : obs.cells()) {
      p = value(rng);
    }
    index.insert_observation(obs, {k * 1.0, k * 7.0, (k % 3) * 11.0, 0.0});
  }
  const std::string manifest = index.save_session();

  TileIndexConfig cfg2 = cfg;
  cfg2.session_id = 2;
  TileIndex restored = TileIndex::restore_session(manifest, cfg2);
  CHECK(restored.tile_count() == index.tile_count());

  const auto original = index.query_visible(-200, -200, 200, 200);
  const auto back = restored.query_visible(-200, -200, 200, 200);
  REQUIRE(original.size() == back.size());
  for (std::size_t i = 0; i < original.size(); ++i) {
    CHECK(original[i]->tile_id == back[i]->tile_id);
    CHECK(original[i]->session_id == back[i]->session_id);
    CHECK(original[i]->acquisition_date == back[i]->acquisition_date);
    // Bit-identical u8 payloads across the round trip.
    REQUIRE(back[i]->cells.size() == original[i]->cells.size());
    for (std::size_t j = 0; j < back[i]->cells.size(); ++j) {
      CHECK(quantize_probability(back[i]->cells[j]) ==
            quantize_probability(original[i]->cells[j]));
    }
  }

  // Re-saving the restored session must reproduce the files byte-exactly.
  for (const auto& tile : back) {
    const fs::path path = dir.path / ("tile_check_" +
                                      std::to_string(tile->tile_id) + ".gmt");
    write_tile_file(*tile, path.string());
    std::ifstream a((dir.path / ("tile_" + std::to_string(tile->tile_id) +
                                 ".gmt")),
                    std::ios::binary);
    std::ifstream b(path, std::ios::binary);
    REQUIRE(a.is_open());
    REQUIRE(b.is_open());
    const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
  }
}

TEST_CASE("query results match a naive linear index") {
  TempDir dir("gp_mapper_naive");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 5.0;
  cfg.max_resident = 16;
  TileIndex index(cfg);
  OccupancyGrid obs(4, 4, 0.2, 2, 2);
  for (double& p : obs.cells()) {
    p = 1.0;
  }
  struct NaiveEntry {
    double min_x, min_y, max_x, max_y;
  };
  std::vector<NaiveEntry> naive;
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> coord(-60.0, 60.0);
  for (int k = 0; k < 150; ++k) {
    const double x = coord(rng);
    const double y = coord(rng);
    const std::size_t before = index.tile_count();
    index.insert_observation(obs, {k * 1.0, x, y, 0.0});
    if (index.tile_count() != before) {
      // Record the lattice tiles the observation could have created.
      for (const auto& tile : index.query_visible(x - 1.0, y - 1.0,
                                                  x + 1.0, y + 1.0)) {
        const bool known =
            std::any_of(naive.begin(), naive.end(), [&](const NaiveEntry& e) {
              return e.min_x == tile->min_x && e.min_y == tile->min_y;
            });
        if (!known) {
          naive.push_back({tile->min_x, tile->min_y, tile->max_x, tile->max_y});
        }
      }
    }
  }
  std::uniform_real_distribution<double> span(0.5, 30.0);
  for (int trial = 0; trial < 300; ++trial) {
    const double min_x = coord(rng);
    const double min_y = coord(rng);
    const double max_x = min_x + span(rng);
    const double max_y = min_y + span(rng);
    std::size_t expected = 0;
    for (const NaiveEntry& e : naive) {
      if (min_x <= e.max_x && e.min_x <= max_x && min_y <= e.max_y &&
          e.min_y <= max_y) {
        ++expected;
      }
    }
    const auto result = index.query_visible(min_x, min_y, max_x, max_y);
    CHECK(result.size() == expected);
    CHECK(index.resident_count() <= cfg.max_resident);
  }
}

TEST_CASE("index answers are independent of insertion order") {
  TempDir dir_a("gp_mapper_order_a");
  TempDir dir_b("gp_mapper_order_b");
  TileIndexConfig cfg;
  cfg.tile_size = 10.0;
  OccupancyGrid first(10, 10, 0.2, 5, 5);
  OccupancyGrid second(10, 10, 0.2, 5, 5);
  for (int r = 0; r < 10; ++r) {
    for (int c = 0; c < 10; ++c) {
      first.at(r, c) = 0.9;
      second.at(r, c) = 0.1;
    }
  }
  const SpatioTemporalStamp stamp_a{5.0, 2.0, 2.0, 0.0};
  const SpatioTemporalStamp stamp_b{5.0, 22.0, 2.0, 0.0};

  cfg.storage_dir = dir_a.path.string();
  TileIndex forward(cfg);
  forward.insert_observation(first, stamp_a);
  forward.insert_observation(second, stamp_b);

  cfg.storage_dir = dir_b.path.string();
  TileIndex reversed(cfg);
  reversed.insert_observation(second, stamp_b);
  reversed.insert_observation(first, stamp_a);

  for (const Vec2 probe : {Vec2{2.0, 2.0}, Vec2{22.0, 2.0}}) {
    const auto a = forward.query_visible(probe.x - 1, probe.y - 1,
                                         probe.x + 1, probe.y + 1);
    const auto b = reversed.query_visible(probe.x - 1, probe.y - 1,
                                          probe.x + 1, probe.y + 1);
    CHECK(fuse_overlapping(a, probe) == fuse_overlapping(b, probe));
  }
}

TEST_CASE("missing tile files surface as StorageError naming the tile") {
  TempDir dir("gp_mapper_missing");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 10.0;
  TileIndex index(cfg);
  OccupancyGrid obs(5, 5, 0.2, 2, 2);
  for (double& p : obs.cells()) {
    p = 1.0;
  }
  index.insert_observation(obs, {0.0, 5.0, 5.0, 0.0});
  const std::string manifest = index.save_session();
  for (const auto& entry : fs::directory_iterator(dir.path)) {
    if (entry.path().extension() == ".gmt") {
      fs::remove(entry.path());
    }
  }
  TileIndex broken = TileIndex::restore_session(manifest, cfg);
  CHECK_THROWS_WITH(broken.query_visible(0.0, 0.0, 10.0, 10.0),
                    Catch::Matchers::ContainsSubstring("tile"));
}

TEST_CASE("a later session pulls a parked car's cells toward free") {
  TempDir dir("gp_mapper_update");
  TileIndexConfig cfg;
  cfg.storage_dir = dir.path.string();
  cfg.tile_size = 10.0;

  // Session 1 sees a parked car.
  TileIndex session1(cfg);
  OccupancyGrid obs(10, 10, 0.2, 5, 5);
  for (double& p : obs.cells()) {
    p = 0.9;
  }
  const double day = 86400.0;
  session1.insert_observation(obs, {10.0 * day, 5.0, 5.0, 0.0});
  const std::string manifest = session1.save_session();

  // Session 2 maps the same spot 60 days later; the car is gone.
  TileIndexConfig cfg2 = cfg;
  cfg2.session_id = 2;
  TileIndex session2 = TileIndex::restore_session(manifest, cfg2);
  for (double& p : obs.cells()) {
    p = 0.1;
  }
  session2.insert_observation(obs, {70.0 * day, 5.0, 5.0, 0.0});

  const auto tiles = session2.query_visible(4.0, 4.0, 6.0, 6.0);
  REQUIRE(tiles.size() == 2);
  const double fused = fuse_overlapping(tiles, {5.0, 5.0});

  // Weighted-average oracle evaluated by hand: a_old = 0.5^(60/30) = 0.25.
  const double a_old = std::pow(0.5, 60.0 / 30.0);
  const double w_old = 2.0 * a_old / (a_old + 1.0);
  const double w_new = 2.0 * 1.0 / (a_old + 1.0);
  const double old_value = dequantize_probability(quantize_probability(0.9));
  const double expected = (w_old * old_value + w_new * 0.1) / 2.0;
  CHECK(fused == Catch::Approx(expected).margin(1e-9));
  CHECK(fused < 0.5);
}

}  // namespace
}  // namespace gridpilot
