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

#ifndef GRIDPILOT_MAPPER_HPP_
#define GRIDPILOT_MAPPER_HPP_

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <list>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

struct Uncovered : Error {
  using Error::Error;
};

/// Floor onto a lattice of the given unit, nudged so values that sit on a
/// boundary up to round-off always bin upward. Keeps points spaced exactly
/// one unit apart in distinct bins regardless of where the lattice falls.
inline std::int64_t lattice_floor(double value, double unit) {
  return static_cast<std::int64_t>(std::floor(value / unit + 1e-7));
}

/// Georeferenced probability patch; the streaming unit of the large-scale
/// map. Cells are row-major from the (min_x, min_y) corner, row index along
/// y, column index along x; bounds are exact multiples of the resolution.
struct LocalMapTile {
  std::uint64_t tile_id = 0;
  double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
  double resolution = 0.2;
  int rows = 0;
  int cols = 0;
  double acquisition_date = 0.0;  // seconds since epoch
  std::uint64_t session_id = 0;
  std::vector<double> cells;

  bool contains(Vec2 p) const {
    const std::int64_t col = lattice_floor(p.x, resolution) - origin_col();
    const std::int64_t row = lattice_floor(p.y, resolution) - origin_row();
    return col >= 0 && col < cols && row >= 0 && row < rows;
  }

  std::size_t cell_index(Vec2 p) const {
    const std::int64_t col = std::clamp<std::int64_t>(
        lattice_floor(p.x, resolution) - origin_col(), 0, cols - 1);
    const std::int64_t row = std::clamp<std::int64_t>(
        lattice_floor(p.y, resolution) - origin_row(), 0, rows - 1);
    return static_cast<std::size_t>(row) * cols + col;
  }

  double at(Vec2 p) const { return cells[cell_index(p)]; }

 private:
  std::int64_t origin_col() const {
    return static_cast<std::int64_t>(std::llround(min_x / resolution));
  }
  std::int64_t origin_row() const {
    return static_cast<std::int64_t>(std::llround(min_y / resolution));
  }
};

// ---------------------------------------------------------------------------
// Recency weighting
// ---------------------------------------------------------------------------

/// Per-tile weights from acquisition dates: a_i = 0.5^(age_days / half_life)
/// relative to the newest tile, normalized so the weights sum to n. Under
/// that normalization the paper's (1/n) * sum(w_i * p_i) is a convex
/// combination and constant maps are preserved.
inline std::vector<double> recency_weights(const std::vector<double>& dates,
                                           double half_life_days = 30.0) {
  const double newest = *std::max_element(dates.begin(), dates.end());
  std::vector<double> weights(dates.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < dates.size(); ++i) {
    const double age_days = (newest - dates[i]) / 86400.0;
    weights[i] = std::pow(0.5, age_days / half_life_days);
    sum += weights[i];
  }
  const double scale = static_cast<double>(dates.size()) / sum;
  for (double& w : weights) {
    w *= scale;
  }
  return weights;
}

/// Weighted-average fusion of every tile covering the point; nullopt when
/// nothing covers it.
inline std::optional<double> try_fuse_overlapping(
    const std::vector<std::shared_ptr<const LocalMapTile>>& tiles, Vec2 point,
    double half_life_days = 30.0) {
  std::vector<double> dates;
  std::vector<double> values;
  for (const auto& tile : tiles) {
    if (tile->contains(point)) {
      dates.push_back(tile->acquisition_date);
      values.push_back(tile->at(point));
    }
  }
  if (values.empty()) {
    return std::nullopt;
  }
  const std::vector<double> weights = recency_weights(dates, half_life_days);
  double acc = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    acc += weights[i] * values[i];
  }
  return acc / static_cast<double>(values.size());
}

inline double fuse_overlapping(
    const std::vector<std::shared_ptr<const LocalMapTile>>& tiles, Vec2 point,
    double half_life_days = 30.0) {
  const auto fused = try_fuse_overlapping(tiles, point, half_life_days);
  if (!fused) {
    throw Uncovered("fuse_overlapping: no tile covers the point");
  }
  return *fused;
}

// ---------------------------------------------------------------------------
// Tile file format
// ---------------------------------------------------------------------------
// Binary, little-endian: magic "GMT1", tile_id u64, bounds 4 x f64
// (min_x min_y max_x max_y), resolution f64, rows u32, cols u32,
// acquisition_date f64, session_id u64, then rows*cols cell bytes with
// probability quantized as round(p * 255); 128 is the unknown sentinel and
// round-trips to exactly 0.5.

namespace detail {

template <typename T>
void write_raw(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

template <typename T>
T read_raw(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  return value;
}

}  // namespace detail

inline void write_tile_file(const LocalMapTile& tile, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw StorageError("write_tile_file: cannot open " + path);
  }
  out.write("GMT1", 4);
  detail::write_raw(out, tile.tile_id);
  detail::write_raw(out, tile.min_x);
  detail::write_raw(out, tile.min_y);
  detail::write_raw(out, tile.max_x);
  detail::write_raw(out, tile.max_y);
  detail::write_raw(out, tile.resolution);
  detail::write_raw(out, static_cast<std::uint32_t>(tile.rows));
  detail::write_raw(out, static_cast<std::uint32_t>(tile.cols));
  detail::write_raw(out, tile.acquisition_date);
  detail::write_raw(out, tile.session_id);
  std::vector<std::uint8_t> bytes;
  bytes.reserve(tile.cells.size());
  for (double p : tile.cells) {
    bytes.push_back(quantize_probability(p));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw StorageError("write_tile_file: write failed for " + path);
  }
}

inline LocalMapTile read_tile_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StorageError("read_tile_file: cannot open " + path);
  }
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "GMT1", 4) != 0) {
    throw StorageError("read_tile_file: bad magic in " + path);
  }
  LocalMapTile tile;
  tile.tile_id = detail::read_raw<std::uint64_t>(in);
  tile.min_x = detail::read_raw<double>(in);
  tile.min_y = detail::read_raw<double>(in);
  tile.max_x = detail::read_raw<double>(in);
  tile.max_y = detail::read_raw<double>(in);
  tile.resolution = detail::read_raw<double>(in);
  tile.rows = static_cast<int>(detail::read_raw<std::uint32_t>(in));
  tile.cols = static_cast<int>(detail::read_raw<std::uint32_t>(in));
  tile.acquisition_date = detail::read_raw<double>(in);
  tile.session_id = detail::read_raw<std::uint64_t>(in);
  if (!in || tile.rows <= 0 || tile.cols <= 0 || tile.resolution <= 0.0) {
    throw StorageError("read_tile_file: corrupt header in " + path);
  }
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(tile.rows) *
                                  tile.cols);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) {
    throw StorageError("read_tile_file: truncated cells in " + path);
  }
  tile.cells.resize(bytes.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    tile.cells[i] = dequantize_probability(bytes[i]);
  }
  return tile;
}

// ---------------------------------------------------------------------------
// Tile index
// ---------------------------------------------------------------------------

struct TileIndexConfig {
  double tile_size = 40.0;  // meters per tile edge
  double resolution = 0.2;
  std::size_t max_resident = 64;
  std::string storage_dir = ".";
  std::uint64_t session_id = 1;
  double half_life_days = 30.0;
};

/// Spatially indexed store of local map tiles. Only max_resident tiles stay
/// in memory; the rest are streamed to disk with LRU write-back. One mapping
/// task owns the index; queries hand out immutable snapshots.
class TileIndex {
 public:
  explicit TileIndex(TileIndexConfig config) : config_(std::move(config)) {
    if (config_.max_resident == 0) {
      throw std::invalid_argument("TileIndex: max_resident must be positive");
    }
    std::filesystem::create_directories(config_.storage_dir);
  }

  const TileIndexConfig& config() const { return config_; }
  std::size_t resident_count() const { return resident_.size(); }
  std::size_t tile_count() const { return metas_.size(); }

  /// Writes every non-unknown cell of the fused grid into the world-frame
  /// tiles it overlaps, creating this session's tiles on demand.
  void insert_observation(const OccupancyGrid& fused,
                          const SpatioTemporalStamp& stamp) {
    if (std::abs(stamp.x) > 1e7 || std::abs(stamp.y) > 1e7) {
      throw std::invalid_argument("insert_observation: pose outside mapped world");
    }
    const Pose2D ego = stamp.pose();
    LocalMapTile* cached = nullptr;
    std::int64_t cached_i = 0, cached_j = 0;
    bool have_cached = false;
    for (int r = 0; r < fused.rows(); ++r) {
      for (int c = 0; c < fused.cols(); ++c) {
        const double p = fused.at(r, c);
        if (p == OccupancyGrid::kUnknown) {
          continue;
        }
        const Vec2 world = to_world(ego, fused.cell_center(r, c));
        const std::int64_t i = lattice_floor(world.x, config_.tile_size);
        const std::int64_t j = lattice_floor(world.y, config_.tile_size);
        if (!have_cached || i != cached_i || j != cached_j) {
          cached = &session_tile(i, j);
          cached_i = i;
          cached_j = j;
          have_cached = true;
        }
        cached->cells[cached->cell_index(world)] = p;
        cached->acquisition_date = stamp.t;
      }
    }
    enforce_residency();
  }

  /// All tiles intersecting the viewport, loading from disk as needed.
  std::vector<std::shared_ptr<const LocalMapTile>> query_visible(
      double min_x, double min_y, double max_x, double max_y) {
    const Box box(Point(min_x, min_y), Point(max_x, max_y));
    std::vector<RTreeValue> hits;
    rtree_.query(boost::geometry::index::intersects(box),
                 std::back_inserter(hits));
    std::vector<std::uint64_t> ids;
    ids.reserve(hits.size());
    for (const RTreeValue& hit : hits) {
      ids.push_back(hit.second);
    }
    std::sort(ids.begin(), ids.end());
    std::vector<std::shared_ptr<const LocalMapTile>> result;
    result.reserve(ids.size());
    for (std::uint64_t id : ids) {
      result.push_back(ensure_resident(id));
    }
    enforce_residency();
    return result;
  }

  /// Flushes dirty tiles and writes the manifest: one line per tile with
  /// `tile_id min_x min_y max_x max_y path`. Returns the manifest path.
  std::string save_session() {
    for (std::uint64_t id : std::set<std::uint64_t>(dirty_.begin(), dirty_.end())) {
      flush_tile(id);
    }
    const std::string manifest_path =
        (std::filesystem::path(config_.storage_dir) / "manifest.txt").string();
    std::ofstream out(manifest_path);
    if (!out) {
      throw StorageError("save_session: cannot open " + manifest_path);
    }
    out.precision(17);
    for (const auto& [id, meta] : metas_) {
      out << id << " " << meta.min_x << " " << meta.min_y << " " << meta.max_x
          << " " << meta.max_y << " " << meta.path << "\n";
    }
    if (!out) {
      throw StorageError("save_session: write failed for " + manifest_path);
    }
    return manifest_path;
  }

  /// Rebuilds an index from a manifest; tile payloads load lazily. The
  /// config carries the (new) session id for incremental mapping.
  static TileIndex restore_session(const std::string& manifest_path,
                                   TileIndexConfig config) {
    std::ifstream in(manifest_path);
    if (!in) {
      throw StorageError("restore_session: cannot open " + manifest_path);
    }
    TileIndex index(std::move(config));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) {
        continue;
      }
      std::istringstream fields(line);
      std::uint64_t id = 0;
      Meta meta;
      if (!(fields >> id >> meta.min_x >> meta.min_y >> meta.max_x >>
            meta.max_y >> meta.path)) {
        throw StorageError("restore_session: bad manifest line: " + line);
      }
      meta.on_disk = true;
      index.metas_[id] = meta;
      index.rtree_.insert({Box(Point(meta.min_x, meta.min_y),
                               Point(meta.max_x, meta.max_y)),
                           id});
      index.next_id_ = std::max(index.next_id_, id + 1);
    }
    return index;
  }

 private:
  using Point = boost::geometry::model::point<double, 2,
                                              boost::geometry::cs::cartesian>;
  using Box = boost::geometry::model::box<Point>;
  using RTreeValue = std::pair<Box, std::uint64_t>;

  struct Meta {
    double min_x = 0.0, min_y = 0.0, max_x = 0.0, max_y = 0.0;
    std::string path;
    bool on_disk = false;
  };

  LocalMapTile& session_tile(std::int64_t i, std::int64_t j) {
    const auto key = std::make_pair(i, j);
    const auto it = session_tiles_.find(key);
    if (it != session_tiles_.end()) {
      LocalMapTile& tile = *ensure_resident(it->second);
      dirty_.insert(it->second);
      return tile;
    }
    auto tile = std::make_shared<LocalMapTile>();
    tile->tile_id = next_id_++;
    tile->min_x = i * config_.tile_size;
    tile->min_y = j * config_.tile_size;
    tile->max_x = tile->min_x + config_.tile_size;
    tile->max_y = tile->min_y + config_.tile_size;
    tile->resolution = config_.resolution;
    tile->rows = static_cast<int>(std::lround(config_.tile_size / config_.resolution));
    tile->cols = tile->rows;
    tile->session_id = config_.session_id;
    tile->cells.assign(static_cast<std::size_t>(tile->rows) * tile->cols,
                       OccupancyGrid::kUnknown);
    const std::uint64_t id = tile->tile_id;
    Meta meta;
    meta.min_x = tile->min_x;
    meta.min_y = tile->min_y;
    meta.max_x = tile->max_x;
    meta.max_y = tile->max_y;
    metas_[id] = meta;
    rtree_.insert({Box(Point(meta.min_x, meta.min_y),
                       Point(meta.max_x, meta.max_y)),
                   id});
    session_tiles_[key] = id;
    resident_[id] = tile;
    touch(id);
    dirty_.insert(id);
    return *tile;
  }

  std::shared_ptr<LocalMapTile> ensure_resident(std::uint64_t id) {
    const auto it = resident_.find(id);
    if (it != resident_.end()) {
      touch(id);
      return it->second;
    }
    const auto meta = metas_.find(id);
    if (meta == metas_.end()) {
      throw StorageError("tile " + std::to_string(id) + " is not indexed");
    }
    if (!meta->second.on_disk) {
      throw StorageError("tile " + std::to_string(id) + " has no backing file");
    }
    LocalMapTile loaded;
    try {
      loaded = read_tile_file(meta->second.path);
    } catch (const StorageError& e) {
      throw StorageError("tile " + std::to_string(id) + ": " + e.what());
    }
    auto tile = std::make_shared<LocalMapTile>(std::move(loaded));
    resident_[id] = tile;
    touch(id);
    return tile;
  }

  void touch(std::uint64_t id) {
    const auto pos = lru_pos_.find(id);
    if (pos != lru_pos_.end()) {
      lru_.erase(pos->second);
    }
    lru_.push_front(id);
    lru_pos_[id] = lru_.begin();
  }

  void flush_tile(std::uint64_t id) {
    const auto it = resident_.find(id);
    if (it == resident_.end()) {
      return;
    }
    Meta& meta = metas_[id];
    if (meta.path.empty()) {
      meta.path = (std::filesystem::path(config_.storage_dir) /
                   ("tile_" + std::to_string(id) + ".gmt"))
                      .string();
    }
    write_tile_file(*it->second, meta.path);
    meta.on_disk = true;
    dirty_.erase(id);
  }

  void enforce_residency() {
    while (resident_.size() > config_.max_resident) {
      const std::uint64_t victim = lru_.back();
      if (dirty_.count(victim)) {
        flush_tile(victim);
      }
      lru_.pop_back();
      lru_pos_.erase(victim);
      resident_.erase(victim);
    }
  }

  TileIndexConfig config_;
  boost::geometry::index::rtree<RTreeValue,
                                boost::geometry::index::quadratic<16>>
      rtree_;
  std::map<std::uint64_t, Meta> metas_;
  std::unordered_map<std::uint64_t, std::shared_ptr<LocalMapTile>> resident_;
  std::list<std::uint64_t> lru_;  // most recently used at the front
  std::unordered_map<std::uint64_t, std::list<std::uint64_t>::iterator> lru_pos_;
  std::set<std::uint64_t> dirty_;
  std::map<std::pair<std::int64_t, std::int64_t>, std::uint64_t> session_tiles_;
  std::uint64_t next_id_ = 1;
};

/// Renders the historical map around a stamp into a vehicle-frame grid by
/// recency-fusing the tiles visible in the grid's world footprint.
inline OccupancyGrid historical_grid(TileIndex& index,
                                     const SpatioTemporalStamp& stamp,
                                     const OccupancyGrid& shape) {
  const Pose2D ego = stamp.pose();
  double min_x = kInfinity, min_y = kInfinity;
  double max_x = -kInfinity, max_y = -kInfinity;
  for (const CellIndex corner :
       {CellIndex{0, 0}, CellIndex{0, shape.cols() - 1},
        CellIndex{shape.rows() - 1, 0},
        CellIndex{shape.rows() - 1, shape.cols() - 1}}) {
    const Vec2 w = to_world(ego, shape.cell_center(corner));
    min_x = std::min(min_x, w.x);
    min_y = std::min(min_y, w.y);
    max_x = std::max(max_x, w.x);
    max_y = std::max(max_y, w.y);
  }
  const auto tiles = index.query_visible(min_x, min_y, max_x, max_y);
  OccupancyGrid out(shape.rows(), shape.cols(), shape.resolution(),
                    shape.anchor_row(), shape.anchor_col());
  if (tiles.empty()) {
    return out;
  }
  const double half_life = index.config().half_life_days;
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      const Vec2 world = to_world(ego, out.cell_center(r, c));
      if (const auto fused = try_fuse_overlapping(tiles, world, half_life)) {
        out.at(r, c) = *fused;
      }
    }
  }
  return out;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_MAPPER_HPP_
