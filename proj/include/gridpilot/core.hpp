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

#ifndef GRIDPILOT_CORE_HPP_
#define GRIDPILOT_CORE_HPP_

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace gridpilot {

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidAngle : Error {
  using Error::Error;
};
struct StaleObservation : Error {
  using Error::Error;
};
struct AlignmentError : Error {
  using Error::Error;
};
struct EmptyInput : Error {
  using Error::Error;
};
struct StorageError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Angles and SE(2)
// ---------------------------------------------------------------------------

/// Wraps an angle into (-pi, pi].
inline double normalize_angle(double theta) {
  if (!std::isfinite(theta)) {
    throw InvalidAngle("normalize_angle: non-finite angle");
  }
  double wrapped = std::remainder(theta, 2.0 * kPi);
  if (wrapped <= -kPi) {
    wrapped = kPi;
  }
  return wrapped;
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.x, s * v.y}; }
inline double norm(Vec2 v) { return std::hypot(v.x, v.y); }

/// Planar pose, x forward / y left, theta in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double theta_)
      : x(x_), y(y_), theta(normalize_angle(theta_)) {}
};

inline Vec2 to_world(const Pose2D& frame, Vec2 local) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  return {frame.x + c * local.x - s * local.y,
          frame.y + s * local.x + c * local.y};
}

inline Vec2 to_local(const Pose2D& frame, Vec2 world) {
  const double c = std::cos(frame.theta);
  const double s = std::sin(frame.theta);
  const double dx = world.x - frame.x;
  const double dy = world.y - frame.y;
  return {c * dx + s * dy, -s * dx + c * dy};
}

/// a * b: pose b expressed in the frame that a is expressed in.
inline Pose2D compose(const Pose2D& a, const Pose2D& b) {
  const Vec2 p = to_world(a, {b.x, b.y});
  return {p.x, p.y, a.theta + b.theta};
}

/// from^-1 * to: pose of `to` as seen from `from`.
inline Pose2D relative(const Pose2D& from, const Pose2D& to) {
  const Vec2 p = to_local(from, {to.x, to.y});
  return {p.x, p.y, to.theta - from.theta};
}

// ---------------------------------------------------------------------------
// Spatiotemporal stamp
// ---------------------------------------------------------------------------

/// Time + pose attached to every message at measurement time.
struct SpatioTemporalStamp {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;

  SpatioTemporalStamp() = default;
  SpatioTemporalStamp(double t_, double x_, double y_, double theta_)
      : t(t_), x(x_), y(y_), theta(normalize_angle(theta_)) {}
  SpatioTemporalStamp(double t_, const Pose2D& pose)
      : t(t_), x(pose.x), y(pose.y), theta(pose.theta) {}

  Pose2D pose() const { return {x, y, theta}; }

  bool same_pose(const SpatioTemporalStamp& other) const {
    return x == other.x && y == other.y && theta == other.theta;
  }
  bool operator==(const SpatioTemporalStamp& other) const {
    return t == other.t && same_pose(other);
  }
};

// ---------------------------------------------------------------------------
// Occupancy grid
// ---------------------------------------------------------------------------

struct CellIndex {
  int row = 0;
  int col = 0;
  auto operator<=>(const CellIndex&) const = default;
};

/// Probability grid in the vehicle frame. The anchor cell center sits at the
/// front axle; forward motion decreases the row index, leftward motion
/// decreases the column index. The default grid covers 60 m ahead, 20 m
/// behind and +/-15 m laterally at 0.2 m per cell.
class OccupancyGrid {
 public:
  static constexpr int kDefaultRows = 400;
  static constexpr int kDefaultCols = 150;
  static constexpr double kDefaultResolution = 0.2;
  static constexpr int kDefaultAnchorRow = 300;
  static constexpr int kDefaultAnchorCol = 75;
  static constexpr double kUnknown = 0.5;

  OccupancyGrid()
      : OccupancyGrid(kDefaultRows, kDefaultCols, kDefaultResolution,
                      kDefaultAnchorRow, kDefaultAnchorCol) {}

  OccupancyGrid(int rows, int cols, double resolution, int anchor_row,
                int anchor_col)
      : rows_(rows),
        cols_(cols),
        resolution_(resolution),
        anchor_row_(anchor_row),
        anchor_col_(anchor_col),
        cells_(static_cast<std::size_t>(rows) * cols, kUnknown) {
    if (rows <= 0 || cols <= 0 || resolution <= 0.0) {
      throw std::invalid_argument("OccupancyGrid: invalid dimensions");
    }
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double resolution() const { return resolution_; }
  int anchor_row() const { return anchor_row_; }
  int anchor_col() const { return anchor_col_; }

  bool in_bounds(int row, int col) const {
    return row >= 0 && row < rows_ && col >= 0 && col < cols_;
  }
  bool in_bounds(CellIndex c) const { return in_bounds(c.row, c.col); }

  double at(int row, int col) const {
    return cells_[static_cast<std::size_t>(row) * cols_ + col];
  }
  double& at(int row, int col) {
    return cells_[static_cast<std::size_t>(row) * cols_ + col];
  }
  double at(CellIndex c) const { return at(c.row, c.col); }
  double& at(CellIndex c) { return at(c.row, c.col); }

  void set(int row, int col, double p) { at(row, col) = p; }

  /// Cell containing a vehicle-frame point, or nullopt when outside.
  std::optional<CellIndex> cell_at(Vec2 p) const {
    const int row = anchor_row_ - static_cast<int>(std::lround(p.x / resolution_));
    const int col = anchor_col_ - static_cast<int>(std::lround(p.y / resolution_));
    if (!in_bounds(row, col)) {
      return std::nullopt;
    }
    return CellIndex{row, col};
  }

  /// Vehicle-frame center of a cell.
  Vec2 cell_center(CellIndex c) const {
    return {(anchor_row_ - c.row) * resolution_,
            (anchor_col_ - c.col) * resolution_};
  }
  Vec2 cell_center(int row, int col) const { return cell_center({row, col}); }

  bool same_shape(const OccupancyGrid& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           resolution_ == other.resolution_ &&
           anchor_row_ == other.anchor_row_ &&
           anchor_col_ == other.anchor_col_;
  }

  const std::vector<double>& cells() const { return cells_; }
  std::vector<double>& cells() { return cells_; }

 private:
  int rows_;
  int cols_;
  double resolution_;
  int anchor_row_;
  int anchor_col_;
  std::vector<double> cells_;
};

/// A grid observation tagged with the stamp taken at measurement time.
struct StampedGrid {
  SpatioTemporalStamp stamp;
  OccupancyGrid grid;
  std::string source;
};

// ---------------------------------------------------------------------------
// Frame changes
// ---------------------------------------------------------------------------

/// World point -> cell of `grid` with the vehicle at `ego`.
inline std::optional<CellIndex> world_to_cell(const OccupancyGrid& grid,
                                              Vec2 world, const Pose2D& ego) {
  return grid.cell_at(to_local(ego, world));
}

/// Vehicle-frame cell center -> world point with the vehicle at `ego`.
inline Vec2 cell_to_world(const OccupancyGrid& grid, CellIndex cell,
                          const Pose2D& ego) {
  return to_world(ego, grid.cell_center(cell));
}

/// Calls f(row, col, source_cell) for every cell of a grid shaped like
/// `shape`, where source_cell is the nearest cell of the same shape seen from
/// `src_pose` that covers the target cell center seen from `dst_pose`
/// (nullopt when the center falls outside the source grid).
template <typename F>
void for_each_resampled_cell(const OccupancyGrid& shape, const Pose2D& src_pose,
                             const Pose2D& dst_pose, F&& f) {
  const Pose2D rel = relative(src_pose, dst_pose);
  const double c = std::cos(rel.theta);
  const double s = std::sin(rel.theta);
  for (int row = 0; row < shape.rows(); ++row) {
    for (int col = 0; col < shape.cols(); ++col) {
      const Vec2 p = shape.cell_center(row, col);
      const Vec2 src{rel.x + c * p.x - s * p.y, rel.y + s * p.x + c * p.y};
      f(row, col, shape.cell_at(src));
    }
  }
}

/// Resamples a stamped observation into the vehicle frame of `target`.
/// Cells without source coverage are unknown. Nearest-cell lookup keeps the
/// output value set inside {source values} + {0.5}.
inline OccupancyGrid align_grid(const StampedGrid& observation,
                                const SpatioTemporalStamp& target,
                                double staleness_budget = 0.5) {
  if (std::abs(target.t - observation.stamp.t) > staleness_budget) {
    throw StaleObservation("align_grid: observation from " +
                           observation.source + " exceeds staleness budget");
  }
  OccupancyGrid out(observation.grid.rows(), observation.grid.cols(),
                    observation.grid.resolution(),
                    observation.grid.anchor_row(),
                    observation.grid.anchor_col());
  for_each_resampled_cell(
      out, observation.stamp.pose(), target.pose(),
      [&](int row, int col, std::optional<CellIndex> src) {
        if (src) {
          out.at(row, col) = observation.grid.at(*src);
        }
      });
  return out;
}

// ---------------------------------------------------------------------------
// Grid ray traversal
// ---------------------------------------------------------------------------

/// Cells crossed by the segment from `from` to `to` (vehicle-frame meters),
/// in traversal order, clipped to the grid. Visits every cell the segment
/// passes through.
inline std::vector<CellIndex> grid_ray_cells(const OccupancyGrid& grid,
                                             Vec2 from, Vec2 to) {
  std::vector<CellIndex> cells;
  const double res = grid.resolution();
  // Continuous cell coordinates: u along rows, v along cols, cell (r,c)
  // spans [r-0.5, r+0.5) x [c-0.5, c+0.5).
  const double u0 = grid.anchor_row() - from.x / res;
  const double v0 = grid.anchor_col() - from.y / res;
  const double u1 = grid.anchor_row() - to.x / res;
  const double v1 = grid.anchor_col() - to.y / res;

  // End cells must agree with cell_at() so callers can anchor on them.
  int row = grid.anchor_row() - static_cast<int>(std::lround(from.x / res));
  int col = grid.anchor_col() - static_cast<int>(std::lround(from.y / res));
  const int row_end =
      grid.anchor_row() - static_cast<int>(std::lround(to.x / res));
  const int col_end =
      grid.anchor_col() - static_cast<int>(std::lround(to.y / res));

  const double du = u1 - u0;
  const double dv = v1 - v0;
  const int step_row = du > 0 ? 1 : -1;
  const int step_col = dv > 0 ? 1 : -1;

  // Parametric distance to the next row/col boundary.
  auto boundary_t = [](double start, int cell, int step, double delta) {
    if (delta == 0.0) {
      return kInfinity;
    }
    const double boundary = cell + step * 0.5;
    return (boundary - start) / delta;
  };
  double t_row = boundary_t(u0, row, step_row, du);
  double t_col = boundary_t(v0, col, step_col, dv);
  const double dt_row = du == 0.0 ? kInfinity : std::abs(1.0 / du);
  const double dt_col = dv == 0.0 ? kInfinity : std::abs(1.0 / dv);

  const std::size_t max_cells =
      static_cast<std::size_t>(std::abs(row_end - row) +
                               std::abs(col_end - col) + 2);
  cells.reserve(max_cells);
  while (true) {
    if (grid.in_bounds(row, col)) {
      cells.push_back({row, col});
    }
    if (row == row_end && col == col_end) {
      break;
    }
    // Never overshoot the end cell on either axis.
    bool advance_row;
    if (row == row_end) {
      advance_row = false;
    } else if (col == col_end) {
      advance_row = true;
    } else {
      advance_row = t_row <= t_col;
    }
    if (advance_row) {
      row += step_row;
      t_row += dt_row;
    } else {
      col += step_col;
      t_col += dt_col;
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Graymap dump
// ---------------------------------------------------------------------------

inline std::uint8_t quantize_probability(double p) {
  const double clamped = std::clamp(p, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0));
}

inline double dequantize_probability(std::uint8_t b) {
  if (b == 128) {
    return 0.5;  // exact round-trip for the unknown sentinel
  }
  return b / 255.0;
}

/// Writes the grid as a binary PGM, one byte per cell, row-major from the
/// front-left corner: 0 = free, 128 = unknown, 255 = obstacle.
inline void write_pgm(const OccupancyGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw StorageError("write_pgm: cannot open " + path);
  }
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  std::vector<std::uint8_t> bytes;
  bytes.reserve(grid.cells().size());
  for (double p : grid.cells()) {
    bytes.push_back(quantize_probability(p));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw StorageError("write_pgm: write failed for " + path);
  }
}

inline OccupancyGrid read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw StorageError("read_pgm: cannot open " + path);
  }
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || cols <= 0 || rows <= 0 || maxval != 255) {
    throw StorageError("read_pgm: not an 8-bit P5 graymap: " + path);
  }
  in.get();  // single whitespace after the header
  OccupancyGrid grid(rows, cols, OccupancyGrid::kDefaultResolution,
                     rows * 3 / 4, cols / 2);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(rows) * cols);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!in) {
    throw StorageError("read_pgm: truncated graymap: " + path);
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    grid.cells()[i] = dequantize_probability(bytes[i]);
  }
  return grid;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_CORE_HPP_
