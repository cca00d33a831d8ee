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

#ifndef GRIDPILOT_PERCEPTION_HPP_
#define GRIDPILOT_PERCEPTION_HPP_

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

inline constexpr double kObstacleEvidence = 0.9;
inline constexpr double kFreeEvidence = 0.1;

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

/// 3D returns in the vehicle frame; z is measured from the ground plane at
/// the vehicle origin.
struct PointCloud {
  std::vector<Point3> points;
  SpatioTemporalStamp stamp;
};

/// Single-plane range scan. Missing returns are encoded as max_range.
struct PlanarScan {
  std::vector<double> ranges;
  std::vector<double> bearings;
  double max_range = 60.0;
  double mount_height = 0.0;
  SpatioTemporalStamp stamp;
};

struct SegmentationParams {
  int upsample_factor = 5;  // coarse cell = factor x 0.2 m
  int n_lowest = 5;
  double height_delta = 0.3;
  double z_low = 0.3;   // vehicle vertical span
  double z_high = 2.5;

  void validate() const {
    if (upsample_factor != 4 && upsample_factor != 5) {
      throw std::invalid_argument("SegmentationParams: upsample_factor must be 4 or 5");
    }
    if (n_lowest < 1) {
      throw std::invalid_argument("SegmentationParams: n_lowest must be >= 1");
    }
    if (!(z_low < z_high)) {
      throw std::invalid_argument("SegmentationParams: z_low must be below z_high");
    }
  }
};

/// Two-step multibeam segmentation. Step 1 estimates a per-coarse-cell
/// ground height as the mean of the n lowest z values and flags points a
/// height_delta above it as obstacle points. Step 2 marks every fine cell
/// holding an obstacle point inside the vehicle's vertical span, which drops
/// overhanging structure such as tree branches. Fine cells that only saw
/// ground returns come out free; cells without returns stay unknown.
inline StampedGrid segment_point_cloud(const PointCloud& cloud,
                                       const SegmentationParams& params) {
  params.validate();
  if (cloud.points.empty()) {
    throw EmptyInput("segment_point_cloud: empty cloud");
  }

  StampedGrid out;
  out.stamp = cloud.stamp;
  out.source = "multibeam";
  OccupancyGrid& grid = out.grid;

  const int factor = params.upsample_factor;
  const int coarse_rows = (grid.rows() + factor - 1) / factor;
  const int coarse_cols = (grid.cols() + factor - 1) / factor;
  std::vector<std::vector<double>> coarse_z(
      static_cast<std::size_t>(coarse_rows) * coarse_cols);

  std::vector<std::optional<CellIndex>> fine_cells(cloud.points.size());
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    const Point3& p = cloud.points[i];
    fine_cells[i] = grid.cell_at({p.x, p.y});
    if (!fine_cells[i]) {
      continue;
    }
    const int cr = fine_cells[i]->row / factor;
    const int cc = fine_cells[i]->col / factor;
    coarse_z[static_cast<std::size_t>(cr) * coarse_cols + cc].push_back(p.z);
  }

  std::vector<double> z_min(coarse_z.size(), kInfinity);
  for (std::size_t i = 0; i < coarse_z.size(); ++i) {
    auto& zs = coarse_z[i];
    if (zs.empty()) {
      continue;
    }
    const std::size_t n = std::min<std::size_t>(params.n_lowest, zs.size());
    std::nth_element(zs.begin(), zs.begin() + (n - 1), zs.end());
    // Summing in sorted order keeps the mean independent of point order.
    std::sort(zs.begin(), zs.begin() + n);
    const double sum = std::accumulate(zs.begin(), zs.begin() + n, 0.0);
    z_min[i] = sum / static_cast<double>(n);
  }

  std::vector<std::uint8_t> has_point(grid.cells().size(), 0);
  std::vector<std::uint8_t> has_obstacle(grid.cells().size(), 0);
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!fine_cells[i]) {
      continue;
    }
    const CellIndex cell = *fine_cells[i];
    const std::size_t fine = static_cast<std::size_t>(cell.row) * grid.cols() + cell.col;
    has_point[fine] = 1;
    const int cr = cell.row / factor;
    const int cc = cell.col / factor;
    const double ground = z_min[static_cast<std::size_t>(cr) * coarse_cols + cc];
    const double z = cloud.points[i].z;
    const bool obstacle_point = z > ground + params.height_delta;
    if (obstacle_point && z >= params.z_low && z <= params.z_high) {
      has_obstacle[fine] = 1;
    }
  }

  for (std::size_t i = 0; i < grid.cells().size(); ++i) {
    if (has_obstacle[i]) {
      grid.cells()[i] = kObstacleEvidence;
    } else if (has_point[i]) {
      grid.cells()[i] = kFreeEvidence;
    }
  }
  return out;
}

/// Projects a pitched planar scan onto the grid plane. Each return is
/// rotated by -pitch about the lateral axis before projection, so the
/// forward component shrinks by cos(pitch). Hit cells become obstacles,
/// cells along the ray before the hit become free.
inline StampedGrid project_planar_scan(const PlanarScan& scan, double pitch,
                                       const std::string& source = "planar") {
  if (!(std::abs(pitch) < kPi / 4.0)) {
    throw std::invalid_argument("project_planar_scan: |pitch| must be < pi/4");
  }
  if (scan.ranges.size() != scan.bearings.size()) {
    throw std::invalid_argument("project_planar_scan: ranges/bearings size mismatch");
  }

  StampedGrid out;
  out.stamp = scan.stamp;
  out.source = source;
  OccupancyGrid& grid = out.grid;

  const double cp = std::cos(pitch);
  std::vector<std::uint8_t> free_cells(grid.cells().size(), 0);
  std::vector<std::uint8_t> hit_cells(grid.cells().size(), 0);
  for (std::size_t i = 0; i < scan.ranges.size(); ++i) {
    const double bearing = scan.bearings[i];
    const double range = std::min(scan.ranges[i], scan.max_range);
    const bool returned = scan.ranges[i] < scan.max_range;
    const Vec2 hit{range * std::cos(bearing) * cp, range * std::sin(bearing)};
    const auto cells = grid_ray_cells(grid, {0.0, 0.0}, hit);
    const auto hit_cell = grid.cell_at(hit);
    for (const CellIndex& cell : cells) {
      const std::size_t idx = static_cast<std::size_t>(cell.row) * grid.cols() + cell.col;
      if (returned && hit_cell && cell == *hit_cell) {
        hit_cells[idx] = 1;
      } else {
        free_cells[idx] = 1;
      }
    }
  }
  for (std::size_t i = 0; i < grid.cells().size(); ++i) {
    if (hit_cells[i]) {
      grid.cells()[i] = kObstacleEvidence;
    } else if (free_cells[i]) {
      grid.cells()[i] = kFreeEvidence;
    }
  }
  return out;
}

/// Ray-casts the grid from the anchor into a synthetic 2D scan: per bearing
/// the distance to the first cell above the obstacle threshold, max_range
/// when the ray leaves the grid clean.
inline PlanarScan generate_virtual_scan(const OccupancyGrid& grid,
                                        const std::vector<double>& bearings,
                                        double max_range = 60.0,
                                        const SpatioTemporalStamp& stamp = {},
                                        double obstacle_threshold = 0.75) {
  for (std::size_t i = 1; i < bearings.size(); ++i) {
    if (!(bearings[i] > bearings[i - 1])) {
      throw std::invalid_argument("generate_virtual_scan: bearings must increase");
    }
  }
  PlanarScan scan;
  scan.bearings = bearings;
  scan.max_range = max_range;
  scan.stamp = stamp;
  scan.ranges.reserve(bearings.size());
  for (double bearing : bearings) {
    const Vec2 end{max_range * std::cos(bearing), max_range * std::sin(bearing)};
    double range = max_range;
    for (const CellIndex& cell : grid_ray_cells(grid, {0.0, 0.0}, end)) {
      if (grid.at(cell) > obstacle_threshold) {
        range = std::min(norm(grid.cell_center(cell)), max_range);
        break;
      }
    }
    scan.ranges.push_back(range);
  }
  return scan;
}

// ---------------------------------------------------------------------------
// Constant-velocity multi-object tracking
// ---------------------------------------------------------------------------

enum class ObjectClass { kUnknown, kCar, kPedestrian, kBicycle };

struct Detection {
  Vec2 position;
  double length = 1.0;
  double width = 1.0;
  ObjectClass cls = ObjectClass::kUnknown;
};

struct TrackedObject {
  std::uint64_t id = 0;
  ObjectClass cls = ObjectClass::kUnknown;
  Eigen::Vector4d state = Eigen::Vector4d::Zero();  // x y vx vy
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Identity();
  double length = 1.0;
  double width = 1.0;
  double last_update = 0.0;

  Vec2 position() const { return {state[0], state[1]}; }
  Vec2 velocity() const { return {state[2], state[3]}; }
  double speed() const { return std::hypot(state[2], state[3]); }
};

struct TrackerParams {
  double gate_radius = 2.5;
  double max_coast = 1.0;          // seconds without a match before dropping
  double process_pos_noise = 0.05;  // variance growth rates per second
  double process_vel_noise = 1.0;
  double measurement_noise = 0.04;  // position variance
  double initial_pos_var = 0.25;
  double initial_vel_var = 25.0;
};

namespace detail {

inline void kalman_predict(TrackedObject& track, double dt,
                           const TrackerParams& params) {
  Eigen::Matrix4d f = Eigen::Matrix4d::Identity();
  f(0, 2) = dt;
  f(1, 3) = dt;
  Eigen::Matrix4d q = Eigen::Matrix4d::Zero();
  q(0, 0) = q(1, 1) = params.process_pos_noise * dt;
  q(2, 2) = q(3, 3) = params.process_vel_noise * dt;
  track.state = f * track.state;
  track.covariance = f * track.covariance * f.transpose() + q;
}

inline void kalman_update(TrackedObject& track, Vec2 measurement,
                          const TrackerParams& params) {
  Eigen::Matrix<double, 2, 4> h = Eigen::Matrix<double, 2, 4>::Zero();
  h(0, 0) = 1.0;
  h(1, 1) = 1.0;
  const Eigen::Matrix2d r =
      Eigen::Matrix2d::Identity() * params.measurement_noise;
  const Eigen::Vector2d z{measurement.x, measurement.y};
  const Eigen::Vector2d innovation = z - h * track.state;
  const Eigen::Matrix2d s = h * track.covariance * h.transpose() + r;
  const Eigen::Matrix<double, 4, 2> k =
      track.covariance * h.transpose() * s.inverse();
  track.state += k * innovation;
  track.covariance =
      (Eigen::Matrix4d::Identity() - k * h) * track.covariance;
  // keep the covariance symmetric against round-off
  track.covariance =
      0.5 * (track.covariance + track.covariance.transpose()).eval();
}

}  // namespace detail

/// One tracking cycle: constant-velocity predict for every track,
/// nearest-neighbor association inside the gate, update of matched tracks,
/// zero-velocity spawns for unmatched detections and coast-out of tracks
/// unseen for longer than max_coast. Detection class labels overwrite the
/// track class whenever they carry one.
inline std::vector<TrackedObject> track_objects(
    std::vector<TrackedObject> tracks, const std::vector<Detection>& detections,
    double dt, const TrackerParams& params, double now) {
  if (!(dt > 0.0)) {
    throw std::invalid_argument("track_objects: dt must be positive");
  }
  for (TrackedObject& track : tracks) {
    detail::kalman_predict(track, dt, params);
  }

  struct Pair {
    double dist;
    std::size_t track;
    std::size_t detection;
  };
  std::vector<Pair> pairs;
  for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
    for (std::size_t di = 0; di < detections.size(); ++di) {
      const double dist = norm(tracks[ti].position() - detections[di].position);
      if (dist <= params.gate_radius) {
        pairs.push_back({dist, ti, di});
      }
    }
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    if (a.track != b.track) return a.track < b.track;
    return a.detection < b.detection;
  });

  std::vector<std::uint8_t> track_matched(tracks.size(), 0);
  std::vector<std::uint8_t> detection_matched(detections.size(), 0);
  for (const Pair& p : pairs) {
    if (track_matched[p.track] || detection_matched[p.detection]) {
      continue;
    }
    track_matched[p.track] = 1;
    detection_matched[p.detection] = 1;
    TrackedObject& track = tracks[p.track];
    const Detection& det = detections[p.detection];
    detail::kalman_update(track, det.position, params);
    track.length = det.length;
    track.width = det.width;
    track.last_update = now;
    if (det.cls != ObjectClass::kUnknown) {
      track.cls = det.cls;
    }
  }

  std::uint64_t next_id = 0;
  for (const TrackedObject& track : tracks) {
    next_id = std::max(next_id, track.id + 1);
  }
  for (std::size_t di = 0; di < detections.size(); ++di) {
    if (detection_matched[di]) {
      continue;
    }
    const Detection& det = detections[di];
    TrackedObject track;
    track.id = next_id++;
    track.cls = det.cls;
    track.state << det.position.x, det.position.y, 0.0, 0.0;
    Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
    p(0, 0) = p(1, 1) = params.initial_pos_var;
    p(2, 2) = p(3, 3) = params.initial_vel_var;
    track.covariance = p;
    track.length = det.length;
    track.width = det.width;
    track.last_update = now;
    tracks.push_back(track);
  }

  std::erase_if(tracks, [&](const TrackedObject& track) {
    return now - track.last_update > params.max_coast;
  });
  return tracks;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_PERCEPTION_HPP_
