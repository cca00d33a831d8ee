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

#ifndef GRIDPILOT_PLANNER_HPP_
#define GRIDPILOT_PLANNER_HPP_

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

struct NoReference : Error {
  using Error::Error;
};
struct InvalidStart : Error {
  using Error::Error;
};
struct NoPath : Error {
  using Error::Error;
};

struct PlannerConfig {
  int heading_bins = 72;          // 5 degree discretization
  double kappa_max = 0.2;         // 1/m, ~5 m minimum turn radius
  double alpha = 0.2;             // reference-distance weight
  double beta = 0.5;              // obstacle-proximity weight
  int proximity_range = 5;        // hops of proximity penalty
  double obstacle_threshold = 0.75;
  double vehicle_length = 4.5;
  double vehicle_width = 1.8;
  double front_overhang = 0.9;    // front axle to front bumper
  double margin = 0.3;            // collision inflation
  double window = 10.0;           // piecewise freeze window, meters
  int heuristic_window = 32;      // half width of the kinematic table, cells
  double budget_ms = 0.0;         // wall-clock budget; 0 disables
  std::uint64_t max_expansions = 0;  // deterministic budget; 0 disables
};

// ---------------------------------------------------------------------------
// Cost field
// ---------------------------------------------------------------------------

/// Per-cell traversal weight >= 1; obstacle cells are infinite.
class CostField {
 public:
  CostField(int rows, int cols, double value = 1.0)
      : rows_(rows), cols_(cols),
        weights_(static_cast<std::size_t>(rows) * cols, value) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double at(int row, int col) const {
    return weights_[static_cast<std::size_t>(row) * cols_ + col];
  }
  void set(int row, int col, double w) {
    weights_[static_cast<std::size_t>(row) * cols_ + col] = w;
  }

 private:
  int rows_;
  int cols_;
  std::vector<double> weights_;
};

namespace detail {

/// Multi-source 4-connected BFS hop distances; unreached cells keep `unset`.
inline std::vector<int> bfs_hops(int rows, int cols,
                                 const std::vector<std::uint8_t>& blocked,
                                 const std::vector<CellIndex>& sources,
                                 int unset) {
  std::vector<int> hops(static_cast<std::size_t>(rows) * cols, unset);
  std::deque<std::int32_t> queue;
  for (const CellIndex& cell : sources) {
    const std::size_t idx = static_cast<std::size_t>(cell.row) * cols + cell.col;
    if (hops[idx] != 0) {
      hops[idx] = 0;
      queue.push_back(static_cast<std::int32_t>(idx));
    }
  }
  constexpr int kDr[4] = {-1, 1, 0, 0};
  constexpr int kDc[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const std::int32_t idx = queue.front();
    queue.pop_front();
    const int r = idx / cols;
    const int c = idx % cols;
    for (int k = 0; k < 4; ++k) {
      const int nr = r + kDr[k];
      const int nc = c + kDc[k];
      if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
        continue;
      }
      const std::size_t n = static_cast<std::size_t>(nr) * cols + nc;
      if (hops[n] != unset || blocked[n]) {
        continue;
      }
      hops[n] = hops[idx] + 1;
      queue.push_back(static_cast<std::int32_t>(n));
    }
  }
  return hops;
}

}  // namespace detail

/// Unified weighting: hop distance from the reference path (and optional
/// lane cells) scaled by alpha, plus an obstacle-proximity penalty of
/// (proximity_range - hops) * beta near obstacles. Obstacle cells are
/// impassable.
inline CostField build_cost_field(const OccupancyGrid& map,
                                  const std::vector<CellIndex>& reference,
                                  const std::vector<CellIndex>& lanes,
                                  const PlannerConfig& cfg = {}) {
  const int rows = map.rows();
  const int cols = map.cols();
  std::vector<std::uint8_t> blocked(static_cast<std::size_t>(rows) * cols, 0);
  std::vector<CellIndex> obstacle_cells;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      if (map.at(r, c) >= cfg.obstacle_threshold) {
        blocked[static_cast<std::size_t>(r) * cols + c] = 1;
        obstacle_cells.push_back({r, c});
      }
    }
  }

  std::vector<CellIndex> sources;
  for (const CellIndex& cell : reference) {
    if (map.in_bounds(cell) && !blocked[static_cast<std::size_t>(cell.row) * cols + cell.col]) {
      sources.push_back(cell);
    }
  }
  for (const CellIndex& cell : lanes) {
    if (map.in_bounds(cell) && !blocked[static_cast<std::size_t>(cell.row) * cols + cell.col]) {
      sources.push_back(cell);
    }
  }
  if (sources.empty()) {
    throw NoReference("build_cost_field: no reference cells inside the grid");
  }

  const int far = rows + cols;
  const std::vector<int> ref_hops =
      detail::bfs_hops(rows, cols, blocked, sources, far);

  const std::vector<std::uint8_t> open(blocked.size(), 0);
  std::vector<int> prox_hops;
  if (!obstacle_cells.empty()) {
    prox_hops = detail::bfs_hops(rows, cols, open, obstacle_cells, far);
  }

  CostField field(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) {
      const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
      if (blocked[idx]) {
        field.set(r, c, kInfinity);
        continue;
      }
      double w = 1.0 + cfg.alpha * ref_hops[idx];
      if (!prox_hops.empty() && prox_hops[idx] < cfg.proximity_range) {
        w += cfg.beta * (cfg.proximity_range - prox_hops[idx]);
      }
      field.set(r, c, w);
    }
  }
  return field;
}

/// Cells of the grid crossed by a polyline given in the grid's frame.
inline std::vector<CellIndex> rasterize_polyline(const OccupancyGrid& grid,
                                                 const std::vector<Vec2>& pts) {
  std::vector<CellIndex> cells;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i) {
    const auto segment = grid_ray_cells(grid, pts[i], pts[i + 1]);
    cells.insert(cells.end(), segment.begin(), segment.end());
  }
  if (pts.size() == 1) {
    if (const auto cell = grid.cell_at(pts[0])) {
      cells.push_back(*cell);
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

struct TrajectorySample {
  Pose2D pose;
  double s = 0.0;        // arc length along the emitted poses
  double v_target = 0.0;
  double kappa = 0.0;    // commanded curvature of the incoming arc
};

struct Trajectory {
  std::vector<TrajectorySample> samples;
  bool partial = false;
  double cost = 0.0;

  bool empty() const { return samples.empty(); }
  double length() const { return samples.empty() ? 0.0 : samples.back().s; }
};

/// Assigns target speeds: the per-sample limit capped by the lateral
/// acceleration bound sqrt(a_lat/|kappa|), then forward/backward passes that
/// bound |dv^2/ds| by 2*a_lon. The profile ends at zero speed; v0 seeds the
/// first sample when given.
inline Trajectory speed_profile(Trajectory traj,
                                const std::vector<double>& limits,
                                double a_lat_max, double a_lon_max,
                                std::optional<double> v0 = std::nullopt) {
  const std::size_t n = traj.samples.size();
  if (n == 0) {
    return traj;
  }
  if (!limits.empty() && limits.size() != n) {
    throw std::invalid_argument("speed_profile: limits size mismatch");
  }
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double limit = limits.empty() ? kInfinity : limits[i];
    const double kappa = std::abs(traj.samples[i].kappa);
    const double lat_cap =
        kappa > 1e-9 ? std::sqrt(a_lat_max / kappa) : kInfinity;
    v[i] = std::min(limit, lat_cap);
  }
  if (v0) {
    v[0] = std::min(v[0], *v0);
  }
  v[n - 1] = 0.0;
  for (std::size_t i = 1; i < n; ++i) {
    const double ds = traj.samples[i].s - traj.samples[i - 1].s;
    v[i] = std::min(v[i], std::sqrt(v[i - 1] * v[i - 1] + 2.0 * a_lon_max * ds));
  }
  for (std::size_t i = n - 1; i > 0; --i) {
    const double ds = traj.samples[i].s - traj.samples[i - 1].s;
    v[i - 1] =
        std::min(v[i - 1], std::sqrt(v[i] * v[i] + 2.0 * a_lon_max * ds));
  }
  for (std::size_t i = 0; i < n; ++i) {
    traj.samples[i].v_target = v[i];
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Planner
// ---------------------------------------------------------------------------

/// One lattice transition: a constant-curvature arc of one cell-diagonal
/// length whose endpoint snaps back onto the (cell, heading-bin) lattice.
struct MotionPrimitive {
  int d_row = 0;
  int d_col = 0;
  int end_bin = 0;     // absolute heading bin after the arc
  double kappa = 0.0;  // commanded curvature
  double arc_length = 0.0;
  double chord = 0.0;  // center-to-center distance of the snapped move
};

struct PlanResult {
  Trajectory trajectory;
  bool partial = false;
  double cost = 0.0;
  std::uint64_t expansions = 0;
  double wall_ms = 0.0;
};

class Planner {
 public:
  explicit Planner(PlannerConfig cfg = {}, double resolution = 0.2)
      : cfg_(cfg), res_(resolution) {
    if (cfg_.heading_bins < 4) {
      throw std::invalid_argument("Planner: need at least 4 heading bins");
    }
    build_primitives();
    build_footprints();
  }

  const PlannerConfig& config() const { return cfg_; }

  int bin_of(double theta) const {
    const int h = cfg_.heading_bins;
    const double step = 2.0 * kPi / h;
    const int raw = static_cast<int>(std::lround(normalize_angle(theta) / step));
    return ((raw % h) + h) % h;
  }

  double bin_angle(int bin) const {
    return normalize_angle(bin * (2.0 * kPi / cfg_.heading_bins));
  }

  const std::vector<MotionPrimitive>& primitives_for_bin(int bin) const {
    return primitives_[bin];
  }

  /// Footprint mask check at a lattice state; err on the side of collision.
  bool state_collides(const std::vector<std::uint8_t>& obstacle, int rows,
                      int cols, int row, int col, int bin) const {
    for (const auto& [dr, dc] : footprints_[bin]) {
      const int r = row + dr;
      const int c = col + dc;
      if (r < 0 || r >= rows || c < 0 || c >= cols) {
        continue;  // outside the decision region counts as unknown, not wall
      }
      if (obstacle[static_cast<std::size_t>(r) * cols + c]) {
        return true;
      }
    }
    return false;
  }

  /// Mask-based vehicle-footprint collision test at an arbitrary pose.
  bool collision_check(const OccupancyGrid& map, const Pose2D& pose) const {
    const auto cell = map.cell_at({pose.x, pose.y});
    if (!cell) {
      return false;
    }
    const std::vector<std::uint8_t> obstacle = obstacle_bitmap(map);
    return state_collides(obstacle, map.rows(), map.cols(), cell->row,
                          cell->col, bin_of(pose.theta));
  }

  std::vector<std::uint8_t> obstacle_bitmap(const OccupancyGrid& map) const {
    std::vector<std::uint8_t> obstacle(map.cells().size(), 0);
    for (std::size_t i = 0; i < map.cells().size(); ++i) {
      obstacle[i] = map.cells()[i] >= cfg_.obstacle_threshold ? 1 : 0;
    }
    return obstacle;
  }

  /// Arc length times the mean cost-field weight over the swept cells;
  /// infinite when the move crosses an obstacle cell.
  double transition_cost(const CostField& field, int row, int col,
                         const MotionPrimitive& prim) const {
    const double w_from = field.at(row, col);
    const double w_to = field.at(row + prim.d_row, col + prim.d_col);
    const double mean = 0.5 * (w_from + w_to);
    return prim.arc_length * mean;
  }

  PlanResult plan(const OccupancyGrid& map, const CostField& field,
                  const Pose2D& start, double start_v, const Pose2D& goal) {
    (void)start_v;
    const auto t0 = std::chrono::steady_clock::now();
    const int rows = map.rows();
    const int cols = map.cols();
    const int h = cfg_.heading_bins;
    if (field.rows() != rows || field.cols() != cols) {
      throw std::invalid_argument("plan: cost field does not match the map");
    }

    const std::vector<std::uint8_t> obstacle = obstacle_bitmap(map);

    const auto start_cell = map.cell_at({start.x, start.y});
    if (!start_cell) {
      throw InvalidStart("plan: start pose outside the grid");
    }
    const int start_bin = bin_of(start.theta);
    if (state_collides(obstacle, rows, cols, start_cell->row, start_cell->col,
                       start_bin)) {
      throw InvalidStart("plan: start pose is in collision");
    }

    const auto goal_cell = map.cell_at({goal.x, goal.y});
    if (!goal_cell) {
      throw NoPath("plan: goal pose outside the grid");
    }
    const int goal_bin = bin_of(goal.theta);

    // Obstacle-aware 8-connected hop distances from the goal region. Every
    // primitive moves at most one Chebyshev hop and costs at least one arc
    // length, so hops * arc_length is admissible; unreachable cells prove
    // NoPath outright.
    const std::vector<int> goal_hops =
        goal_region_hops(obstacle, rows, cols, *goal_cell);
    const std::size_t start_idx =
        static_cast<std::size_t>(start_cell->row) * cols + start_cell->col;
    if (goal_hops[start_idx] < 0) {
      throw NoPath("plan: goal region unreachable from the start");
    }

    const HeuristicTable& table = heuristic_table(goal_bin);

    auto heuristic = [&](int row, int col, int bin) {
      const std::size_t cell_idx = static_cast<std::size_t>(row) * cols + col;
      const double bfs =
          goal_hops[cell_idx] < 0 ? kInfinity : goal_hops[cell_idx] * arc_len_;
      const double kin =
          table.lookup(row - goal_cell->row, col - goal_cell->col, bin);
      return std::max(bfs, kin);
    };

    // Workspace keyed to the lattice size, reset by epoch.
    const std::size_t n_states =
        static_cast<std::size_t>(rows) * cols * static_cast<std::size_t>(h);
    if (g_.size() != n_states) {
      g_.assign(n_states, 0.0);
      parent_.assign(n_states, 0);
      parent_prim_.assign(n_states, 0);
      epoch_.assign(n_states, 0);
      epoch_counter_ = 0;
    }
    ++epoch_counter_;

    struct HeapEntry {
      double f;
      double g;
      std::uint32_t idx;
    };
    auto later = [h](const HeapEntry& a, const HeapEntry& b) {
      if (a.f != b.f) {
        return a.f > b.f;
      }
      const int bin_a = static_cast<int>(a.idx) % h;
      const int bin_b = static_cast<int>(b.idx) % h;
      if (bin_a != bin_b) {
        return bin_a > bin_b;
      }
      return a.idx / h > b.idx / h;
    };
    std::priority_queue<HeapEntry, std::vector<HeapEntry>, decltype(later)>
        open(later);

    auto state_index = [cols, h](int row, int col, int bin) {
      return (static_cast<std::uint32_t>(row) * cols + col) * h + bin;
    };
    auto set_g = [&](std::uint32_t idx, double g) {
      g_[idx] = g;
      epoch_[idx] = epoch_counter_;
    };
    auto get_g = [&](std::uint32_t idx) -> double {
      return epoch_[idx] == epoch_counter_ ? g_[idx] : kInfinity;
    };

    const std::uint32_t start_state =
        state_index(start_cell->row, start_cell->col, start_bin);
    set_g(start_state, 0.0);
    open.push({heuristic(start_cell->row, start_cell->col, start_bin), 0.0,
               start_state});

    auto is_goal = [&](int row, int col, int bin) {
      const int db = ((bin - goal_bin) % h + h) % h;
      const int circ = std::min(db, h - db);
      return std::abs(row - goal_cell->row) <= 1 &&
             std::abs(col - goal_cell->col) <= 1 && circ <= 1;
    };

    PlanResult result;
    std::uint32_t best_partial = start_state;
    double best_partial_h =
        heuristic(start_cell->row, start_cell->col, start_bin);
    double best_partial_g = 0.0;
    std::uint64_t expansions = 0;
    bool budget_hit = false;

    while (!open.empty()) {
      const HeapEntry top = open.top();
      open.pop();
      const std::uint32_t idx = top.idx;
      const double g = get_g(idx);
      if (top.g != g) {
        continue;  // stale entry
      }
      const int bin = static_cast<int>(idx % h);
      const int cell = static_cast<int>(idx / h);
      const int row = cell / cols;
      const int col = cell % cols;

      if (is_goal(row, col, bin)) {
        result.trajectory = reconstruct(map, idx, start_state);
        result.cost = g;
        result.partial = false;
        result.expansions = expansions;
        result.wall_ms = elapsed_ms(t0);
        result.trajectory.cost = g;
        return result;
      }

      ++expansions;
      // Deepest state minimizing the heuristic, for budget-expiry returns.
      const double state_h = heuristic(row, col, bin);
      if (state_h < best_partial_h ||
          (state_h == best_partial_h && g > best_partial_g)) {
        best_partial = idx;
        best_partial_h = state_h;
        best_partial_g = g;
      }

      if (cfg_.max_expansions != 0 && expansions >= cfg_.max_expansions) {
        budget_hit = true;
        break;
      }
      if (cfg_.budget_ms > 0.0 && (expansions & 1023) == 0 &&
          elapsed_ms(t0) > cfg_.budget_ms) {
        budget_hit = true;
        break;
      }

      for (std::size_t k = 0; k < primitives_[bin].size(); ++k) {
        const MotionPrimitive& prim = primitives_[bin][k];
        const int nr = row + prim.d_row;
        const int nc = col + prim.d_col;
        if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
          continue;
        }
        const double step = transition_cost(field, row, col, prim);
        if (!std::isfinite(step)) {
          continue;
        }
        if (state_collides(obstacle, rows, cols, nr, nc, prim.end_bin)) {
          continue;
        }
        const std::uint32_t next = state_index(nr, nc, prim.end_bin);
        const double ng = g + step;
        if (ng < get_g(next)) {
          set_g(next, ng);
          parent_[next] = idx;
          parent_prim_[next] = static_cast<std::uint8_t>(k);
          open.push({ng + heuristic(nr, nc, prim.end_bin), ng, next});
        }
      }
    }

    if (!budget_hit) {
      throw NoPath("plan: goal unreachable after full search");
    }
    result.trajectory = reconstruct(map, best_partial, start_state);
    result.trajectory.partial = true;
    result.partial = true;
    result.cost = best_partial_g;
    result.trajectory.cost = best_partial_g;
    result.expansions = expansions;
    result.wall_ms = elapsed_ms(t0);
    return result;
  }

  /// True when every `previous` sample inside the look-ahead window ahead of
  /// the ego is still collision-free on the given (ego-frame) map.
  bool window_clear(const Trajectory& previous, const Pose2D& ego,
                    const OccupancyGrid& map) const {
    if (previous.empty()) {
      return true;
    }
    const std::vector<std::uint8_t> obstacle = obstacle_bitmap(map);
    const std::size_t i0 = nearest_sample(previous, ego);
    const double s_end = previous.samples[i0].s + cfg_.window;
    for (std::size_t i = i0; i < previous.samples.size(); ++i) {
      const TrajectorySample& sample = previous.samples[i];
      if (sample.s > s_end) {
        break;
      }
      const Pose2D rel = relative(ego, sample.pose);
      const auto cell = map.cell_at({rel.x, rel.y});
      if (!cell) {
        continue;
      }
      if (state_collides(obstacle, map.rows(), map.cols(), cell->row,
                         cell->col, bin_of(rel.theta))) {
        return false;
      }
    }
    return true;
  }

  /// Keeps `previous` inside the look-ahead window and hangs `fresh` off the
  /// junction beyond it. Kept samples are copied verbatim. When the window
  /// is no longer collision-free the fresh trajectory replaces everything.
  Trajectory piecewise_concat(const Trajectory& previous,
                              const Trajectory& fresh, const Pose2D& ego,
                              const OccupancyGrid& map) const {
    if (previous.empty()) {
      return fresh;
    }
    if (!window_clear(previous, ego, map)) {
      return fresh;
    }
    const std::size_t i0 = nearest_sample(previous, ego);
    const double s_end = previous.samples[i0].s + cfg_.window;
    Trajectory out;
    out.cost = fresh.cost;
    out.partial = fresh.partial;
    for (std::size_t i = i0; i < previous.samples.size(); ++i) {
      if (previous.samples[i].s > s_end) {
        break;
      }
      out.samples.push_back(previous.samples[i]);
    }
    if (out.samples.empty()) {
      return fresh;
    }
    if (fresh.empty()) {
      return out;
    }
    const TrajectorySample& junction = out.samples.back();
    const std::size_t jf = nearest_sample(fresh, junction.pose);
    const TrajectorySample& fresh_junction = fresh.samples[jf];
    const double gap =
        norm(Vec2{fresh_junction.pose.x, fresh_junction.pose.y} -
             Vec2{junction.pose.x, junction.pose.y});
    const double heading_gap = std::abs(
        normalize_angle(fresh_junction.pose.theta - junction.pose.theta));
    if (gap > 2.0 * res_ ||
        heading_gap > 2.0 * (2.0 * kPi / cfg_.heading_bins)) {
      throw std::invalid_argument(
          "piecewise_concat: fresh trajectory does not start at the window end");
    }
    for (std::size_t i = jf + 1; i < fresh.samples.size(); ++i) {
      TrajectorySample sample = fresh.samples[i];
      sample.s = junction.s + (fresh.samples[i].s - fresh.samples[jf].s);
      out.samples.push_back(sample);
    }
    return out;
  }

  /// Arc length from the ego's nearest sample to the first sample whose
  /// footprint collides; infinity when the whole trajectory is clear.
  double trajectory_clearance(const Trajectory& traj, const Pose2D& ego,
                              const OccupancyGrid& map) const {
    if (traj.empty()) {
      return kInfinity;
    }
    const std::vector<std::uint8_t> obstacle = obstacle_bitmap(map);
    const std::size_t i0 = nearest_sample(traj, ego);
    for (std::size_t i = i0; i < traj.samples.size(); ++i) {
      const Pose2D rel = relative(ego, traj.samples[i].pose);
      const auto cell = map.cell_at({rel.x, rel.y});
      if (!cell) {
        continue;
      }
      if (state_collides(obstacle, map.rows(), map.cols(), cell->row,
                         cell->col, bin_of(rel.theta))) {
        return traj.samples[i].s - traj.samples[i0].s;
      }
    }
    return kInfinity;
  }

  static std::size_t nearest_sample(const Trajectory& traj, const Pose2D& pose) {
    std::size_t best = 0;
    double best_dist = kInfinity;
    for (std::size_t i = 0; i < traj.samples.size(); ++i) {
      const double d = norm(Vec2{traj.samples[i].pose.x, traj.samples[i].pose.y} -
                            Vec2{pose.x, pose.y});
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    return best;
  }

 private:
  // Kinematically reachable lattice costs around the goal, per goal bin:
  // exact lattice distances on an empty window, min-combined with a lower
  // bound on any path that leaves the window so the value stays admissible.
  struct HeuristicTable {
    int window = 0;
    int bins = 0;
    double arc_length = 0.0;
    std::vector<float> cost;  // ((dr+W)*(2W+1)+(dc+W))*H + bin

    double lookup(int dr, int dc, int bin) const {
      const int cheb = std::max(std::abs(dr), std::abs(dc));
      if (cheb > window) {
        return 0.0;
      }
      const double exit_lb = (2 * window - cheb - 1) * arc_length;
      const std::size_t idx =
          (static_cast<std::size_t>(dr + window) * (2 * window + 1) +
           (dc + window)) *
              bins +
          bin;
      const double confined = cost[idx];
      return std::min(confined, std::max(exit_lb, 0.0));
    }
  };

  static double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now() - t0)
        .count();
  }

  void build_primitives() {
    const int h = cfg_.heading_bins;
    arc_len_ = std::sqrt(2.0) * res_;
    primitives_.assign(h, {});
    const double curvatures[5] = {0.0, cfg_.kappa_max / 2.0,
                                  -cfg_.kappa_max / 2.0, cfg_.kappa_max,
                                  -cfg_.kappa_max};
    for (int b = 0; b < h; ++b) {
      const double theta = bin_angle(b);
      for (double kappa : curvatures) {
        double x, y, theta_end;
        if (kappa == 0.0) {
          x = arc_len_ * std::cos(theta);
          y = arc_len_ * std::sin(theta);
          theta_end = theta;
        } else {
          theta_end = theta + kappa * arc_len_;
          x = (std::sin(theta_end) - std::sin(theta)) / kappa;
          y = (std::cos(theta) - std::cos(theta_end)) / kappa;
        }
        MotionPrimitive prim;
        prim.d_row = -static_cast<int>(std::lround(x / res_));
        prim.d_col = -static_cast<int>(std::lround(y / res_));
        prim.end_bin = bin_of(theta_end);
        prim.kappa = kappa;
        prim.arc_length = arc_len_;
        prim.chord = std::hypot(prim.d_row * res_, prim.d_col * res_);
        if (prim.d_row == 0 && prim.d_col == 0) {
          continue;  // degenerate snap; cannot happen for sane configs
        }
        const bool duplicate = std::any_of(
            primitives_[b].begin(), primitives_[b].end(),
            [&](const MotionPrimitive& p) {
              return p.d_row == prim.d_row && p.d_col == prim.d_col &&
                     p.end_bin == prim.end_bin;
            });
        if (!duplicate) {
          primitives_[b].push_back(prim);
        }
      }
    }
  }

  void build_footprints() {
    const int h = cfg_.heading_bins;
    footprints_.assign(h, {});
    const double x_min = -(cfg_.vehicle_length - cfg_.front_overhang) - cfg_.margin;
    const double x_max = cfg_.front_overhang + cfg_.margin;
    const double y_half = cfg_.vehicle_width / 2.0 + cfg_.margin;
    const double reach = std::max({std::abs(x_min), std::abs(x_max), y_half});
    const int radius = static_cast<int>(std::ceil(reach / res_)) + 1;
    for (int b = 0; b < h; ++b) {
      const double theta = bin_angle(b);
      const double c = std::cos(theta);
      const double s = std::sin(theta);
      std::set<std::pair<int, int>> cells;
      for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
          // cell offset in the grid frame -> vehicle frame of the pose
          const double gx = -dr * res_;
          const double gy = -dc * res_;
          const double u = c * gx + s * gy;
          const double v = -s * gx + c * gy;
          if (u >= x_min && u <= x_max && v >= -y_half && v <= y_half) {
            cells.insert({dr, dc});
          }
        }
      }
      // one 8-connected dilation: covers in-cell pose offsets and keeps the
      // mask erring toward collision relative to the exact polygon
      std::set<std::pair<int, int>> dilated = cells;
      for (const auto& [dr, dc] : cells) {
        for (int er = -1; er <= 1; ++er) {
          for (int ec = -1; ec <= 1; ++ec) {
            dilated.insert({dr + er, dc + ec});
          }
        }
      }
      footprints_[b].assign(dilated.begin(), dilated.end());
    }
  }

  std::vector<int> goal_region_hops(const std::vector<std::uint8_t>& obstacle,
                                    int rows, int cols,
                                    CellIndex goal_cell) const {
    std::vector<int> hops(static_cast<std::size_t>(rows) * cols, -1);
    std::deque<std::int32_t> queue;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        const int r = goal_cell.row + dr;
        const int c = goal_cell.col + dc;
        if (r < 0 || r >= rows || c < 0 || c >= cols) {
          continue;
        }
        const std::size_t idx = static_cast<std::size_t>(r) * cols + c;
        if (!obstacle[idx]) {
          hops[idx] = 0;
          queue.push_back(static_cast<std::int32_t>(idx));
        }
      }
    }
    while (!queue.empty()) {
      const std::int32_t idx = queue.front();
      queue.pop_front();
      const int r = idx / cols;
      const int c = idx % cols;
      for (int dr = -1; dr <= 1; ++dr) {
        for (int dc = -1; dc <= 1; ++dc) {
          if (dr == 0 && dc == 0) {
            continue;
          }
          const int nr = r + dr;
          const int nc = c + dc;
          if (nr < 0 || nr >= rows || nc < 0 || nc >= cols) {
            continue;
          }
          const std::size_t n = static_cast<std::size_t>(nr) * cols + nc;
          if (hops[n] >= 0 || obstacle[n]) {
            continue;
          }
          hops[n] = hops[idx] + 1;
          queue.push_back(static_cast<std::int32_t>(n));
        }
      }
    }
    return hops;
  }

  const HeuristicTable& heuristic_table(int goal_bin) {
    const auto it = tables_.find(goal_bin);
    if (it != tables_.end()) {
      return it->second;
    }
    // Bounded cache; goal headings are stable across consecutive cycles.
    if (tables_.size() >= 8) {
      tables_.clear();
    }
    HeuristicTable table;
    table.window = cfg_.heuristic_window;
    table.bins = cfg_.heading_bins;
    table.arc_length = arc_len_;
    const int w = table.window;
    const int side = 2 * w + 1;
    const int h = cfg_.heading_bins;
    const std::size_t n = static_cast<std::size_t>(side) * side * h;
    table.cost.assign(n, std::numeric_limits<float>::infinity());

    // Reverse adjacency: which (bin, primitive) moves end in a given bin.
    std::vector<std::vector<std::array<int, 3>>> reverse(h);
    for (int b = 0; b < h; ++b) {
      for (const MotionPrimitive& prim : primitives_[b]) {
        reverse[prim.end_bin].push_back({prim.d_row, prim.d_col, b});
      }
    }

    auto index = [&](int dr, int dc, int bin) {
      return (static_cast<std::size_t>(dr + w) * side + (dc + w)) * h + bin;
    };

    // Uniform arc cost: plain BFS layers give exact lattice distances.
    std::deque<std::array<int, 3>> queue;
    for (int dr = -1; dr <= 1; ++dr) {
      for (int dc = -1; dc <= 1; ++dc) {
        for (int db = -1; db <= 1; ++db) {
          const int bin = ((goal_bin + db) % h + h) % h;
          const std::size_t idx = index(dr, dc, bin);
          if (table.cost[idx] != 0.0f) {
            table.cost[idx] = 0.0f;
            queue.push_back({dr, dc, bin});
          }
        }
      }
    }
    while (!queue.empty()) {
      const auto [dr, dc, bin] = queue.front();
      queue.pop_front();
      const float base = table.cost[index(dr, dc, bin)];
      for (const auto& [pr, pc, pb] : reverse[bin]) {
        const int sr = dr - pr;
        const int sc = dc - pc;
        if (std::abs(sr) > w || std::abs(sc) > w) {
          continue;
        }
        const std::size_t idx = index(sr, sc, pb);
        if (std::isinf(table.cost[idx])) {
          table.cost[idx] = base + static_cast<float>(arc_len_);
          queue.push_back({sr, sc, pb});
        }
      }
    }
    return tables_.emplace(goal_bin, std::move(table)).first->second;
  }

  Trajectory reconstruct(const OccupancyGrid& map, std::uint32_t state,
                         std::uint32_t start_state) const {
    const int h = cfg_.heading_bins;
    const int cols = map.cols();
    std::vector<std::pair<std::uint32_t, std::uint8_t>> chain;
    std::uint32_t cursor = state;
    while (cursor != start_state) {
      chain.push_back({cursor, parent_prim_[cursor]});
      cursor = parent_[cursor];
    }
    chain.push_back({start_state, 0});
    std::reverse(chain.begin(), chain.end());

    Trajectory traj;
    traj.samples.reserve(chain.size());
    double s = 0.0;
    Pose2D previous_pose;
    for (std::size_t i = 0; i < chain.size(); ++i) {
      const std::uint32_t idx = chain[i].first;
      const int bin = static_cast<int>(idx % h);
      const int cell = static_cast<int>(idx / h);
      const Vec2 center = map.cell_center(cell / cols, cell % cols);
      TrajectorySample sample;
      sample.pose = Pose2D(center.x, center.y, bin_angle(bin));
      if (i == 0) {
        sample.s = 0.0;
        sample.kappa = 0.0;
      } else {
        const int parent_bin = static_cast<int>(chain[i - 1].first % h);
        const MotionPrimitive& prim =
            primitives_[parent_bin][chain[i].second];
        s += std::hypot(sample.pose.x - previous_pose.x,
                        sample.pose.y - previous_pose.y);
        sample.s = s;
        sample.kappa = prim.kappa;
      }
      previous_pose = sample.pose;
      traj.samples.push_back(sample);
    }
    return traj;
  }

  PlannerConfig cfg_;
  double res_;
  double arc_len_ = 0.0;
  std::vector<std::vector<MotionPrimitive>> primitives_;
  std::vector<std::vector<std::pair<int, int>>> footprints_;
  std::map<int, HeuristicTable> tables_;

  // A* workspace, reused across calls
  std::vector<double> g_;
  std::vector<std::uint32_t> parent_;
  std::vector<std::uint8_t> parent_prim_;
  std::vector<std::uint32_t> epoch_;
  std::uint32_t epoch_counter_ = 0;
};

}  // namespace gridpilot

#endif  // GRIDPILOT_PLANNER_HPP_
