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

#ifndef GRIDPILOT_FUSION_HPP_
#define GRIDPILOT_FUSION_HPP_

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "gridpilot/core.hpp"

namespace gridpilot {

inline constexpr double kObstacleBelief = 0.75;
inline constexpr double kFreeBelief = 0.25;
inline constexpr double kObstacleValue = 1.0;
inline constexpr double kFreeValue = 0.0;

/// Log of the odds ratio p/(1-p). Written as log(p) - log(1-p) so that
/// complementary probabilities cancel bit-exactly when summed.
inline double probability_to_log_odds(double p, double clamp = 10.0) {
  const double l = std::log(p) - std::log(1.0 - p);
  if (!(l > -clamp)) {
    return -clamp;
  }
  if (!(l < clamp)) {
    return clamp;
  }
  return l;
}

inline double log_odds_to_probability(double l) {
  return 1.0 / (1.0 + std::exp(-l));
}

/// Per-cell obstacle odds with a fixed 0.5 prior, stored as log-odds and
/// clamped to +/-10 so evidence can never saturate irrecoverably.
class OddsGrid {
 public:
  static constexpr double kLogOddsClamp = 10.0;

  OddsGrid()
      : OddsGrid(OccupancyGrid::kDefaultRows, OccupancyGrid::kDefaultCols,
                 OccupancyGrid::kDefaultResolution,
                 OccupancyGrid::kDefaultAnchorRow,
                 OccupancyGrid::kDefaultAnchorCol) {}

  OddsGrid(int rows, int cols, double resolution, int anchor_row,
           int anchor_col)
      : shape_(rows, cols, resolution, anchor_row, anchor_col),
        log_odds_(static_cast<std::size_t>(rows) * cols, 0.0) {}

  static OddsGrid like(const OccupancyGrid& grid) {
    return OddsGrid(grid.rows(), grid.cols(), grid.resolution(),
                    grid.anchor_row(), grid.anchor_col());
  }

  int rows() const { return shape_.rows(); }
  int cols() const { return shape_.cols(); }
  const OccupancyGrid& shape() const { return shape_; }

  double log_odds(int row, int col) const {
    return log_odds_[static_cast<std::size_t>(row) * cols() + col];
  }
  void set_log_odds(int row, int col, double l) {
    log_odds_[static_cast<std::size_t>(row) * cols() + col] =
        std::clamp(l, -kLogOddsClamp, kLogOddsClamp);
  }
  double probability(int row, int col) const {
    return log_odds_to_probability(log_odds(row, col));
  }
  void set_probability(int row, int col, double p) {
    set_log_odds(row, col, probability_to_log_odds(p, kLogOddsClamp));
  }

  const std::vector<double>& cells() const { return log_odds_; }
  std::vector<double>& cells() { return log_odds_; }

 private:
  OccupancyGrid shape_;  // dims only; cell payload lives in log_odds_
  std::vector<double> log_odds_;
};

// ---------------------------------------------------------------------------
// Fusion mask
// ---------------------------------------------------------------------------

/// Angular sector of a sensor's field of view in the vehicle frame.
struct SensorFov {
  double min_bearing = -kPi;
  double max_bearing = kPi;
  double max_range = 60.0;
};

/// Cells inside the intersection of the contributing sensors' fields of
/// view. Derived purely from geometry, never from data.
class FusionMask {
 public:
  FusionMask(int rows, int cols, bool value = false)
      : rows_(rows), cols_(cols),
        mask_(static_cast<std::size_t>(rows) * cols, value) {}

  static FusionMask intersection_of(const OccupancyGrid& shape,
                                    std::span<const SensorFov> fovs) {
    FusionMask mask(shape.rows(), shape.cols(), true);
    for (int r = 0; r < shape.rows(); ++r) {
      for (int c = 0; c < shape.cols(); ++c) {
        const Vec2 p = shape.cell_center(r, c);
        const double range = norm(p);
        const double bearing = std::atan2(p.y, p.x);
        bool inside = true;
        for (const SensorFov& fov : fovs) {
          if (range > fov.max_range || bearing < fov.min_bearing ||
              bearing > fov.max_bearing) {
            inside = false;
            break;
          }
        }
        mask.set(r, c, inside);
      }
    }
    return mask;
  }

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool at(int row, int col) const {
    return mask_[static_cast<std::size_t>(row) * cols_ + col] != 0;
  }
  void set(int row, int col, bool v) {
    mask_[static_cast<std::size_t>(row) * cols_ + col] = v ? 1 : 0;
  }

 private:
  int rows_;
  int cols_;
  std::vector<std::uint8_t> mask_;
};

// ---------------------------------------------------------------------------
// Odds-product fusion
// ---------------------------------------------------------------------------

/// Carries the previous cycle's posterior into a new vehicle frame with the
/// same nearest-cell resample align_grid uses; uncovered cells reset to the
/// prior (log-odds 0).
inline OddsGrid align_odds(const OddsGrid& previous,
                           const SpatioTemporalStamp& previous_stamp,
                           const SpatioTemporalStamp& target) {
  OddsGrid out(previous.rows(), previous.cols(),
               previous.shape().resolution(), previous.shape().anchor_row(),
               previous.shape().anchor_col());
  for_each_resampled_cell(
      out.shape(), previous_stamp.pose(), target.pose(),
      [&](int row, int col, std::optional<CellIndex> src) {
        if (src) {
          out.set_log_odds(row, col, previous.log_odds(src->row, src->col));
        }
      });
  return out;
}

/// Multiplies the odds of every masked cell by the odds of each aligned
/// observation (prior odds are 1 by construction). Cells reporting 0.5
/// contribute a unit factor; of several grids from one source only the
/// newest enters the product; cells outside the mask copy `previous`.
inline OddsGrid fuse_odds(const OddsGrid& previous,
                          const std::vector<StampedGrid>& observations,
                          const FusionMask& mask,
                          const SpatioTemporalStamp& target,
                          double staleness_budget = 0.5) {
  // Latest observation per source; on equal stamps the later entry wins.
  std::map<std::string, const StampedGrid*> newest;
  for (const StampedGrid& obs : observations) {
    auto [it, inserted] = newest.try_emplace(obs.source, &obs);
    if (!inserted && obs.stamp.t >= it->second->stamp.t) {
      it->second = &obs;
    }
  }

  std::vector<OccupancyGrid> aligned;
  aligned.reserve(newest.size());
  for (const auto& [source, obs] : newest) {
    aligned.push_back(align_grid(*obs, target, staleness_budget));
  }

  OddsGrid out = previous;
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      if (!mask.at(r, c)) {
        continue;
      }
      double l = previous.log_odds(r, c);
      for (const OccupancyGrid& grid : aligned) {
        const double p = grid.at(r, c);
        if (p == OccupancyGrid::kUnknown) {
          continue;
        }
        l += probability_to_log_odds(p, OddsGrid::kLogOddsClamp);
      }
      out.set_log_odds(r, c, l);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Maximum-likelihood extraction and unknown-cell merging
// ---------------------------------------------------------------------------

/// Ternary map extraction at the conservative 0.75 belief threshold:
/// p >= 0.75 is an obstacle, p <= 0.25 is free, anything else is unknown.
/// The comparison runs in log-odds space so a cell written as exactly 0.75
/// lands on the obstacle side.
inline OccupancyGrid extract_ml_map(const OddsGrid& odds,
                                    double obstacle_belief = kObstacleBelief,
                                    double free_belief = kFreeBelief) {
  const double l_obstacle =
      std::log(obstacle_belief) - std::log(1.0 - obstacle_belief);
  const double l_free = std::log(free_belief) - std::log(1.0 - free_belief);
  OccupancyGrid out(odds.rows(), odds.cols(), odds.shape().resolution(),
                    odds.shape().anchor_row(), odds.shape().anchor_col());
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      const double l = odds.log_odds(r, c);
      if (l >= l_obstacle) {
        out.at(r, c) = kObstacleValue;
      } else if (l <= l_free) {
        out.at(r, c) = kFreeValue;
      }
    }
  }
  return out;
}

/// Fills the unknown cells of the fused map: segmented obstacles first,
/// the historical map last. Everything already decided by live fusion is
/// kept. All three inputs must share the target stamp's frame.
inline OccupancyGrid merge_unknown(const OccupancyGrid& base,
                                   const StampedGrid& segmented,
                                   const OccupancyGrid& historical,
                                   const SpatioTemporalStamp& target) {
  constexpr double kPoseTolerance = 1e-6;
  if (std::abs(segmented.stamp.t - target.t) > kPoseTolerance ||
      std::abs(segmented.stamp.x - target.x) > kPoseTolerance ||
      std::abs(segmented.stamp.y - target.y) > kPoseTolerance ||
      std::abs(normalize_angle(segmented.stamp.theta - target.theta)) >
          kPoseTolerance) {
    throw AlignmentError("merge_unknown: segmented map stamp differs from target");
  }
  if (!base.same_shape(segmented.grid) || !base.same_shape(historical)) {
    throw AlignmentError("merge_unknown: grid shapes differ");
  }
  OccupancyGrid out = base;
  for (int r = 0; r < out.rows(); ++r) {
    for (int c = 0; c < out.cols(); ++c) {
      if (out.at(r, c) != OccupancyGrid::kUnknown) {
        continue;
      }
      const double seg = segmented.grid.at(r, c);
      out.at(r, c) = seg != OccupancyGrid::kUnknown ? seg : historical.at(r, c);
    }
  }
  return out;
}

}  // namespace gridpilot

#endif  // GRIDPILOT_FUSION_HPP_
