#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "wifiloc/rng.hpp"
#include "wifiloc/types.hpp"

namespace wifiloc {

struct Cell {
  int x = 0;
  int y = 0;
  int z = 0;
  auto operator<=>(const Cell&) const = default;
};

/// 3D occupancy grid. Cell (i, j, k) spans
/// [origin + (i, j, k) * resolution, origin + (i + 1, j + 1, k + 1) * resolution).
/// Door cells are never occupied; whether they block radio is a query option.
class FloorPlan {
 public:
  static constexpr double kDefaultResolution = 0.25;

  FloorPlan(int nx, int ny, int nz, double resolution = kDefaultResolution, Pose origin = {});

  /// Grid covering size_m (rounded to whole cells).
  static FloorPlan with_extent(const Vec3& size_m, double resolution = kDefaultResolution,
                               Pose origin = {});

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  int nz() const { return nz_; }
  double resolution() const { return resolution_; }
  const Pose& origin() const { return origin_; }
  Vec3 extent_m() const { return Vec3(nx_, ny_, nz_) * resolution_; }
  std::size_t cell_count() const { return occupancy_.size(); }

  bool contains(const Cell& c) const {
    return c.x >= 0 && c.y >= 0 && c.z >= 0 && c.x < nx_ && c.y < ny_ && c.z < nz_;
  }
  bool contains(const Pose& p) const;

  /// Cell holding p; throws BoundsError when p lies outside the grid.
  Cell cell_of(const Pose& p) const;
  Pose center_of(const Cell& c) const;

  bool occupied(const Cell& c) const { return occupancy_[flat(c)] != 0; }
  bool is_door(const Cell& c) const { return doors_[flat(c)] != 0; }
  /// Obstacle for the radio path under the given door policy.
  bool blocks_rf(const Cell& c, bool doors_block_rf) const {
    return occupied(c) || (doors_block_rf && is_door(c));
  }

  void set_occupied(const Cell& c, bool value);
  /// Clears the cell and registers it as a door.
  void add_door(const Cell& c);

  /// Marks (or clears, for doors) every cell whose center lies inside the
  /// axis-aligned box [lo, hi]. Along an axis where the box is thinner than a
  /// cell and covers no center, the cell containing the box midpoint is used.
  void fill_box(const Vec3& lo, const Vec3& hi, bool occupied);
  void add_door_box(const Vec3& lo, const Vec3& hi);

  /// Cells inside the box by the fill_box rule.
  std::vector<Cell> cells_in_box(const Vec3& lo, const Vec3& hi) const;

  std::size_t free_cell_count() const;
  std::vector<Cell> free_cells() const;
  std::vector<Cell> door_cells() const;

  /// Stable digest of geometry (dims, resolution, origin, occupancy, doors).
  std::uint64_t content_hash() const;

 private:
  std::size_t flat(const Cell& c) const {
    return static_cast<std::size_t>(c.x) +
           static_cast<std::size_t>(nx_) *
               (static_cast<std::size_t>(c.y) + static_cast<std::size_t>(ny_) * c.z);
  }

  int nx_, ny_, nz_;
  double resolution_;
  Pose origin_;
  std::vector<std::uint8_t> occupancy_;
  std::vector<std::uint8_t> doors_;
};

struct LosOptions {
  bool doors_block_rf = false;
};

struct LosResult {
  LinkClass link = LinkClass::Los;
  /// Bresenham cells from the lexicographically smaller endpoint cell to the
  /// larger one, both endpoints included.
  std::vector<Cell> traversed;
};

/// 3D Bresenham walk between the cells of a and b. Symmetric in (a, b).
std::vector<Cell> bresenham_cells(const Cell& a, const Cell& b);

/// NLOS iff any traversed cell other than the two endpoint cells blocks RF.
LosResult line_of_sight(const FloorPlan& plan, const Pose& a, const Pose& b,
                        const LosOptions& opts = {});

/// Number of distinct runs of blocking cells crossed between a and b
/// (endpoint cells excluded). Zero iff line_of_sight is LOS.
int wall_crossings(const FloorPlan& plan, const Pose& a, const Pose& b,
                   const LosOptions& opts = {});

/// True when the straight move a -> b stays in bounds and never enters an
/// occupied cell. Doors are passable.
bool motion_clear(const FloorPlan& plan, const Pose& a, const Pose& b);

struct WalkConfig {
  double step_size_m = 2.0;
  double goal_bias = 0.2;
  std::size_t max_steps = 10000;  // cap on step attempts, rejected ones included
  Vec3 motion_noise_std = Vec3::Zero();
  bool planar = false;  // keep z at the start height
};

class WalkTimeout : public Error {
 public:
  WalkTimeout(const std::string& what, Trajectory partial)
      : Error(what), partial_(std::move(partial)) {}
  const Trajectory& partial() const { return partial_; }

 private:
  Trajectory partial_;
};

/// Goal-biased random walk with rejection on collision. Each accepted step
/// issues a command of length <= step_size (pointing either toward the goal or
/// in a uniformly random direction) and the device lands at
/// previous + command + noise, the noise truncated to 3 sigma per axis. The walk
/// ends once the device is within step_size of the goal.
Trajectory random_walk(const FloorPlan& plan, const Pose& start, const Pose& goal,
                       const WalkConfig& cfg, Rng& rng);

/// Uniform sampling over free space: a uniformly chosen free cell, then a
/// uniform point inside it. In planar mode only the layer containing plane_z is
/// used and every sample has z = plane_z.
class FreeSpaceSampler {
 public:
  FreeSpaceSampler(const FloorPlan& plan, bool planar = false, double plane_z = 0.0);

  std::size_t size() const { return cells_.size(); }
  Pose sample(Rng& rng) const;

 private:
  const FloorPlan* plan_;
  bool planar_;
  double plane_z_;
  std::vector<Cell> cells_;
};

Pose sample_free_pose(const FloorPlan& plan, Rng& rng, bool planar = false, double plane_z = 0.0);

// Floor-plan document (JSON, `format: 1`).
FloorPlan parse_floor_plan(const std::string& text);
FloorPlan load_floor_plan(const std::string& path);

/// Parameters for procedurally generated office floors: a central corridor
/// with rooms on both sides, one door per room.
struct OfficeLayout {
  double length_m = 52.0;
  double width_m = 9.5;
  double height_m = 3.0;
  double corridor_width_m = 2.0;
  double room_length_min_m = 4.0;
  double room_length_max_m = 8.0;
  double door_width_m = 1.0;
  double wall_thickness_m = 0.25;
};

struct PlanGeometry {
  std::vector<std::pair<Vec3, Vec3>> walls;
  std::vector<std::pair<Vec3, Vec3>> doors;
};

/// Random office geometry. Wall and door boxes are returned so the plan can be
/// written back out as a document.
PlanGeometry generate_office_geometry(const OfficeLayout& layout, Rng& rng);
FloorPlan rasterize(const Vec3& size_m, double resolution, const PlanGeometry& geometry);

void write_trajectory_csv(const Trajectory& t, const std::string& path);

}  // namespace wifiloc
