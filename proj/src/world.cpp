#include "wifiloc/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>

#include "text_util.hpp"

namespace wifiloc {

FloorPlan::FloorPlan(int nx, int ny, int nz, double resolution, Pose origin)
    : nx_(nx), ny_(ny), nz_(nz), resolution_(resolution), origin_(origin) {
  if (!(resolution > 0.0) || !std::isfinite(resolution))
    throw ConfigError("floor plan resolution must be > 0");
  if (nx <= 0 || ny <= 0 || nz <= 0) throw ConfigError("floor plan dimensions must be positive");
  if (!origin.finite()) throw ConfigError("floor plan origin must be finite");
  const auto n = static_cast<std::size_t>(nx) * ny * nz;
  occupancy_.assign(n, 0);
  doors_.assign(n, 0);
}

FloorPlan FloorPlan::with_extent(const Vec3& size_m, double resolution, Pose origin) {
  if (!(resolution > 0.0)) throw ConfigError("floor plan resolution must be > 0");
  auto cells = [&](double m) {
    // Tolerate float noise in extents that are whole multiples of the resolution.
    return std::max(1, static_cast<int>(std::ceil(m / resolution - 1e-9)));
  };
  return FloorPlan(cells(size_m.x()), cells(size_m.y()), cells(size_m.z()), resolution, origin);
}

bool FloorPlan::contains(const Pose& p) const {
  if (!p.finite()) return false;
  const double fx = (p.x - origin_.x) / resolution_;
  const double fy = (p.y - origin_.y) / resolution_;
  const double fz = (p.z - origin_.z) / resolution_;
  return fx >= 0 && fy >= 0 && fz >= 0 && fx < nx_ && fy < ny_ && fz < nz_;
}

Cell FloorPlan::cell_of(const Pose& p) const {
  if (!contains(p)) {
    throw BoundsError("pose (" + detail::fixed(p.x, 3) + ", " + detail::fixed(p.y, 3) + ", " +
                      detail::fixed(p.z, 3) + ") lies outside the floor plan");
  }
  return {static_cast<int>(std::floor((p.x - origin_.x) / resolution_)),
          static_cast<int>(std::floor((p.y - origin_.y) / resolution_)),
          static_cast<int>(std::floor((p.z - origin_.z) / resolution_))};
}

Pose FloorPlan::center_of(const Cell& c) const {
  return {origin_.x + (c.x + 0.5) * resolution_, origin_.y + (c.y + 0.5) * resolution_,
          origin_.z + (c.z + 0.5) * resolution_};
}

void FloorPlan::set_occupied(const Cell& c, bool value) {
  if (!contains(c)) throw BoundsError("cell outside the floor plan");
  occupancy_[flat(c)] = value ? 1 : 0;
  if (value) doors_[flat(c)] = 0;
}

void FloorPlan::add_door(const Cell& c) {
  if (!contains(c)) throw BoundsError("door cell outside the floor plan");
  occupancy_[flat(c)] = 0;
  doors_[flat(c)] = 1;
}

std::vector<Cell> FloorPlan::cells_in_box(const Vec3& lo, const Vec3& hi) const {
  const Vec3 org = origin_.vec();
  const int n[3] = {nx_, ny_, nz_};
  int first[3];
  int last[3];
  for (int axis = 0; axis < 3; ++axis) {
    const double a = (std::min(lo[axis], hi[axis]) - org[axis]) / resolution_;
    const double b = (std::max(lo[axis], hi[axis]) - org[axis]) / resolution_;
    // Centers sit at i + 0.5; keep those with a <= i + 0.5 <= b.
    int i0 = static_cast<int>(std::ceil(a - 0.5 - 1e-9));
    int i1 = static_cast<int>(std::floor(b - 0.5 + 1e-9));
    if (i0 > i1) i0 = i1 = static_cast<int>(std::floor(0.5 * (a + b)));
    first[axis] = std::max(i0, 0);
    last[axis] = std::min(i1, n[axis] - 1);
  }
  std::vector<Cell> out;
  for (int z = first[2]; z <= last[2]; ++z)
    for (int y = first[1]; y <= last[1]; ++y)
      for (int x = first[0]; x <= last[0]; ++x) out.push_back({x, y, z});
  return out;
}

void FloorPlan::fill_box(const Vec3& lo, const Vec3& hi, bool value) {
  for (const Cell& c : cells_in_box(lo, hi)) set_occupied(c, value);
}

void FloorPlan::add_door_box(const Vec3& lo, const Vec3& hi) {
  for (const Cell& c : cells_in_box(lo, hi)) add_door(c);
}

std::size_t FloorPlan::free_cell_count() const {
  return static_cast<std::size_t>(std::count(occupancy_.begin(), occupancy_.end(), 0));
}

std::vector<Cell> FloorPlan::free_cells() const {
  std::vector<Cell> out;
  for (int z = 0; z < nz_; ++z)
    for (int y = 0; y < ny_; ++y)
      for (int x = 0; x < nx_; ++x)
        if (!occupied({x, y, z})) out.push_back({x, y, z});
  return out;
}

std::vector<Cell> FloorPlan::door_cells() const {
  std::vector<Cell> out;
  for (int z = 0; z < nz_; ++z)
    for (int y = 0; y < ny_; ++y)
      for (int x = 0; x < nx_; ++x)
        if (is_door({x, y, z})) out.push_back({x, y, z});
  return out;
}

std::uint64_t FloorPlan::content_hash() const {
  std::uint64_t h = fnv1a64(&nx_, sizeof nx_);
  h = fnv1a64(&ny_, sizeof ny_, h);
  h = fnv1a64(&nz_, sizeof nz_, h);
  h = fnv1a64(&resolution_, sizeof resolution_, h);
  const double org[3] = {origin_.x, origin_.y, origin_.z};
  h = fnv1a64(org, sizeof org, h);
  h = fnv1a64(occupancy_.data(), occupancy_.size(), h);
  return fnv1a64(doors_.data(), doors_.size(), h);
}

std::vector<Cell> bresenham_cells(const Cell& a, const Cell& b) {
  Cell p = std::min(a, b);
  const Cell q = std::max(a, b);
  const int dx = std::abs(q.x - p.x);
  const int dy = std::abs(q.y - p.y);
  const int dz = std::abs(q.z - p.z);
  const int sx = q.x > p.x ? 1 : -1;
  const int sy = q.y > p.y ? 1 : -1;
  const int sz = q.z > p.z ? 1 : -1;

  std::vector<Cell> out;
  out.reserve(static_cast<std::size_t>(std::max({dx, dy, dz})) + 1);
  out.push_back(p);

  // Drive along the dominant axis; the two error terms decide the minor steps.
  auto walk = [&](int& major, int major_step, int major_len, int& minor1, int minor1_step,
                  int minor1_len, int& minor2, int minor2_step, int minor2_len) {
    int e1 = 2 * minor1_len - major_len;
    int e2 = 2 * minor2_len - major_len;
    for (int i = 0; i < major_len; ++i) {
      major += major_step;
      if (e1 >= 0) {
        minor1 += minor1_step;
        e1 -= 2 * major_len;
      }
      if (e2 >= 0) {
        minor2 += minor2_step;
        e2 -= 2 * major_len;
      }
      e1 += 2 * minor1_len;
      e2 += 2 * minor2_len;
      out.push_back(p);
    }
  };

  if (dx >= dy && dx >= dz) {
    walk(p.x, sx, dx, p.y, sy, dy, p.z, sz, dz);
  } else if (dy >= dx && dy >= dz) {
    walk(p.y, sy, dy, p.x, sx, dx, p.z, sz, dz);
  } else {
    walk(p.z, sz, dz, p.x, sx, dx, p.y, sy, dy);
  }
  return out;
}

LosResult line_of_sight(const FloorPlan& plan, const Pose& a, const Pose& b,
                        const LosOptions& opts) {
  LosResult r;
  r.traversed = bresenham_cells(plan.cell_of(a), plan.cell_of(b));
  for (std::size_t i = 1; i + 1 < r.traversed.size(); ++i) {
    if (plan.blocks_rf(r.traversed[i], opts.doors_block_rf)) {
      r.link = LinkClass::Nlos;
      break;
    }
  }
  return r;
}

int wall_crossings(const FloorPlan& plan, const Pose& a, const Pose& b, const LosOptions& opts) {
  const auto cells = bresenham_cells(plan.cell_of(a), plan.cell_of(b));
  int runs = 0;
  bool inside = false;
  for (std::size_t i = 1; i + 1 < cells.size(); ++i) {
    const bool blocked = plan.blocks_rf(cells[i], opts.doors_block_rf);
    if (blocked && !inside) ++runs;
    inside = blocked;
  }
  return runs;
}

bool motion_clear(const FloorPlan& plan, const Pose& a, const Pose& b) {
  if (!plan.contains(a) || !plan.contains(b)) return false;
  for (const Cell& c : bresenham_cells(plan.cell_of(a), plan.cell_of(b)))
    if (plan.occupied(c)) return false;
  return true;
}

namespace {

double truncated_normal(Rng& rng, double sigma) {
  if (sigma <= 0.0) return 0.0;
  for (;;) {
    const double v = rng.normal(0.0, sigma);
    if (std::abs(v) <= 3.0 * sigma) return v;
  }
}

Vec3 random_direction(Rng& rng, bool planar) {
  if (planar) {
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    return {std::cos(theta), std::sin(theta), 0.0};
  }
  for (;;) {
    Vec3 v(rng.normal(), rng.normal(), rng.normal());
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

}  // namespace

Trajectory random_walk(const FloorPlan& plan, const Pose& start, const Pose& goal,
                       const WalkConfig& cfg, Rng& rng) {
  if (!(cfg.step_size_m > 0.0)) throw ConfigError("random walk step size must be > 0");
  for (const Pose* p : {&start, &goal}) {
    if (plan.occupied(plan.cell_of(*p))) throw ConfigError("random walk endpoint inside an obstacle");
  }

  Trajectory t;
  t.waypoints.push_back(start);
  Pose cur = start;
  Pose target = goal;
  if (cfg.planar) target.z = start.z;

  std::size_t attempts = 0;
  while (euclidean_distance(cur, target) > cfg.step_size_m) {
    if (attempts >= cfg.max_steps) {
      throw WalkTimeout("random walk did not reach the goal within " +
                            std::to_string(cfg.max_steps) + " step attempts",
                        std::move(t));
    }
    ++attempts;

    Vec3 dir;
    double len = cfg.step_size_m;
    if (rng.bernoulli(cfg.goal_bias)) {
      const Vec3 d = target.vec() - cur.vec();
      len = std::min(len, d.norm());
      dir = d / d.norm();
    } else {
      dir = random_direction(rng, cfg.planar);
    }
    const Vec3 u = dir * len;
    Vec3 noise(truncated_normal(rng, cfg.motion_noise_std.x()),
               truncated_normal(rng, cfg.motion_noise_std.y()),
               cfg.planar ? 0.0 : truncated_normal(rng, cfg.motion_noise_std.z()));
    const Pose next = Pose::from(cur.vec() + u + noise);
    if (!motion_clear(plan, cur, next)) continue;

    t.commands.push_back({u.x(), u.y(), u.z()});
    t.waypoints.push_back(next);
    cur = next;
  }
  return t;
}

FreeSpaceSampler::FreeSpaceSampler(const FloorPlan& plan, bool planar, double plane_z)
    : plan_(&plan), planar_(planar), plane_z_(plane_z) {
  if (planar) {
    const int layer = static_cast<int>(std::floor((plane_z - plan.origin().z) / plan.resolution()));
    if (layer < 0 || layer >= plan.nz()) throw BoundsError("sampling plane outside the floor plan");
    for (int y = 0; y < plan.ny(); ++y)
      for (int x = 0; x < plan.nx(); ++x)
        if (!plan.occupied({x, y, layer})) cells_.push_back({x, y, layer});
  } else {
    cells_ = plan.free_cells();
  }
  if (cells_.empty()) throw DegenerateMapError("floor plan has no free cells to sample from");
}

Pose FreeSpaceSampler::sample(Rng& rng) const {
  const Cell& c = cells_[rng.index(cells_.size())];
  const double r = plan_->resolution();
  const Pose& o = plan_->origin();
  Pose p{o.x + (c.x + rng.uniform()) * r, o.y + (c.y + rng.uniform()) * r, 0.0};
  p.z = planar_ ? plane_z_ : o.z + (c.z + rng.uniform()) * r;
  return p;
}

Pose sample_free_pose(const FloorPlan& plan, Rng& rng, bool planar, double plane_z) {
  return FreeSpaceSampler(plan, planar, plane_z).sample(rng);
}

void write_trajectory_csv(const Trajectory& t, const std::string& path) {
  auto out = detail::open_out(path);
  out << "step,x,y,z\n";
  for (std::size_t i = 0; i < t.waypoints.size(); ++i) {
    const Pose& p = t.waypoints[i];
    out << i << ',' << detail::exact(p.x) << ',' << detail::exact(p.y) << ','
        << detail::exact(p.z) << '\n';
  }
}

}  // namespace wifiloc
