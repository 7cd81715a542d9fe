#include <cmath>
#include <cstdio>

#include "wifiloc/propagation.hpp"
#include "wifiloc/world.hpp"

namespace wifiloc {

namespace {

double snap(double v, double res) { return std::round(v / res) * res; }

}  // namespace

PlanGeometry generate_office_geometry(const OfficeLayout& l, Rng& rng) {
  const double res = l.wall_thickness_m;
  const double L = l.length_m;
  const double W = l.width_m;
  const double H = l.height_m;
  const double t = l.wall_thickness_m;
  if (W < l.corridor_width_m + 4 * t + 2.0) throw ConfigError("office layout too narrow for rooms");

  PlanGeometry g;
  // Perimeter.
  g.walls.push_back({Vec3(0, 0, 0), Vec3(L, t, H)});
  g.walls.push_back({Vec3(0, W - t, 0), Vec3(L, W, H)});
  g.walls.push_back({Vec3(0, 0, 0), Vec3(t, W, H)});
  g.walls.push_back({Vec3(L - t, 0, 0), Vec3(L, W, H)});

  const double c_lo = snap(0.5 * (W - l.corridor_width_m) - t, res);
  const double c_hi = snap(0.5 * (W + l.corridor_width_m), res);
  g.walls.push_back({Vec3(0, c_lo, 0), Vec3(L, c_lo + t, H)});
  g.walls.push_back({Vec3(0, c_hi, 0), Vec3(L, c_hi + t, H)});

  // Rooms on each side of the corridor: partitions at random spacing, one
  // door per room into the corridor.
  struct Side {
    double wall_y;
    double y0, y1;  // room extent across the floor
  };
  const Side sides[2] = {{c_lo, 0.0, c_lo}, {c_hi, c_hi + t, W}};
  for (const Side& side : sides) {
    double x = t;
    while (x < L - t - 1e-9) {
      double room = snap(rng.uniform(l.room_length_min_m, l.room_length_max_m), res);
      double end = x + room;
      if (end > L - t - l.room_length_min_m) end = L - t;
      const double door_w = std::min(l.door_width_m, end - x - 2 * t);
      const double door_x = snap(rng.uniform(x + t, end - t - door_w), res);
      g.doors.push_back({Vec3(door_x, side.wall_y, 0), Vec3(door_x + door_w, side.wall_y + t, H)});
      if (end < L - t - 1e-9) g.walls.push_back({Vec3(end, side.y0, 0), Vec3(end + t, side.y1, H)});
      x = end + t;
    }
  }
  return g;
}

Environment generate_office_environment(const OfficeLayout& layout, std::size_t n_aps,
                                        double ap_height_m, Rng& rng, double resolution) {
  const Vec3 size(layout.length_m, layout.width_m, layout.height_m);
  PlanGeometry geometry = generate_office_geometry(layout, rng);
  FloorPlan plan = rasterize(size, resolution, geometry);
  ApMap aps;
  const FreeSpaceSampler sampler(plan, true, ap_height_m);
  for (std::size_t i = 0; i < n_aps; ++i) {
    char id[32];
    std::snprintf(id, sizeof id, "02:00:00:00:%02zx:%02zx", (i >> 8) & 0xff, i & 0xff);
    aps.add({id, sampler.sample(rng), 0.0, 2400.0});
  }
  return {std::move(plan), std::move(aps), std::move(geometry), size};
}

}  // namespace wifiloc
