#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "text_util.hpp"
#include "wifiloc/propagation.hpp"
#include "wifiloc/world.hpp"

namespace wifiloc {

namespace {

using nlohmann::json;

[[noreturn]] void field_error(const std::string& field, const std::string& msg) {
  throw ParseError("floor plan field '" + field + "': " + msg);
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const std::size_t byte = std::min<std::size_t>(e.byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<long>(byte), '\n');
    throw ParseError("floor plan document: syntax error at line " + std::to_string(line) + ": " +
                     e.what());
  }
}

double number(const json& j, const std::string& field) {
  if (!j.is_number()) field_error(field, "expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) field_error(field, "must be finite");
  return v;
}

Vec3 vec3(const json& j, const std::string& field) {
  if (!j.is_array() || j.size() != 3) field_error(field, "expected an array of 3 numbers");
  return {number(j[0], field + "[0]"), number(j[1], field + "[1]"), number(j[2], field + "[2]")};
}

const json& member(const json& obj, const std::string& key, const std::string& field) {
  if (!obj.is_object() || !obj.contains(key)) field_error(field + key, "missing");
  return obj.at(key);
}

std::vector<std::pair<Vec3, Vec3>> boxes(const json& doc, const std::string& key, const Vec3& origin,
                                         const Vec3& size) {
  std::vector<std::pair<Vec3, Vec3>> out;
  if (!doc.contains(key)) return out;
  const json& arr = doc.at(key);
  if (!arr.is_array()) field_error(key, "expected an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const std::string f = key + "[" + std::to_string(i) + "]";
    Vec3 lo = vec3(member(arr[i], "min", f + "."), f + ".min");
    Vec3 hi = vec3(member(arr[i], "max", f + "."), f + ".max");
    for (int a = 0; a < 3; ++a) {
      if (lo[a] > hi[a]) field_error(f, "min exceeds max");
      const double eps = 1e-9;
      if (lo[a] < origin[a] - eps || hi[a] > origin[a] + size[a] + eps)
        field_error(f, "box extends outside size_m");
    }
    out.emplace_back(lo, hi);
  }
  return out;
}

struct ParsedPlan {
  FloorPlan plan;
  PlanGeometry geometry;
  Vec3 size;
};

ParsedPlan parse_plan_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("floor plan document must be an object");
  const json& fmt = member(doc, "format", "");
  if (!fmt.is_number_integer() || fmt.get<int>() != 1) field_error("format", "unsupported version");
  const double res = number(member(doc, "resolution_m", ""), "resolution_m");
  if (!(res > 0.0)) field_error("resolution_m", "must be > 0");
  const Vec3 size = vec3(member(doc, "size_m", ""), "size_m");
  for (int a = 0; a < 3; ++a)
    if (!(size[a] > 0.0)) field_error("size_m", "extents must be > 0");
  const Vec3 origin = doc.contains("origin_m") ? vec3(doc.at("origin_m"), "origin_m") : Vec3::Zero();

  FloorPlan plan = FloorPlan::with_extent(size, res, Pose::from(origin));
  PlanGeometry geometry;
  geometry.walls = boxes(doc, "walls", origin, size);
  geometry.doors = boxes(doc, "doors", origin, size);
  for (const auto& [lo, hi] : geometry.walls) plan.fill_box(lo, hi, true);
  for (const auto& [lo, hi] : geometry.doors) plan.add_door_box(lo, hi);
  if (plan.free_cell_count() == 0) throw DegenerateMapError("floor plan has zero free cells");
  return {std::move(plan), std::move(geometry), size};
}

json box_json(const std::pair<Vec3, Vec3>& b) {
  return {{"min", {b.first.x(), b.first.y(), b.first.z()}},
          {"max", {b.second.x(), b.second.y(), b.second.z()}}};
}

}  // namespace

FloorPlan parse_floor_plan(const std::string& text) {
  return parse_plan_json(parse_json(text)).plan;
}

FloorPlan load_floor_plan(const std::string& path) { return parse_floor_plan(detail::read_file(path)); }

FloorPlan rasterize(const Vec3& size_m, double resolution, const PlanGeometry& geometry) {
  FloorPlan plan = FloorPlan::with_extent(size_m, resolution);
  for (const auto& [lo, hi] : geometry.walls) plan.fill_box(lo, hi, true);
  for (const auto& [lo, hi] : geometry.doors) plan.add_door_box(lo, hi);
  if (plan.free_cell_count() == 0) throw DegenerateMapError("floor plan has zero free cells");
  return plan;
}

Environment parse_environment(const std::string& text) {
  const json doc = parse_json(text);
  ParsedPlan parsed = parse_plan_json(doc);
  ApMap aps;
  if (doc.contains("aps")) {
    const json& arr = doc.at("aps");
    if (!arr.is_array()) field_error("aps", "expected an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string f = "aps[" + std::to_string(i) + "]";
      const json& e = arr[i];
      const json& id = member(e, "id", f + ".");
      if (!id.is_string() || id.get<std::string>().empty()) field_error(f + ".id", "expected a non-empty string");
      AccessPoint ap;
      ap.id = id.get<std::string>();
      ap.position = Pose::from(vec3(member(e, "pos_m", f + "."), f + ".pos_m"));
      if (e.contains("tx_dbm")) ap.tx_power_dbm = number(e.at("tx_dbm"), f + ".tx_dbm");
      if (e.contains("freq_mhz")) ap.freq_mhz = number(e.at("freq_mhz"), f + ".freq_mhz");
      if (!(ap.freq_mhz > 0.0)) field_error(f + ".freq_mhz", "must be > 0");
      if (!parsed.plan.contains(ap.position)) field_error(f + ".pos_m", "outside the floor plan");
      if (aps.find(ap.id)) field_error(f + ".id", "duplicate id " + ap.id);
      aps.add(std::move(ap));
    }
  }
  return {std::move(parsed.plan), std::move(aps), std::move(parsed.geometry), parsed.size};
}

Environment load_environment(const std::string& path) {
  return parse_environment(detail::read_file(path));
}

std::string environment_document(const Environment& env) {
  json doc;
  doc["format"] = 1;
  doc["resolution_m"] = env.plan.resolution();
  const Vec3 size = env.size_m.isZero() ? env.plan.extent_m() : env.size_m;
  doc["size_m"] = {size.x(), size.y(), size.z()};
  const Pose& o = env.plan.origin();
  if (o.x != 0.0 || o.y != 0.0 || o.z != 0.0) doc["origin_m"] = {o.x, o.y, o.z};
  doc["walls"] = json::array();
  for (const auto& b : env.geometry.walls) doc["walls"].push_back(box_json(b));
  doc["doors"] = json::array();
  for (const auto& b : env.geometry.doors) doc["doors"].push_back(box_json(b));
  doc["aps"] = json::array();
  for (const auto& ap : env.aps.aps()) {
    doc["aps"].push_back({{"id", ap.id},
                          {"pos_m", {ap.position.x, ap.position.y, ap.position.z}},
                          {"tx_dbm", ap.tx_power_dbm},
                          {"freq_mhz", ap.freq_mhz}});
  }
  return doc.dump(2) + "\n";
}

}  // namespace wifiloc
