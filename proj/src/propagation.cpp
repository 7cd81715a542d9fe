#include "wifiloc/propagation.hpp"

#include <cmath>
#include <fstream>

#include "text_util.hpp"

namespace wifiloc {

ApMap::ApMap(std::vector<AccessPoint> aps) {
  for (auto& ap : aps) add(std::move(ap));
}

void ApMap::add(AccessPoint ap) {
  if (ap.id.empty()) throw ValidationError("access point id must be non-empty");
  if (find(ap.id)) throw ValidationError("duplicate access point id: " + ap.id);
  if (!(ap.freq_mhz > 0.0)) throw ValidationError("access point " + ap.id + ": freq_mhz must be > 0");
  if (!ap.position.finite() || !std::isfinite(ap.tx_power_dbm))
    throw ValidationError("access point " + ap.id + ": non-finite field");
  aps_.push_back(std::move(ap));
}

std::optional<std::size_t> ApMap::find(const std::string& id) const {
  for (std::size_t i = 0; i < aps_.size(); ++i)
    if (aps_[i].id == id) return i;
  return std::nullopt;
}

std::size_t ApMap::index_of(const std::string& id) const {
  if (auto i = find(id)) return *i;
  throw DataAssociationError("unknown access point id: " + id);
}

std::uint64_t ApMap::content_hash() const {
  std::uint64_t h = fnv1a64(nullptr, 0);
  for (const auto& ap : aps_) {
    h = fnv1a64(ap.id.data(), ap.id.size(), h);
    const double v[5] = {ap.position.x, ap.position.y, ap.position.z, ap.tx_power_dbm, ap.freq_mhz};
    h = fnv1a64(v, sizeof v, h);
  }
  return h;
}

void PropagationParams::validate() const {
  if (!std::isfinite(fspl_constant_k)) throw ConfigError("fspl_constant_k must be finite");
  if (!(wall_loss_db >= 0.0)) throw ConfigError("wall_loss_db must be >= 0");
  if (!(shadowing_sigma_db >= 0.0)) throw ConfigError("shadowing_sigma_db must be >= 0");
  if (!(sensing_range_m > 0.0)) throw ConfigError("sensing_range_m must be > 0");
  if (!(min_distance_m > 0.0)) throw ConfigError("min_distance_m must be > 0");
}

double path_loss_db(double distance_m, double freq_mhz, const PropagationParams& params,
                    int walls) {
  if (!(distance_m > 0.0) || !std::isfinite(distance_m))
    throw DomainError("path loss needs a positive finite distance");
  if (!(freq_mhz > 0.0)) throw DomainError("path loss needs a positive frequency");
  return 20.0 * std::log10(distance_m / 1000.0) + 20.0 * std::log10(freq_mhz) +
         params.fspl_constant_k + walls * params.wall_loss_db;
}

double fspl_distance(double rssi_dbm, double tx_power_dbm, double freq_mhz,
                     const PropagationParams& params) {
  if (!std::isfinite(rssi_dbm) || !std::isfinite(tx_power_dbm) || !std::isfinite(freq_mhz))
    throw DomainError("fspl_distance needs finite inputs");
  if (!(freq_mhz > 0.0)) throw DomainError("fspl_distance needs a positive frequency");
  const double loss = tx_power_dbm - rssi_dbm;
  const double exponent = (loss - params.fspl_constant_k - 20.0 * std::log10(freq_mhz)) / 20.0;
  return 1000.0 * std::pow(10.0, exponent);
}

std::optional<RssiObservation> synthesize_rssi(const FloorPlan& plan, const Pose& pose,
                                               const AccessPoint& ap,
                                               const PropagationParams& params, Rng& rng,
                                               std::size_t step) {
  const double d = euclidean_distance(pose, ap.position);
  if (d > params.sensing_range_m) return std::nullopt;
  const int walls = wall_crossings(plan, pose, ap.position, {params.doors_block_rf});
  const double loss =
      path_loss_db(std::max(d, params.min_distance_m), ap.freq_mhz, params, walls);
  const double shadow = rng.normal(0.0, params.shadowing_sigma_db);
  return RssiObservation{ap.id, ap.tx_power_dbm - loss - shadow, step};
}

std::vector<RssiObservation> observe(const FloorPlan& plan, const Pose& pose, const ApMap& aps,
                                     const PropagationParams& params, Rng& rng,
                                     std::size_t step) {
  std::vector<RssiObservation> out;
  for (const auto& ap : aps.aps()) {
    if (auto obs = synthesize_rssi(plan, pose, ap, params, rng, step)) out.push_back(*obs);
  }
  return out;
}

Dataset generate_dataset(const FloorPlan& plan, const ApMap& aps, const DatasetConfig& cfg,
                         const PropagationParams& params, Rng& rng) {
  if (cfg.n_paths < 1) throw ConfigError("dataset generation needs at least one path");
  if (aps.empty()) throw ConfigError("dataset generation needs at least one access point");
  params.validate();

  const FreeSpaceSampler sampler(plan, cfg.planar, cfg.device_height_m);
  WalkConfig walk = cfg.walk;
  walk.planar = cfg.planar;

  Dataset ds;
  for (std::size_t k = 0; k < cfg.n_paths; ++k) {
    Rng path_rng = rng.derive(Stream::Dataset, {k});
    const Pose start = sampler.sample(path_rng);
    const Pose goal = sampler.sample(path_rng);
    Trajectory t;
    try {
      t = random_walk(plan, start, goal, walk, path_rng);
    } catch (const WalkTimeout& e) {
      t = e.partial();
    }
    const std::size_t n = std::min(t.waypoints.size(), cfg.max_waypoints_per_path);
    for (std::size_t w = 0; w < n; ++w) {
      const Pose& p = t.waypoints[w];
      for (const auto& ap : aps.aps()) {
        auto obs = synthesize_rssi(plan, p, ap, params, path_rng, w);
        if (!obs) continue;
        LabeledSample s;
        s.d_euc_m = euclidean_distance(p, ap.position);
        s.d_fspl_m = fspl_distance(obs->rssi_dbm, ap.tx_power_dbm, ap.freq_mhz, params);
        s.label = line_of_sight(plan, p, ap.position, {params.doors_block_rf}).link;
        (s.label == LinkClass::Los ? ds.los_count : ds.nlos_count)++;
        ds.samples.push_back(s);
      }
    }
  }
  return ds;
}

void write_dataset_csv(std::span<const LabeledSample> samples, const std::string& path) {
  auto out = detail::open_out(path);
  out << "d_euc_m,d_fspl_m,label\n";
  for (const auto& s : samples) {
    out << detail::exact(s.d_euc_m) << ',' << detail::exact(s.d_fspl_m) << ','
        << static_cast<int>(s.label) << '\n';
  }
  if (!out) throw IoError("write failed: " + path);
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open dataset: " + path);
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "d_euc_m,d_fspl_m,label")
    throw FormatError(path + ": expected header d_euc_m,d_fspl_m,label");
  Dataset ds;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line));
    LabeledSample s;
    long long label = -1;
    if (f.size() != 3 || !detail::parse_double(f[0], s.d_euc_m) ||
        !detail::parse_double(f[1], s.d_fspl_m) || !detail::parse_int(f[2], label) ||
        (label != 0 && label != 1) || !std::isfinite(s.d_euc_m) || !std::isfinite(s.d_fspl_m) ||
        s.d_euc_m < 0.0 || s.d_fspl_m < 0.0) {
      throw FormatError(path + ": malformed dataset row " + std::to_string(row));
    }
    s.label = static_cast<LinkClass>(label);
    (s.label == LinkClass::Los ? ds.los_count : ds.nlos_count)++;
    ds.samples.push_back(s);
  }
  return ds;
}

}  // namespace wifiloc
