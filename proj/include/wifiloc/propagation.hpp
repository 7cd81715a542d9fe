#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/rng.hpp"
#include "wifiloc/types.hpp"
#include "wifiloc/world.hpp"

namespace wifiloc {

struct AccessPoint {
  std::string id;  // MAC-like hardware identifier
  Pose position;
  double tx_power_dbm = 0.0;
  double freq_mhz = 2400.0;
};

/// Access points keyed by unique id, kept in insertion order.
class ApMap {
 public:
  ApMap() = default;
  explicit ApMap(std::vector<AccessPoint> aps);

  void add(AccessPoint ap);
  const std::vector<AccessPoint>& aps() const { return aps_; }
  std::size_t size() const { return aps_.size(); }
  bool empty() const { return aps_.empty(); }
  const AccessPoint& operator[](std::size_t i) const { return aps_[i]; }

  /// Index of id, or nullopt.
  std::optional<std::size_t> find(const std::string& id) const;
  /// Throws DataAssociationError for unknown ids.
  std::size_t index_of(const std::string& id) const;
  const AccessPoint& at(const std::string& id) const { return aps_[index_of(id)]; }

  std::uint64_t content_hash() const;

 private:
  std::vector<AccessPoint> aps_;
};

struct PropagationParams {
  double fspl_constant_k = 32.44;  // dB, distance in km and frequency in MHz
  double wall_loss_db = 4.0;
  double shadowing_sigma_db = 3.0;
  double sensing_range_m = 15.0;
  // Distances below this are clamped before entering the log model.
  double min_distance_m = 0.1;
  bool doors_block_rf = false;

  void validate() const;
};

struct RssiObservation {
  std::string ap_id;
  double rssi_dbm = 0.0;
  std::size_t step = 0;

  friend bool operator==(const RssiObservation&, const RssiObservation&) = default;
};

struct LabeledSample {
  double d_euc_m = 0.0;
  double d_fspl_m = 0.0;
  LinkClass label = LinkClass::Los;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

/// 20 log10(d_km) + 20 log10(f_MHz) + K + walls * wall_loss.
double path_loss_db(double distance_m, double freq_mhz, const PropagationParams& params,
                    int walls = 0);

/// Range from RSSI by inverting the free-space model:
/// d = 10^((tx - rssi - K - 20 log10 f) / 20) km, returned in meters.
double fspl_distance(double rssi_dbm, double tx_power_dbm, double freq_mhz,
                     const PropagationParams& params);

/// Received power at pose from ap, or nothing when the AP is beyond sensing
/// range. Wall attenuation uses the plan's Bresenham wall crossings.
std::optional<RssiObservation> synthesize_rssi(const FloorPlan& plan, const Pose& pose,
                                               const AccessPoint& ap,
                                               const PropagationParams& params, Rng& rng,
                                               std::size_t step = 0);

/// All observations at one pose, in ApMap order.
std::vector<RssiObservation> observe(const FloorPlan& plan, const Pose& pose, const ApMap& aps,
                                     const PropagationParams& params, Rng& rng,
                                     std::size_t step = 0);

/// A floor plan together with its access points and the boxes it was built from.
struct Environment {
  FloorPlan plan{1, 1, 1};
  ApMap aps;
  PlanGeometry geometry;
  Vec3 size_m = Vec3::Zero();
};

Environment parse_environment(const std::string& text);
Environment load_environment(const std::string& path);
std::string environment_document(const Environment& env);

/// Random office floor with n_aps access points placed in free cells of the
/// given plane height. APs get ids "02:00:00:00:xx:yy".
Environment generate_office_environment(const OfficeLayout& layout, std::size_t n_aps,
                                        double ap_height_m, Rng& rng,
                                        double resolution = FloorPlan::kDefaultResolution);

struct DatasetConfig {
  std::size_t n_paths = 1;
  WalkConfig walk;
  double device_height_m = 1.5;
  bool planar = false;
  std::size_t max_waypoints_per_path = 200;
};

struct Dataset {
  std::vector<LabeledSample> samples;
  std::size_t los_count = 0;
  std::size_t nlos_count = 0;

  double los_fraction() const {
    return samples.empty() ? 0.0 : static_cast<double>(los_count) / samples.size();
  }
};

/// Random walks between random free poses; every waypoint and in-range AP
/// yields (d_euc, d_fspl, Bresenham LOS label). Path k draws from its own
/// substream of rng, so results do not depend on how many paths precede it.
Dataset generate_dataset(const FloorPlan& plan, const ApMap& aps, const DatasetConfig& cfg,
                         const PropagationParams& params, Rng& rng);

void write_dataset_csv(std::span<const LabeledSample> samples, const std::string& path);
Dataset read_dataset_csv(const std::string& path);

}  // namespace wifiloc
