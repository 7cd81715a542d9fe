#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/fastslam.hpp"
#include "wifiloc/filters.hpp"
#include "wifiloc/propagation.hpp"

namespace wifiloc {

/// sqrt(mean_k |a_k - b_k|^2), waypoints aligned by index. Throws
/// AlignmentError on length mismatch or empty input.
double rmse(std::span<const Pose> truth, std::span<const Pose> estimate);
double rmse(const Trajectory& truth, const Trajectory& estimate);

enum class Algorithm { ParticleFilter, FastSlam };

const char* to_string(Algorithm a);  // "pf", "fastslam"
Algorithm parse_algorithm(const std::string& s);

/// How a simulated trial is drawn. Everything here comes from the trial's
/// scenario substream, so NC/HC/SC runs with the same seed see the same
/// trajectory, RSSI draws, sz values and AP priors.
struct ScenarioConfig {
  WalkConfig walk;                     // truth walk; step size 2 m
  std::size_t max_waypoints = 40;
  double min_start_goal_m = 20.0;
  double device_height_m = 1.5;
  /// Per-axis motion std drawn as U(0,1) * max; the same std drives the truth
  /// walk noise and the filter's motion model.
  bool randomize_motion_noise = true;
  double motion_noise_max_m = 0.8;
  /// sz_j drawn per AP uniformly in [min, max].
  bool randomize_measurement_noise = true;
  double measurement_noise_min_m = 10.0;
  double measurement_noise_max_m = 100.0;
  /// FastSLAM prior map: truth + U(-e, e) per axis (z untouched in 2D).
  double ap_prior_error_max_m = 0.8;
  /// Particles start around the true start pose (std per axis) or uniform
  /// over free space.
  bool init_at_start = false;
  double init_std_m = 1.0;

  void validate() const;
};

struct ExperimentConfig {
  Environment env;
  bool planar = true;
  Algorithm algorithm = Algorithm::ParticleFilter;
  MeasurementMode mode = MeasurementMode::NoClassification;
  std::size_t trials = 20;
  std::uint64_t base_seed = 1;
  SlamConfig slam;  // slam.filter is the FilterConfig for both algorithms
  PropagationParams params;
  ScenarioConfig scenario;

  void validate() const;
};

/// One simulated trial before any filter runs.
struct Scenario {
  std::vector<StepInput> steps;
  Trajectory truth;
  Vec3 motion_noise_std = Vec3::Zero();
  std::map<std::string, double> measurement_noise_std_m;
  ApMap prior;  // perturbed map handed to FastSLAM
  Pose start;
};

Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t trial_seed);

/// Filter configuration for a scenario: cfg.slam.filter with the trial's
/// motion std, sz values, mode and initial distribution filled in.
SlamConfig scenario_filter_config(const ExperimentConfig& cfg, const Scenario& sc);

struct TrialReport {
  std::size_t trial = 0;
  std::uint64_t seed = 0;
  bool failed = false;
  std::string failure;
  double rmse_m = 0.0;
  std::vector<double> waypoint_errors_m;
  std::vector<Pose> truth;
  std::vector<Pose> estimates;
  // FastSLAM only, in prior map order.
  std::vector<std::string> ap_ids;
  std::vector<double> ap_initial_error_m;
  std::vector<double> ap_final_error_m;
  double duration_s = 0.0;  // wall clock, never written to report files

  double mean_initial_ap_error() const;
  double mean_final_ap_error() const;
};

TrialReport run_trial(const ExperimentConfig& cfg, std::size_t trial,
                      const LinkClassifier* classifier);

struct Aggregate {
  std::size_t trials = 0;  // successful trials
  std::size_t failed = 0;
  double mean_rmse = 0.0;
  double std_rmse = 0.0;  // sample standard deviation, 0 for one trial
  double min_rmse = 0.0;
  double max_rmse = 0.0;
};

Aggregate aggregate(std::span<const TrialReport> trials);

struct ExperimentReport {
  Algorithm algorithm = Algorithm::ParticleFilter;
  MeasurementMode mode = MeasurementMode::NoClassification;
  bool planar = true;
  std::vector<TrialReport> trials;
  Aggregate summary;
};

/// Trial k uses seed base_seed + k. Failed trials stay in the table, flagged,
/// and are excluded from the aggregate.
ExperimentReport run_trials(const ExperimentConfig& cfg, const LinkClassifier* classifier);

struct ReportFormats {
  bool csv = true;
  bool svg = true;
};

/// Writes <prefix>_aggregate.csv, _trials.csv, _waypoints.csv, _aps.csv (when
/// any report carries AP errors) and, with svg, _rmse_box.svg and
/// _waypoint_error.svg. Returns the paths written.
std::vector<std::string> emit_report(std::span<const ExperimentReport> reports,
                                     const std::string& prefix, const ReportFormats& formats = {});

}  // namespace wifiloc
