#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/filters.hpp"

namespace wifiloc {

/// Gaussian estimate of one access point position.
struct LandmarkEkf {
  std::string ap_id;
  Vec3 mean = Vec3::Zero();
  Mat3 cov = Mat3::Zero();

  friend bool operator==(const LandmarkEkf& a, const LandmarkEkf& b) {
    return a.ap_id == b.ap_id && a.mean == b.mean && a.cov == b.cov;
  }
};

struct SlamParticle {
  Pose pose;
  double weight = 0.0;
  std::vector<LandmarkEkf> landmarks;  // sorted by ap_id, one per id

  const LandmarkEkf* find(const std::string& id) const;
  LandmarkEkf* find(const std::string& id);
};

using SlamParticleSet = std::vector<SlamParticle>;

struct SlamConfig {
  FilterConfig filter;
  /// Per-axis std of each particle's initial landmark draw around the prior.
  Vec3 ap_location_noise_std = Vec3::Constant(0.8);
  /// Lower bound on the initial landmark variance per axis, m^2.
  double prior_variance_floor = 0.0;
  bool joseph_form = false;
  /// Eigenvalues below zero after an update are lifted to this value.
  double eigen_floor = 1e-12;
  /// Predicted ranges below this skip the EKF update.
  double min_range_m = 1e-6;
  /// Skip the EKF update for an AP whenever its weight factor was skipped
  /// (HC with an NLOS label).
  bool ekf_follows_weight = true;
};

/// mean = prior + N(0, diag(std^2)), cov = diag(max(std^2, floor)).
LandmarkEkf init_landmark(const std::string& ap_id, const Pose& prior, const Vec3& noise_std,
                          Rng& rng, double variance_floor = 0.0);

struct EkfUpdate {
  LandmarkEkf landmark;
  double innovation = 0.0;      // dr - h
  double innovation_var = 0.0;  // H P H^T + sz^2
  bool skipped = false;         // singular geometry
};

/// Range-only EKF update: h = |m - x|, H = (m - x)^T / h, nu = dr - h,
/// S = H P H^T + sz^2, K = P H^T / S, m += K nu, P = (I - K H) P (or Joseph
/// form), re-symmetrized with negative eigenvalues lifted to the floor.
EkfUpdate ekf_range_update(const LandmarkEkf& lm, const Pose& pose, double dr, double sz,
                           const SlamConfig& cfg = {});

/// Particles as init_particles, each carrying init_landmark draws for every AP
/// of the prior map (stream (Landmark, i, ap index)).
SlamParticleSet init_slam_particles(const SlamConfig& cfg, const FloorPlan& plan,
                                    const ApMap& prior, const Rng& rng);

struct SlamStepDiagnostics : StepDiagnostics {
  std::size_t bootstrapped = 0;
  std::size_t skipped_updates = 0;
  Pose estimate;  // weighted mean pose before resampling
};

/// One FastSLAM step: motion (when given), per-AP weight factor from the
/// shared three-mode model with de against each particle's own landmark mean,
/// EKF update with dr, normalization and gated resampling of whole particles.
/// APs missing from a particle are bootstrapped from `prior` when listed there,
/// otherwise on a ring of radius dr around the particle.
SlamStepDiagnostics fastslam_step(SlamParticleSet& particles, const MotionCommand* command,
                                  std::span<const RssiObservation> observations,
                                  const ApMap& prior, const SlamConfig& cfg,
                                  const LinkClassifier* classifier, const Rng& root,
                                  std::size_t step, const PropagationParams& params = {},
                                  std::vector<double>* weights_out = nullptr);

struct MapEstimate {
  std::string ap_id;
  Vec3 mean = Vec3::Zero();
  double spread_m = 0.0;  // weighted RMS distance of particle means from `mean`
  double trace_cov = 0.0; // weighted mean of covariance traces
};

/// Weighted per-AP landmark means; APs no particle has seen are absent.
std::vector<MapEstimate> map_estimate(const SlamParticleSet& particles);

Pose estimate_pose(const SlamParticleSet& particles);

struct SlamRunResult : RunResult {
  std::vector<MapEstimate> initial_map;
  std::vector<MapEstimate> final_map;
};

SlamRunResult run_fastslam(const FloorPlan& plan, const ApMap& prior,
                           std::span<const StepInput> steps, const SlamConfig& cfg,
                           const LinkClassifier* classifier, std::uint64_t seed,
                           const PropagationParams& params = {}, const RunOptions& opts = {});

/// `ap_id,true_x,true_y,true_z,est_x,est_y,est_z,err_m,trace_cov`. True
/// columns are empty for APs absent from `truth`.
void write_ap_csv(std::span<const MapEstimate> estimates, const ApMap* truth,
                  const std::string& path);

}  // namespace wifiloc
