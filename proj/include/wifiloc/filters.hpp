#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/classifier.hpp"
#include "wifiloc/propagation.hpp"
#include "wifiloc/rng.hpp"
#include "wifiloc/types.hpp"
#include "wifiloc/world.hpp"

namespace wifiloc {

enum class MeasurementMode { NoClassification, HardClassification, SoftClassification };

const char* to_string(MeasurementMode m);  // "nc", "hc", "sc"
MeasurementMode parse_mode(const std::string& s);

/// HC behaviour when the classifier says NLOS.
enum class HardNlosPolicy {
  Skip,       // the AP contributes nothing for that particle
  ReuseLast,  // reuse the particle's previous dz this step (literal reading)
};

/// Treatment of a particle whose distance to an observed AP exceeds the
/// sensing range.
enum class RangeGate {
  Off,   // the AP contributes regardless of distance
  Skip,  // the AP contributes nothing for that particle
};

/// Scope of the NLOS range draw dn ~ N(R, sigma_n^2) in SC mode.
enum class NlosDrawScope { PerParticle, PerStep };

enum class ResamplePolicy { EssGated, EveryStep };
enum class ResampleScheme { Multinomial, Systematic };

struct InitDistribution {
  enum class Kind { Uniform, Point, Gaussian };
  Kind kind = Kind::Uniform;
  Pose center;                 // Point / Gaussian
  Vec3 std = Vec3::Zero();     // Gaussian, per axis
};

struct FilterConfig {
  std::size_t num_particles = 3000;
  double step_size_m = 2.0;
  Vec3 motion_noise_std = Vec3::Constant(0.4);
  /// Measurement noise std per AP id (sz_j); APs not listed use the default.
  std::map<std::string, double> measurement_noise_std_m;
  double default_measurement_noise_std_m = 10.0;
  double sensing_range_m = 15.0;
  double nlos_range_std_m = 3.0;
  MeasurementMode mode = MeasurementMode::NoClassification;
  InitDistribution init;
  HardNlosPolicy hard_nlos = HardNlosPolicy::Skip;
  NlosDrawScope nlos_draw = NlosDrawScope::PerParticle;
  RangeGate range_gate = RangeGate::Off;
  ResamplePolicy resample_policy = ResamplePolicy::EssGated;
  ResampleScheme resample_scheme = ResampleScheme::Multinomial;
  double ess_fraction = 0.5;  // resample when n_eff < ess_fraction * n_p
  bool planar = false;        // 2D runs: z is frozen at the initial height
  double plane_z = 1.5;

  double measurement_noise_for(const std::string& ap_id) const;
  void validate() const;
};

struct Particle {
  Pose pose;
  double weight = 0.0;
};

using ParticleSet = std::vector<Particle>;

/// Draws n_p poses from cfg.init restricted to free space, weights 1/n_p.
/// Particle i uses the substream (Init, i) of rng.
ParticleSet init_particles(const FilterConfig& cfg, const FloorPlan& plan, const Rng& rng);

/// x_prev + u + eps, eps ~ N(0, diag(motion_noise_std^2)); z noise is zero in
/// planar mode.
Pose motion_sample(const Pose& x_prev, const MotionCommand& u, const FilterConfig& cfg, Rng& rng);

/// Gaussian density f(x; 0, sigma^2).
double gaussian_density(double x, double sigma);

/// Per-step telemetry shared by both filters.
struct StepDiagnostics {
  std::size_t step = 0;
  double n_eff = 0.0;
  bool resampled = false;
  bool collapsed = false;
  std::size_t observed_aps = 0;
};

/// Inputs to the three-mode range likelihood for one access point across a
/// set of particles.
struct RangeLikelihoodInput {
  std::span<const double> d_euc;  // per particle
  double d_fspl = 0.0;
  double sz = 10.0;
  std::size_t ap_index = 0;  // keys the NLOS draw substream
};

/// Adds log f(dz; 0, sz^2) to each particle's log-weight, dz chosen by mode:
///   NC  |dr - de|
///   HC  |dr - de| if the classifier labels (de, dr) LOS, else no contribution
///   SC  p_LOS |dr - de| + p_NLOS |dr - dn|, dn ~ N(R, sigma_n^2)
/// With RangeGate::Skip a particle farther than the sensing range from the AP
/// receives no factor.
/// contributed[i] is set when particle i received a factor. last_dz carries
/// each particle's most recent dz within the step (HC ReuseLast).
void apply_range_likelihood(const RangeLikelihoodInput& in, const FilterConfig& cfg,
                            const LinkClassifier* classifier, const Rng& step_rng,
                            std::span<double> log_weights,
                            std::span<std::optional<double>> last_dz,
                            std::vector<char>& contributed);

/// Weight update for all observations of one step followed by normalization.
/// step_rng must be the step's substream; NLOS draws derive from it.
/// Throws DataAssociationError for ids absent from the map and ConfigError
/// when a classifier mode has no classifier.
StepDiagnostics measurement_update(ParticleSet& particles,
                                   std::span<const RssiObservation> observations,
                                   const ApMap& ap_map, const FilterConfig& cfg,
                                   const LinkClassifier* classifier, const Rng& step_rng,
                                   const PropagationParams& params = {});

/// Normalizes in place; all-zero (or non-finite) weights reset to uniform and
/// return true.
bool normalize_weights(std::span<double> weights);
bool normalize_weights(ParticleSet& particles);

/// 1 / sum(w^2) of normalized weights.
double effective_sample_size(std::span<const double> weights);

/// Indices drawn by normalized weight (n draws with replacement).
std::vector<std::size_t> resample_indices(std::span<const double> weights, ResampleScheme scheme,
                                          Rng& rng);
ParticleSet resample(const ParticleSet& particles, Rng& rng,
                     ResampleScheme scheme = ResampleScheme::Multinomial);

/// Weighted mean of particle poses.
Pose estimate_pose(const ParticleSet& particles);

/// One time step fed to a filter. Step 0 carries no motion.
struct StepInput {
  MotionCommand command;
  std::vector<RssiObservation> observations;
  std::optional<Pose> truth;
};

struct RunResult {
  std::vector<Pose> estimates;
  std::vector<StepDiagnostics> diagnostics;
  /// Weights after each measurement update (kept only when requested).
  std::vector<std::vector<double>> weight_history;
};

struct RunOptions {
  bool keep_weight_history = false;
};

/// Known-map SIR particle filter. Per step: motion sample, measurement update,
/// normalization, gated resampling, pose estimate.
RunResult run_particle_filter(const FloorPlan& plan, const ApMap& ap_map,
                              std::span<const StepInput> steps, const FilterConfig& cfg,
                              const LinkClassifier* classifier, std::uint64_t seed,
                              const PropagationParams& params = {}, const RunOptions& opts = {});

/// `step,gt_x,gt_y,gt_z,est_x,est_y,est_z,err_m,n_eff`; ground-truth columns
/// are empty when the step has no truth.
void write_run_csv(std::span<const StepInput> steps, const RunResult& run, const std::string& path);

}  // namespace wifiloc
