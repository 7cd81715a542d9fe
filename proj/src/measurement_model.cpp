#include <cmath>
#include <limits>
#include <numbers>

#include "wifiloc/filters.hpp"

namespace wifiloc {

double gaussian_density(double x, double sigma) {
  return std::exp(-0.5 * (x / sigma) * (x / sigma)) / (std::sqrt(2.0 * std::numbers::pi) * sigma);
}

namespace {

// log f(x; 0, sigma^2)
double log_gaussian_density(double x, double sigma) {
  return -0.5 * (x / sigma) * (x / sigma) - std::log(std::sqrt(2.0 * std::numbers::pi) * sigma);
}

}  // namespace

void apply_range_likelihood(const RangeLikelihoodInput& in, const FilterConfig& cfg,
                            const LinkClassifier* classifier, const Rng& step_rng,
                            std::span<double> log_weights,
                            std::span<std::optional<double>> last_dz,
                            std::vector<char>& contributed) {
  const std::size_t n = in.d_euc.size();
  contributed.assign(n, 0);
  const double dr = in.d_fspl;

  std::vector<double> p_los;
  if (cfg.mode != MeasurementMode::NoClassification) {
    if (classifier == nullptr) throw ConfigError("classification mode requires a classifier");
    p_los.resize(n);
    const std::vector<double> dr_col(n, dr);
    classifier->p_los(in.d_euc, dr_col, p_los);
  }

  // dn draws come from a per-(step, AP) stream consumed in particle order.
  Rng nlos_rng = step_rng.derive({in.ap_index});
  double dn_step = 0.0;
  if (cfg.mode == MeasurementMode::SoftClassification && cfg.nlos_draw == NlosDrawScope::PerStep)
    dn_step = nlos_rng.normal(cfg.sensing_range_m, cfg.nlos_range_std_m);

  for (std::size_t i = 0; i < n; ++i) {
    const double de = in.d_euc[i];
    if (cfg.range_gate == RangeGate::Skip && de > cfg.sensing_range_m) continue;
    std::optional<double> dz;
    switch (cfg.mode) {
      case MeasurementMode::NoClassification:
        dz = std::abs(dr - de);
        break;
      case MeasurementMode::HardClassification:
        if (p_los[i] >= 0.5) {
          dz = std::abs(dr - de);
        } else if (cfg.hard_nlos == HardNlosPolicy::ReuseLast) {
          dz = last_dz[i];
        }
        break;
      case MeasurementMode::SoftClassification: {
        const double dn = cfg.nlos_draw == NlosDrawScope::PerStep
                              ? dn_step
                              : nlos_rng.normal(cfg.sensing_range_m, cfg.nlos_range_std_m);
        const double pl = p_los[i];
        dz = pl * std::abs(dr - de) + (1.0 - pl) * std::abs(dr - dn);
        break;
      }
    }
    if (!dz) continue;
    last_dz[i] = dz;
    log_weights[i] += log_gaussian_density(*dz, in.sz);
    contributed[i] = 1;
  }
}

StepDiagnostics measurement_update(ParticleSet& particles,
                                   std::span<const RssiObservation> observations,
                                   const ApMap& ap_map, const FilterConfig& cfg,
                                   const LinkClassifier* classifier, const Rng& step_rng,
                                   const PropagationParams& params) {
  StepDiagnostics diag;
  if (cfg.mode != MeasurementMode::NoClassification && classifier == nullptr)
    throw ConfigError("classification mode requires a classifier");
  const std::size_t n = particles.size();

  // Resolve every id before touching weights.
  std::vector<std::size_t> ap_index;
  for (const auto& obs : observations) ap_index.push_back(ap_map.index_of(obs.ap_id));
  diag.observed_aps = observations.size();

  std::vector<double> log_w(n);
  for (std::size_t i = 0; i < n; ++i) log_w[i] = std::log(particles[i].weight);
  std::vector<std::optional<double>> last_dz(n);
  std::vector<double> de(n);
  std::vector<char> contributed;

  for (std::size_t k = 0; k < observations.size(); ++k) {
    const AccessPoint& ap = ap_map[ap_index[k]];
    for (std::size_t i = 0; i < n; ++i) de[i] = euclidean_distance(particles[i].pose, ap.position);
    RangeLikelihoodInput in;
    in.d_euc = de;
    in.d_fspl = fspl_distance(observations[k].rssi_dbm, ap.tx_power_dbm, ap.freq_mhz, params);
    in.sz = cfg.measurement_noise_for(ap.id);
    in.ap_index = ap_index[k];
    apply_range_likelihood(in, cfg, classifier, step_rng, log_w, last_dz, contributed);
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : log_w)
    if (v > max_log) max_log = v;
  std::vector<double> w(n, 0.0);
  if (std::isfinite(max_log)) {
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(log_w[i] - max_log);
  }
  diag.collapsed = normalize_weights(w);
  for (std::size_t i = 0; i < n; ++i) particles[i].weight = w[i];
  diag.n_eff = effective_sample_size(w);
  return diag;
}

}  // namespace wifiloc
