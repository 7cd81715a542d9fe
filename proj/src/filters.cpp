#include "wifiloc/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "text_util.hpp"

namespace wifiloc {

const char* to_string(MeasurementMode m) {
  switch (m) {
    case MeasurementMode::NoClassification: return "nc";
    case MeasurementMode::HardClassification: return "hc";
    case MeasurementMode::SoftClassification: return "sc";
  }
  return "?";
}

MeasurementMode parse_mode(const std::string& s) {
  if (s == "nc" || s == "NC") return MeasurementMode::NoClassification;
  if (s == "hc" || s == "HC") return MeasurementMode::HardClassification;
  if (s == "sc" || s == "SC") return MeasurementMode::SoftClassification;
  throw ConfigError("unknown measurement mode '" + s + "' (expected nc, hc or sc)");
}

double FilterConfig::measurement_noise_for(const std::string& ap_id) const {
  auto it = measurement_noise_std_m.find(ap_id);
  return it == measurement_noise_std_m.end() ? default_measurement_noise_std_m : it->second;
}

void FilterConfig::validate() const {
  if (num_particles < 1) throw ConfigError("num_particles must be >= 1");
  if (!(motion_noise_std.array() >= 0.0).all()) throw ConfigError("motion noise std must be >= 0");
  if (!(default_measurement_noise_std_m > 0.0)) throw ConfigError("measurement noise std must be > 0");
  for (const auto& [id, sz] : measurement_noise_std_m)
    if (!(sz > 0.0)) throw ConfigError("measurement noise std for " + id + " must be > 0");
  if (!(sensing_range_m > 0.0)) throw ConfigError("sensing range must be > 0");
  if (!(nlos_range_std_m >= 0.0)) throw ConfigError("NLOS range std must be >= 0");
  if (!(init.std.array() >= 0.0).all()) throw ConfigError("init std must be >= 0");
  if (!(ess_fraction >= 0.0 && ess_fraction <= 1.0)) throw ConfigError("ess_fraction must lie in [0, 1]");
}

ParticleSet init_particles(const FilterConfig& cfg, const FloorPlan& plan, const Rng& rng) {
  cfg.validate();
  ParticleSet out(cfg.num_particles);
  const double w = 1.0 / static_cast<double>(cfg.num_particles);
  using Kind = InitDistribution::Kind;

  std::optional<FreeSpaceSampler> sampler;
  if (cfg.init.kind == Kind::Uniform) sampler.emplace(plan, cfg.planar, cfg.plane_z);

  for (std::size_t i = 0; i < out.size(); ++i) {
    Rng r = rng.derive(Stream::Init, {i});
    Pose p = cfg.init.center;
    switch (cfg.init.kind) {
      case Kind::Uniform:
        p = sampler->sample(r);
        break;
      case Kind::Point:
        break;
      case Kind::Gaussian:
        // Rejection onto free space; falls back to the center.
        for (int attempt = 0; attempt < 1000; ++attempt) {
          Pose q{r.normal(cfg.init.center.x, cfg.init.std.x()),
                 r.normal(cfg.init.center.y, cfg.init.std.y()),
                 cfg.planar ? cfg.init.center.z : r.normal(cfg.init.center.z, cfg.init.std.z())};
          if (plan.contains(q) && !plan.occupied(plan.cell_of(q))) {
            p = q;
            break;
          }
        }
        break;
    }
    if (cfg.planar) p.z = cfg.init.kind == Kind::Uniform ? cfg.plane_z : p.z;
    out[i] = {p, w};
  }
  return out;
}

Pose motion_sample(const Pose& x_prev, const MotionCommand& u, const FilterConfig& cfg, Rng& rng) {
  return {x_prev.x + u.dx + rng.normal(0.0, cfg.motion_noise_std.x()),
          x_prev.y + u.dy + rng.normal(0.0, cfg.motion_noise_std.y()),
          x_prev.z + u.dz + (cfg.planar ? 0.0 : rng.normal(0.0, cfg.motion_noise_std.z()))};
}

bool normalize_weights(std::span<double> weights) {
  double total = 0.0;
  bool finite = true;
  for (double w : weights) {
    if (!std::isfinite(w) || w < 0.0) finite = false;
    total += w;
  }
  if (!finite || !(total > 0.0) || !std::isfinite(total)) {
    const double u = weights.empty() ? 0.0 : 1.0 / static_cast<double>(weights.size());
    std::fill(weights.begin(), weights.end(), u);
    return true;
  }
  for (double& w : weights) w /= total;
  return false;
}

bool normalize_weights(ParticleSet& particles) {
  std::vector<double> w(particles.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = particles[i].weight;
  const bool collapsed = normalize_weights(w);
  for (std::size_t i = 0; i < w.size(); ++i) particles[i].weight = w[i];
  return collapsed;
}

double effective_sample_size(std::span<const double> weights) {
  double sq = 0.0;
  for (double w : weights) sq += w * w;
  return sq > 0.0 ? 1.0 / sq : 0.0;
}

std::vector<std::size_t> resample_indices(std::span<const double> weights, ResampleScheme scheme,
                                          Rng& rng) {
  const std::size_t n = weights.size();
  std::vector<double> cdf(n);
  std::partial_sum(weights.begin(), weights.end(), cdf.begin());
  const double total = n ? cdf.back() : 0.0;
  std::vector<std::size_t> idx(n);
  auto pick = [&](double u) {
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    auto k = static_cast<std::size_t>(it - cdf.begin());
    // Never land on a zero-weight tail past the last positive entry.
    k = std::min(k, n - 1);
    while (k > 0 && weights[k] <= 0.0) --k;
    return k;
  };
  if (scheme == ResampleScheme::Multinomial) {
    for (std::size_t m = 0; m < n; ++m) idx[m] = pick(rng.uniform(0.0, total));
  } else {
    const double step = total / static_cast<double>(n);
    const double r = rng.uniform(0.0, step);
    for (std::size_t m = 0; m < n; ++m) idx[m] = pick(r + static_cast<double>(m) * step);
  }
  return idx;
}

ParticleSet resample(const ParticleSet& particles, Rng& rng, ResampleScheme scheme) {
  std::vector<double> w(particles.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = particles[i].weight;
  const auto idx = resample_indices(w, scheme, rng);
  ParticleSet out(particles.size());
  const double u = particles.empty() ? 0.0 : 1.0 / static_cast<double>(particles.size());
  for (std::size_t m = 0; m < idx.size(); ++m) out[m] = {particles[idx[m]].pose, u};
  return out;
}

Pose estimate_pose(const ParticleSet& particles) {
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (const auto& p : particles) {
    acc += p.weight * p.pose.vec();
    total += p.weight;
  }
  return total > 0.0 ? Pose::from(acc / total) : Pose{};
}

RunResult run_particle_filter(const FloorPlan& plan, const ApMap& ap_map,
                              std::span<const StepInput> steps, const FilterConfig& cfg,
                              const LinkClassifier* classifier, std::uint64_t seed,
                              const PropagationParams& params, const RunOptions& opts) {
  if (cfg.mode != MeasurementMode::NoClassification && classifier == nullptr)
    throw ConfigError("classification mode requires a classifier");
  const Rng root(seed);
  ParticleSet particles = init_particles(cfg, plan, root);

  RunResult run;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const StepInput& in = steps[t];
    if (t > 0) {
      for (std::size_t i = 0; i < particles.size(); ++i) {
        Rng r = root.derive(Stream::Motion, {t, i});
        particles[i].pose = motion_sample(particles[i].pose, in.command, cfg, r);
      }
    }
    StepDiagnostics d = measurement_update(particles, in.observations, ap_map, cfg, classifier,
                                           root.derive(Stream::NlosRange, {t}), params);
    d.step = t;
    if (opts.keep_weight_history) {
      std::vector<double> w(particles.size());
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = particles[i].weight;
      run.weight_history.push_back(std::move(w));
    }
    run.estimates.push_back(estimate_pose(particles));
    if (cfg.resample_policy == ResamplePolicy::EveryStep ||
        d.n_eff < cfg.ess_fraction * static_cast<double>(particles.size())) {
      Rng r = root.derive(Stream::Resample, {t});
      particles = resample(particles, r, cfg.resample_scheme);
      d.resampled = true;
    }
    run.diagnostics.push_back(d);
  }
  return run;
}

void write_run_csv(std::span<const StepInput> steps, const RunResult& run, const std::string& path) {
  auto out = detail::open_out(path);
  out << "step,gt_x,gt_y,gt_z,est_x,est_y,est_z,err_m,n_eff\n";
  for (std::size_t t = 0; t < run.estimates.size(); ++t) {
    const Pose& e = run.estimates[t];
    out << t << ',';
    const auto& gt = t < steps.size() ? steps[t].truth : std::nullopt;
    if (gt) {
      out << detail::fixed(gt->x) << ',' << detail::fixed(gt->y) << ',' << detail::fixed(gt->z) << ',';
    } else {
      out << ",,,";
    }
    out << detail::fixed(e.x) << ',' << detail::fixed(e.y) << ',' << detail::fixed(e.z) << ',';
    if (gt) out << detail::fixed(euclidean_distance(*gt, e));
    out << ',' << detail::fixed(run.diagnostics[t].n_eff, 3) << '\n';
  }
}

}  // namespace wifiloc
