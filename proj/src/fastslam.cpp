#include "wifiloc/fastslam.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <utility>

#include "text_util.hpp"

namespace wifiloc {

const LandmarkEkf* SlamParticle::find(const std::string& id) const {
  auto it = std::lower_bound(landmarks.begin(), landmarks.end(), id,
                             [](const LandmarkEkf& l, const std::string& k) { return l.ap_id < k; });
  return it != landmarks.end() && it->ap_id == id ? &*it : nullptr;
}

LandmarkEkf* SlamParticle::find(const std::string& id) {
  return const_cast<LandmarkEkf*>(std::as_const(*this).find(id));
}

namespace {

void insert_sorted(std::vector<LandmarkEkf>& v, LandmarkEkf lm) {
  auto it = std::lower_bound(v.begin(), v.end(), lm.ap_id,
                             [](const LandmarkEkf& l, const std::string& k) { return l.ap_id < k; });
  v.insert(it, std::move(lm));
}

std::uint64_t id_key(const std::string& id) { return fnv1a64(id.data(), id.size()); }

}  // namespace

LandmarkEkf init_landmark(const std::string& ap_id, const Pose& prior, const Vec3& noise_std,
                          Rng& rng, double variance_floor) {
  if (!(noise_std.array() >= 0.0).all()) throw ConfigError("AP location noise std must be >= 0");
  LandmarkEkf lm;
  lm.ap_id = ap_id;
  lm.mean = prior.vec();
  for (int a = 0; a < 3; ++a) {
    lm.mean[a] += rng.normal(0.0, noise_std[a]);
    lm.cov(a, a) = std::max(noise_std[a] * noise_std[a], variance_floor);
  }
  return lm;
}

EkfUpdate ekf_range_update(const LandmarkEkf& lm, const Pose& pose, double dr, double sz,
                           const SlamConfig& cfg) {
  if (!(sz > 0.0)) throw DomainError("EKF range update needs sz > 0");
  EkfUpdate out{lm, 0.0, 0.0, false};
  const Vec3 d = lm.mean - pose.vec();
  const double h = d.norm();
  if (h < cfg.min_range_m) {
    out.skipped = true;
    return out;
  }
  const Eigen::RowVector3d H = d.transpose() / h;
  const Mat3& P = lm.cov;
  const Vec3 PHt = P * H.transpose();
  const double S = H.dot(PHt) + sz * sz;
  const Vec3 K = PHt / S;
  const double nu = dr - h;

  out.innovation = nu;
  out.innovation_var = S;
  out.landmark.mean = lm.mean + K * nu;

  const Mat3 IKH = Mat3::Identity() - K * H;
  Mat3 Pn = cfg.joseph_form ? Mat3(IKH * P * IKH.transpose() + (sz * sz) * K * K.transpose())
                            : Mat3(IKH * P);
  Pn = 0.5 * (Pn + Pn.transpose());
  if (!Pn.isZero(0.0)) {
    Eigen::SelfAdjointEigenSolver<Mat3> es;
    es.computeDirect(Pn);
    if (es.eigenvalues().minCoeff() < 0.0) {
      const Vec3 ev = es.eigenvalues().cwiseMax(cfg.eigen_floor);
      Pn = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
      Pn = 0.5 * (Pn + Pn.transpose());
    }
  }
  out.landmark.cov = Pn;
  return out;
}

SlamParticleSet init_slam_particles(const SlamConfig& cfg, const FloorPlan& plan,
                                    const ApMap& prior, const Rng& rng) {
  const ParticleSet poses = init_particles(cfg.filter, plan, rng);
  SlamParticleSet out(poses.size());
  for (std::size_t i = 0; i < poses.size(); ++i) {
    out[i].pose = poses[i].pose;
    out[i].weight = poses[i].weight;
    for (std::size_t j = 0; j < prior.size(); ++j) {
      Rng r = rng.derive(Stream::Landmark, {i, j});
      Vec3 noise = cfg.ap_location_noise_std;
      if (cfg.filter.planar) noise.z() = 0.0;
      insert_sorted(out[i].landmarks,
                    init_landmark(prior[j].id, prior[j].position, noise, r, cfg.prior_variance_floor));
    }
  }
  return out;
}

SlamStepDiagnostics fastslam_step(SlamParticleSet& particles, const MotionCommand* command,
                                  std::span<const RssiObservation> observations,
                                  const ApMap& prior, const SlamConfig& cfg,
                                  const LinkClassifier* classifier, const Rng& root,
                                  std::size_t step, const PropagationParams& params,
                                  std::vector<double>* weights_out) {
  const FilterConfig& fc = cfg.filter;
  if (fc.mode != MeasurementMode::NoClassification && classifier == nullptr)
    throw ConfigError("classification mode requires a classifier");
  SlamStepDiagnostics diag;
  diag.step = step;
  diag.observed_aps = observations.size();
  const std::size_t n = particles.size();

  if (command) {
    for (std::size_t i = 0; i < n; ++i) {
      Rng r = root.derive(Stream::Motion, {step, i});
      particles[i].pose = motion_sample(particles[i].pose, *command, fc, r);
    }
  }

  const Rng nlos_rng = root.derive(Stream::NlosRange, {step});
  std::vector<double> log_w(n);
  for (std::size_t i = 0; i < n; ++i) log_w[i] = std::log(particles[i].weight);
  std::vector<std::optional<double>> last_dz(n);
  std::vector<double> de(n);
  std::vector<char> contributed;

  for (const auto& obs : observations) {
    const auto prior_idx = prior.find(obs.ap_id);
    double tx = 0.0;
    double freq = 2400.0;
    if (prior_idx) {
      tx = prior[*prior_idx].tx_power_dbm;
      freq = prior[*prior_idx].freq_mhz;
    }
    const double dr = fspl_distance(obs.rssi_dbm, tx, freq, params);
    const std::uint64_t key = prior_idx ? *prior_idx : id_key(obs.ap_id);

    for (std::size_t i = 0; i < n; ++i) {
      SlamParticle& p = particles[i];
      if (!p.find(obs.ap_id)) {
        LandmarkEkf lm;
        if (prior_idx) {
          Rng r = root.derive(Stream::Landmark, {i, *prior_idx});
          Vec3 noise = cfg.ap_location_noise_std;
          if (fc.planar) noise.z() = 0.0;
          lm = init_landmark(obs.ap_id, prior[*prior_idx].position, noise, r, cfg.prior_variance_floor);
        } else {
          // Unknown AP: somewhere on the range ring around this particle.
          Rng r = root.derive(Stream::Bootstrap, {step, i, key});
          Vec3 dir;
          if (fc.planar) {
            const double th = r.uniform(0.0, 2.0 * std::numbers::pi);
            dir = Vec3(std::cos(th), std::sin(th), 0.0);
          } else {
            do {
              dir = Vec3(r.normal(), r.normal(), r.normal());
            } while (dir.norm() < 1e-12);
            dir.normalize();
          }
          lm.ap_id = obs.ap_id;
          lm.mean = p.pose.vec() + dr * dir;
          const double var = 0.25 * dr * dr;
          lm.cov = Vec3(var, var, fc.planar ? 0.0 : var).asDiagonal();
        }
        insert_sorted(p.landmarks, std::move(lm));
        ++diag.bootstrapped;
      }
      de[i] = (p.find(obs.ap_id)->mean - p.pose.vec()).norm();
    }

    RangeLikelihoodInput in;
    in.d_euc = de;
    in.d_fspl = dr;
    in.sz = fc.measurement_noise_for(obs.ap_id);
    in.ap_index = key;
    apply_range_likelihood(in, fc, classifier, nlos_rng, log_w, last_dz, contributed);

    for (std::size_t i = 0; i < n; ++i) {
      if (cfg.ekf_follows_weight && !contributed[i]) continue;
      LandmarkEkf* lm = particles[i].find(obs.ap_id);
      EkfUpdate u = ekf_range_update(*lm, particles[i].pose, dr, in.sz, cfg);
      if (u.skipped) ++diag.skipped_updates;
      *lm = std::move(u.landmark);
    }
  }

  double max_log = -std::numeric_limits<double>::infinity();
  for (double v : log_w) max_log = std::max(max_log, v);
  std::vector<double> w(n, 0.0);
  if (std::isfinite(max_log))
    for (std::size_t i = 0; i < n; ++i) w[i] = std::exp(log_w[i] - max_log);
  diag.collapsed = normalize_weights(w);
  for (std::size_t i = 0; i < n; ++i) particles[i].weight = w[i];
  diag.n_eff = effective_sample_size(w);
  diag.estimate = estimate_pose(particles);
  if (weights_out) *weights_out = w;

  if (fc.resample_policy == ResamplePolicy::EveryStep ||
      diag.n_eff < fc.ess_fraction * static_cast<double>(n)) {
    Rng r = root.derive(Stream::Resample, {step});
    const auto idx = resample_indices(w, fc.resample_scheme, r);
    SlamParticleSet next;
    next.reserve(n);
    const double u = 1.0 / static_cast<double>(n);
    for (std::size_t k : idx) {
      next.push_back(particles[k]);
      next.back().weight = u;
    }
    particles = std::move(next);
    diag.resampled = true;
  }
  return diag;
}

std::vector<MapEstimate> map_estimate(const SlamParticleSet& particles) {
  struct Acc {
    double w = 0.0;
    Vec3 m = Vec3::Zero();
    double tr = 0.0;
  };
  std::map<std::string, Acc> acc;
  for (const auto& p : particles) {
    for (const auto& lm : p.landmarks) {
      Acc& a = acc[lm.ap_id];
      a.w += p.weight;
      a.m += p.weight * lm.mean;
      a.tr += p.weight * lm.cov.trace();
    }
  }
  std::vector<MapEstimate> out;
  for (auto& [id, a] : acc) {
    MapEstimate e;
    e.ap_id = id;
    if (a.w > 0.0) {
      e.mean = a.m / a.w;
      e.trace_cov = a.tr / a.w;
    }
    out.push_back(e);
  }
  // Spread needs the means, so second pass.
  for (auto& e : out) {
    double w = 0.0;
    double s = 0.0;
    for (const auto& p : particles) {
      if (const auto* lm = p.find(e.ap_id)) {
        w += p.weight;
        s += p.weight * (lm->mean - e.mean).squaredNorm();
      }
    }
    e.spread_m = w > 0.0 ? std::sqrt(s / w) : 0.0;
  }
  return out;
}

Pose estimate_pose(const SlamParticleSet& particles) {
  Vec3 acc = Vec3::Zero();
  double total = 0.0;
  for (const auto& p : particles) {
    acc += p.weight * p.pose.vec();
    total += p.weight;
  }
  return total > 0.0 ? Pose::from(acc / total) : Pose{};
}

SlamRunResult run_fastslam(const FloorPlan& plan, const ApMap& prior,
                           std::span<const StepInput> steps, const SlamConfig& cfg,
                           const LinkClassifier* classifier, std::uint64_t seed,
                           const PropagationParams& params, const RunOptions& opts) {
  const Rng root(seed);
  SlamParticleSet particles = init_slam_particles(cfg, plan, prior, root);
  SlamRunResult run;
  run.initial_map = map_estimate(particles);
  for (std::size_t t = 0; t < steps.size(); ++t) {
    const MotionCommand* u = t > 0 ? &steps[t].command : nullptr;
    std::vector<double> w;
    SlamStepDiagnostics d = fastslam_step(particles, u, steps[t].observations, prior, cfg,
                                          classifier, root, t, params,
                                          opts.keep_weight_history ? &w : nullptr);
    if (opts.keep_weight_history) run.weight_history.push_back(std::move(w));
    run.estimates.push_back(d.estimate);
    run.diagnostics.push_back(d);
  }
  run.final_map = map_estimate(particles);
  return run;
}

void write_ap_csv(std::span<const MapEstimate> estimates, const ApMap* truth,
                  const std::string& path) {
  auto out = detail::open_out(path);
  out << "ap_id,true_x,true_y,true_z,est_x,est_y,est_z,err_m,trace_cov\n";
  for (const auto& e : estimates) {
    out << e.ap_id << ',';
    std::optional<std::size_t> idx = truth ? truth->find(e.ap_id) : std::nullopt;
    if (idx) {
      const Pose& p = (*truth)[*idx].position;
      out << detail::fixed(p.x) << ',' << detail::fixed(p.y) << ',' << detail::fixed(p.z) << ',';
    } else {
      out << ",,,";
    }
    out << detail::fixed(e.mean.x()) << ',' << detail::fixed(e.mean.y()) << ','
        << detail::fixed(e.mean.z()) << ',';
    if (idx) out << detail::fixed(((*truth)[*idx].position.vec() - e.mean).norm());
    out << ',' << detail::fixed(e.trace_cov) << '\n';
  }
}

}  // namespace wifiloc
