#include "wifiloc/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace wifiloc {

double rmse(std::span<const Pose> truth, std::span<const Pose> estimate) {
  if (truth.size() != estimate.size())
    throw AlignmentError("trajectory lengths differ: " + std::to_string(truth.size()) + " vs " +
                         std::to_string(estimate.size()));
  if (truth.empty()) throw AlignmentError("empty trajectories");
  double sq = 0.0;
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const double e = euclidean_distance(truth[k], estimate[k]);
    sq += e * e;
  }
  return std::sqrt(sq / static_cast<double>(truth.size()));
}

double rmse(const Trajectory& truth, const Trajectory& estimate) {
  return rmse(std::span<const Pose>(truth.waypoints), std::span<const Pose>(estimate.waypoints));
}

const char* to_string(Algorithm a) {
  return a == Algorithm::ParticleFilter ? "pf" : "fastslam";
}

Algorithm parse_algorithm(const std::string& s) {
  if (s == "pf" || s == "PF") return Algorithm::ParticleFilter;
  if (s == "fastslam" || s == "FS" || s == "fs") return Algorithm::FastSlam;
  throw ConfigError("unknown algorithm '" + s + "' (expected pf or fastslam)");
}

void ScenarioConfig::validate() const {
  if (!(walk.step_size_m > 0.0)) throw ConfigError("scenario step size must be > 0");
  if (max_waypoints < 2) throw ConfigError("scenario needs at least 2 waypoints");
  if (!(motion_noise_max_m >= 0.0)) throw ConfigError("motion noise max must be >= 0");
  if (!(measurement_noise_min_m > 0.0 && measurement_noise_max_m >= measurement_noise_min_m))
    throw ConfigError("measurement noise range must satisfy 0 < min <= max");
  if (!(ap_prior_error_max_m >= 0.0)) throw ConfigError("AP prior error must be >= 0");
  if (!(init_std_m >= 0.0)) throw ConfigError("init std must be >= 0");
}

void ExperimentConfig::validate() const {
  if (trials < 1) throw ConfigError("trial count must be >= 1");
  if (env.aps.empty()) throw ConfigError("experiment environment has no access points");
  scenario.validate();
  slam.filter.validate();
  params.validate();
}

Scenario make_scenario(const ExperimentConfig& cfg, std::uint64_t trial_seed) {
  const Rng root = Rng(trial_seed).derive(Stream::Scenario);
  const ScenarioConfig& s = cfg.scenario;
  const FloorPlan& plan = cfg.env.plan;
  Scenario sc;

  Rng noise_rng = root.derive({1});
  sc.motion_noise_std = Vec3::Constant(s.motion_noise_max_m);
  if (s.randomize_motion_noise)
    for (int a = 0; a < 3; ++a) sc.motion_noise_std[a] = noise_rng.uniform() * s.motion_noise_max_m;
  if (cfg.planar) sc.motion_noise_std.z() = 0.0;

  Rng sz_rng = root.derive({2});
  for (const auto& ap : cfg.env.aps.aps()) {
    const double sz = s.randomize_measurement_noise
                          ? sz_rng.uniform(s.measurement_noise_min_m, s.measurement_noise_max_m)
                          : s.measurement_noise_min_m;
    sc.measurement_noise_std_m[ap.id] = sz;
  }

  Rng prior_rng = root.derive({3});
  for (const auto& ap : cfg.env.aps.aps()) {
    AccessPoint p = ap;
    const double e = s.ap_prior_error_max_m;
    p.position.x += prior_rng.uniform(-e, e);
    p.position.y += prior_rng.uniform(-e, e);
    const double dz = prior_rng.uniform(-e, e);
    if (!cfg.planar) p.position.z += dz;
    sc.prior.add(p);
  }

  // Start and goal far enough apart to make the walk cross the floor.
  Rng pose_rng = root.derive({4});
  FreeSpaceSampler sampler(plan, cfg.planar, s.device_height_m);
  Pose start = sampler.sample(pose_rng);
  Pose goal = sampler.sample(pose_rng);
  for (int attempt = 0; attempt < 1000 && euclidean_distance(start, goal) < s.min_start_goal_m;
       ++attempt)
    goal = sampler.sample(pose_rng);
  sc.start = start;

  WalkConfig walk = s.walk;
  walk.planar = cfg.planar;
  walk.motion_noise_std = sc.motion_noise_std;
  Rng walk_rng = root.derive({5});
  try {
    sc.truth = random_walk(plan, start, goal, walk, walk_rng);
  } catch (const WalkTimeout& e) {
    sc.truth = e.partial();
  }
  if (sc.truth.waypoints.size() > s.max_waypoints) {
    sc.truth.waypoints.resize(s.max_waypoints);
    sc.truth.commands.resize(s.max_waypoints - 1);
  }

  for (std::size_t t = 0; t < sc.truth.waypoints.size(); ++t) {
    StepInput in;
    if (t > 0) in.command = sc.truth.commands[t - 1];
    Rng obs_rng = root.derive({6, t});
    in.observations = observe(plan, sc.truth.waypoints[t], cfg.env.aps, cfg.params, obs_rng, t);
    in.truth = sc.truth.waypoints[t];
    sc.steps.push_back(std::move(in));
  }
  return sc;
}

SlamConfig scenario_filter_config(const ExperimentConfig& cfg, const Scenario& sc) {
  SlamConfig out = cfg.slam;
  FilterConfig& f = out.filter;
  f.mode = cfg.mode;
  f.planar = cfg.planar;
  f.plane_z = cfg.scenario.device_height_m;
  f.motion_noise_std = sc.motion_noise_std;
  f.measurement_noise_std_m = sc.measurement_noise_std_m;
  if (cfg.scenario.init_at_start) {
    f.init.kind = cfg.scenario.init_std_m > 0.0 ? InitDistribution::Kind::Gaussian
                                                : InitDistribution::Kind::Point;
    f.init.center = sc.start;
    f.init.std = Vec3::Constant(cfg.scenario.init_std_m);
  } else {
    f.init.kind = InitDistribution::Kind::Uniform;
  }
  return out;
}

double TrialReport::mean_initial_ap_error() const {
  if (ap_initial_error_m.empty()) return 0.0;
  return std::accumulate(ap_initial_error_m.begin(), ap_initial_error_m.end(), 0.0) /
         static_cast<double>(ap_initial_error_m.size());
}

double TrialReport::mean_final_ap_error() const {
  if (ap_final_error_m.empty()) return 0.0;
  return std::accumulate(ap_final_error_m.begin(), ap_final_error_m.end(), 0.0) /
         static_cast<double>(ap_final_error_m.size());
}

namespace {

// Mean-map error per prior AP; an AP missing from the estimate keeps its
// prior position.
std::vector<double> map_errors(const ApMap& truth, const ApMap& prior,
                               std::span<const MapEstimate> est) {
  std::vector<double> out;
  for (std::size_t j = 0; j < prior.size(); ++j) {
    const std::string& id = prior[j].id;
    Vec3 pos = prior[j].position.vec();
    for (const auto& e : est)
      if (e.ap_id == id) pos = e.mean;
    out.push_back((truth.at(id).position.vec() - pos).norm());
  }
  return out;
}

}  // namespace

TrialReport run_trial(const ExperimentConfig& cfg, std::size_t trial,
                      const LinkClassifier* classifier) {
  const auto t0 = std::chrono::steady_clock::now();
  TrialReport rep;
  rep.trial = trial;
  rep.seed = cfg.base_seed + trial;
  try {
    const Scenario sc = make_scenario(cfg, rep.seed);
    const SlamConfig scfg = scenario_filter_config(cfg, sc);
    const std::uint64_t filter_seed = Rng(rep.seed).derive(Stream::Filter).seed();
    RunResult run;
    if (cfg.algorithm == Algorithm::ParticleFilter) {
      run = run_particle_filter(cfg.env.plan, cfg.env.aps, sc.steps, scfg.filter, classifier,
                                filter_seed, cfg.params);
    } else {
      SlamRunResult srun = run_fastslam(cfg.env.plan, sc.prior, sc.steps, scfg, classifier,
                                        filter_seed, cfg.params);
      for (const auto& ap : sc.prior.aps()) rep.ap_ids.push_back(ap.id);
      // The initial error is that of the prior map itself.
      rep.ap_initial_error_m = map_errors(cfg.env.aps, sc.prior, {});
      rep.ap_final_error_m = map_errors(cfg.env.aps, sc.prior, srun.final_map);
      run = std::move(srun);
    }
    rep.truth = sc.truth.waypoints;
    rep.estimates = run.estimates;
    for (std::size_t k = 0; k < rep.truth.size(); ++k) {
      if (!rep.estimates[k].finite()) throw DomainError("non-finite pose estimate at step " + std::to_string(k));
      rep.waypoint_errors_m.push_back(euclidean_distance(rep.truth[k], rep.estimates[k]));
    }
    rep.rmse_m = rmse(rep.truth, rep.estimates);
  } catch (const Error& e) {
    rep.failed = true;
    rep.failure = e.what();
  }
  rep.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

Aggregate aggregate(std::span<const TrialReport> trials) {
  Aggregate a;
  std::vector<double> v;
  for (const auto& t : trials) {
    if (t.failed) {
      ++a.failed;
      continue;
    }
    v.push_back(t.rmse_m);
  }
  a.trials = v.size();
  if (v.empty()) return a;
  a.mean_rmse = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - a.mean_rmse) * (x - a.mean_rmse);
  a.std_rmse = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
  a.min_rmse = *std::min_element(v.begin(), v.end());
  a.max_rmse = *std::max_element(v.begin(), v.end());
  return a;
}

ExperimentReport run_trials(const ExperimentConfig& cfg, const LinkClassifier* classifier) {
  cfg.validate();
  if (cfg.mode != MeasurementMode::NoClassification && classifier == nullptr)
    throw ConfigError("classification mode requires a classifier");
  ExperimentReport rep;
  rep.algorithm = cfg.algorithm;
  rep.mode = cfg.mode;
  rep.planar = cfg.planar;
  for (std::size_t k = 0; k < cfg.trials; ++k) rep.trials.push_back(run_trial(cfg, k, classifier));
  rep.summary = aggregate(rep.trials);
  return rep;
}

}  // namespace wifiloc
