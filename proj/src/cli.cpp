#include "wifiloc/cli.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>

#include "text_util.hpp"
#include "wifiloc/eval.hpp"
#include "wifiloc/scan_log.hpp"

namespace wifiloc::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------- defaults

json propagation_defaults() {
  PropagationParams p;
  return {{"fspl_constant_k", p.fspl_constant_k},   {"wall_loss_db", p.wall_loss_db},
          {"shadowing_sigma_db", p.shadowing_sigma_db}, {"sensing_range_m", p.sensing_range_m},
          {"min_distance_m", p.min_distance_m},     {"doors_block_rf", p.doors_block_rf}};
}

json filter_defaults() {
  FilterConfig f;
  return {{"particles", f.num_particles},
          {"motion_noise_std", {0.4, 0.4, 0.4}},
          {"measurement_noise_std_m", f.default_measurement_noise_std_m},
          {"sensing_range_m", f.sensing_range_m},
          {"nlos_range_std_m", f.nlos_range_std_m},
          {"hard_nlos", "skip"},
          {"nlos_draw", "per_particle"},
          {"range_gate", "off"},
          {"resample", "ess"},
          {"scheme", "multinomial"},
          {"ess_fraction", f.ess_fraction}};
}

json slam_defaults() {
  SlamConfig s;
  return {{"ap_location_noise_std", {0.8, 0.8, 0.8}},
          {"prior_variance_floor", s.prior_variance_floor},
          {"joseph_form", s.joseph_form},
          {"eigen_floor", s.eigen_floor},
          {"ekf_follows_weight", s.ekf_follows_weight}};
}

json scenario_defaults() {
  ScenarioConfig s;
  return {{"step_size_m", s.walk.step_size_m},
          {"goal_bias", s.walk.goal_bias},
          {"max_steps", s.walk.max_steps},
          {"max_waypoints", s.max_waypoints},
          {"min_start_goal_m", s.min_start_goal_m},
          {"device_height_m", s.device_height_m},
          {"randomize_motion_noise", s.randomize_motion_noise},
          {"motion_noise_max_m", s.motion_noise_max_m},
          {"randomize_measurement_noise", s.randomize_measurement_noise},
          {"measurement_noise_min_m", s.measurement_noise_min_m},
          {"measurement_noise_max_m", s.measurement_noise_max_m},
          {"ap_prior_error_max_m", s.ap_prior_error_max_m},
          {"init_at_start", s.init_at_start},
          {"init_std_m", s.init_std_m}};
}

json layout_defaults() {
  OfficeLayout l;
  return {{"length_m", l.length_m},
          {"width_m", l.width_m},
          {"height_m", l.height_m},
          {"corridor_width_m", l.corridor_width_m},
          {"room_length_min_m", l.room_length_min_m},
          {"room_length_max_m", l.room_length_max_m},
          {"door_width_m", l.door_width_m},
          {"wall_thickness_m", l.wall_thickness_m}};
}

json defaults_for(const std::string& cmd) {
  if (cmd == "gen-data") {
    return {{"plan", nullptr},
            {"plans", 0},
            {"aps_per_plan", 8},
            {"ap_height_m", 1.5},
            {"save_plans", nullptr},
            {"paths", 100},
            {"seed", 0},
            {"dim", "3d"},
            {"device_height_m", 1.5},
            {"step_size_m", 2.0},
            {"goal_bias", 0.2},
            {"max_steps", 10000},
            {"max_waypoints_per_path", 200},
            {"out", "dataset.csv"},
            {"layout", layout_defaults()},
            {"propagation", propagation_defaults()}};
  }
  if (cmd == "train") {
    TrainConfig t;
    return {{"data", json::array()},
            {"arch", "D"},
            {"dims", json::array()},
            {"epochs", t.epochs},
            {"learning_rate", t.learning_rate},
            {"batch_size", t.batch_size},
            {"optimizer", "momentum"},
            {"momentum", t.momentum},
            {"adam_beta1", t.adam_beta1},
            {"adam_beta2", t.adam_beta2},
            {"adam_epsilon", t.adam_epsilon},
            {"test_fraction", t.test_fraction},
            {"max_majority_fraction", t.max_majority_fraction},
            {"init_weights", nullptr},
            {"seed", 0},
            {"out", "weights.bin"},
            {"metrics", nullptr}};
  }
  if (cmd == "run-pf" || cmd == "run-slam") {
    json j = {{"plan", nullptr},     {"mode", "nc"},  {"weights", nullptr},
              {"seed", 0},           {"dim", "2d"},   {"out", "run.csv"},
              {"scan_log_out", nullptr},
              {"filter", filter_defaults()}, {"propagation", propagation_defaults()},
              {"scenario", scenario_defaults()}};
    if (cmd == "run-slam") j["slam"] = slam_defaults();
    return j;
  }
  if (cmd == "replay") {
    json f = filter_defaults();
    f["motion_noise_std"] = {1.0, 1.0, 1.0};
    return {{"plan", nullptr},
            {"log", nullptr},
            {"ap_truth", nullptr},
            {"algorithm", "fastslam"},
            {"mode", "nc"},
            {"weights", nullptr},
            {"seed", 0},
            {"dim", "2d"},
            {"device_height_m", 1.5},
            {"init", {{"kind", "auto"}, {"center", json::array()}, {"std_m", 1.0}}},
            {"out", "replay.csv"},
            {"filter", f},
            {"slam", slam_defaults()},
            {"propagation", propagation_defaults()}};
  }
  if (cmd == "bench") {
    return {{"plan", nullptr},
            {"algorithms", {"pf"}},
            {"modes", {"nc", "hc", "sc"}},
            {"weights", nullptr},
            {"dim", "2d"},
            {"trials", 20},
            {"base_seed", 1},
            {"out", "bench"},
            {"svg", true},
            {"filter", filter_defaults()},
            {"slam", slam_defaults()},
            {"propagation", propagation_defaults()},
            {"scenario", scenario_defaults()}};
  }
  throw ValidationError("unknown subcommand '" + cmd + "'");
}

// ---------------------------------------------------------------- schema

std::string type_name(const json& v) {
  if (v.is_null()) return "null";
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned() || v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  return "object";
}

bool scalar_matches(const json& def, const json& v) {
  if (def.is_null()) return v.is_null() || v.is_string();
  if (def.is_boolean()) return v.is_boolean();
  if (def.is_number_unsigned() || def.is_number_integer())
    return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
  if (def.is_number()) return v.is_number();
  if (def.is_string()) return v.is_string();
  return false;
}

void check_schema(const json& def, const json& v, const std::string& path) {
  if (def.is_object()) {
    if (!v.is_object()) throw ValidationError("config key '" + path + "' must be an object");
    for (auto it = v.begin(); it != v.end(); ++it) {
      const std::string sub = path + "/" + it.key();
      if (!def.contains(it.key())) throw ValidationError("unknown config key '" + sub + "'");
      check_schema(def[it.key()], it.value(), sub);
    }
    return;
  }
  if (def.is_array()) {
    if (!v.is_array()) throw ValidationError("config key '" + path + "' must be an array");
    for (std::size_t i = 0; i < v.size(); ++i) {
      const bool ok = def.empty() ? (v[i].is_number() || v[i].is_string()) : scalar_matches(def[0], v[i]);
      if (!ok) throw ValidationError("config key '" + path + "' has an invalid element " + v[i].dump());
    }
    return;
  }
  if (!scalar_matches(def, v))
    throw ValidationError("config key '" + path + "' must be " +
                          (def.is_null() ? std::string("a string") : type_name(def)) + ", got " +
                          type_name(v));
}

void merge_into(json& base, const json& patch) {
  for (auto it = patch.begin(); it != patch.end(); ++it) {
    if (it.value().is_object() && base.contains(it.key()) && base[it.key()].is_object())
      merge_into(base[it.key()], it.value());
    else
      base[it.key()] = it.value();
  }
}

json flag_value(const json& def, const std::string& text, const std::string& flag) {
  auto bad = [&] { return ValidationError("invalid value '" + text + "' for " + flag); };
  auto scalar = [&](const json& d, const std::string& s) -> json {
    if (d.is_null() || d.is_string()) return s;
    if (d.is_boolean()) {
      if (s == "true" || s == "1") return true;
      if (s == "false" || s == "0") return false;
      throw bad();
    }
    if (d.is_number_unsigned() || d.is_number_integer()) {
      long long v = 0;
      if (!detail::parse_int(s, v) || v < 0) throw bad();
      return static_cast<std::uint64_t>(v);
    }
    double v = 0.0;
    if (!detail::parse_double(s, v)) throw bad();
    return v;
  };
  if (def.is_array()) {
    json arr = json::array();
    const json elem = def.empty() ? json("") : def[0];
    for (const auto& part : detail::split(text)) arr.push_back(scalar(elem, detail::trim(part)));
    return arr;
  }
  return scalar(def, text);
}

// ---------------------------------------------------------------- helpers

std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash(const std::string& path) {
  const std::string bytes = detail::read_file(path);
  return hash_hex(fnv1a64(bytes.data(), bytes.size()));
}

std::string resolve_config(const std::string& path) {
  if (fs::exists(path) || fs::path(path).is_absolute()) return path;
  if (const char* dir = std::getenv(kConfigDirEnv)) {
    const fs::path alt = fs::path(dir) / path;
    if (fs::exists(alt)) return alt.string();
  }
  return path;
}

json parse_json_file(const std::string& path) {
  const std::string text = detail::read_file(path);
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
}

Vec3 vec3(const json& j, const std::string& key) {
  if (j.size() == 1) return Vec3::Constant(j[0].get<double>());
  if (j.size() != 3) throw ValidationError("config key '" + key + "' needs 1 or 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

bool planar_of(const json& cfg) {
  const std::string d = cfg.at("dim").get<std::string>();
  if (d == "2d") return true;
  if (d == "3d") return false;
  throw ValidationError("dim must be 2d or 3d, got '" + d + "'");
}

PropagationParams propagation_from(const json& j) {
  PropagationParams p;
  p.fspl_constant_k = j.at("fspl_constant_k");
  p.wall_loss_db = j.at("wall_loss_db");
  p.shadowing_sigma_db = j.at("shadowing_sigma_db");
  p.sensing_range_m = j.at("sensing_range_m");
  p.min_distance_m = j.at("min_distance_m");
  p.doors_block_rf = j.at("doors_block_rf");
  p.validate();
  return p;
}

FilterConfig filter_from(const json& j) {
  FilterConfig f;
  f.num_particles = j.at("particles");
  f.motion_noise_std = vec3(j.at("motion_noise_std"), "filter/motion_noise_std");
  f.default_measurement_noise_std_m = j.at("measurement_noise_std_m");
  f.sensing_range_m = j.at("sensing_range_m");
  f.nlos_range_std_m = j.at("nlos_range_std_m");
  const std::string hn = j.at("hard_nlos");
  if (hn == "skip") f.hard_nlos = HardNlosPolicy::Skip;
  else if (hn == "reuse_last") f.hard_nlos = HardNlosPolicy::ReuseLast;
  else throw ValidationError("filter/hard_nlos must be skip or reuse_last");
  const std::string nd = j.at("nlos_draw");
  if (nd == "per_particle") f.nlos_draw = NlosDrawScope::PerParticle;
  else if (nd == "per_step") f.nlos_draw = NlosDrawScope::PerStep;
  else throw ValidationError("filter/nlos_draw must be per_particle or per_step");
  const std::string rg = j.at("range_gate");
  if (rg == "skip") f.range_gate = RangeGate::Skip;
  else if (rg == "off") f.range_gate = RangeGate::Off;
  else throw ValidationError("filter/range_gate must be skip or off");
  const std::string rs = j.at("resample");
  if (rs == "ess") f.resample_policy = ResamplePolicy::EssGated;
  else if (rs == "every_step") f.resample_policy = ResamplePolicy::EveryStep;
  else throw ValidationError("filter/resample must be ess or every_step");
  const std::string sc = j.at("scheme");
  if (sc == "multinomial") f.resample_scheme = ResampleScheme::Multinomial;
  else if (sc == "systematic") f.resample_scheme = ResampleScheme::Systematic;
  else throw ValidationError("filter/scheme must be multinomial or systematic");
  f.ess_fraction = j.at("ess_fraction");
  f.validate();
  return f;
}

SlamConfig slam_from(const json& j, const FilterConfig& f) {
  SlamConfig s;
  s.filter = f;
  s.ap_location_noise_std = vec3(j.at("ap_location_noise_std"), "slam/ap_location_noise_std");
  s.prior_variance_floor = j.at("prior_variance_floor");
  s.joseph_form = j.at("joseph_form");
  s.eigen_floor = j.at("eigen_floor");
  s.ekf_follows_weight = j.at("ekf_follows_weight");
  return s;
}

ScenarioConfig scenario_from(const json& j) {
  ScenarioConfig s;
  s.walk.step_size_m = j.at("step_size_m");
  s.walk.goal_bias = j.at("goal_bias");
  s.walk.max_steps = j.at("max_steps");
  s.max_waypoints = j.at("max_waypoints");
  s.min_start_goal_m = j.at("min_start_goal_m");
  s.device_height_m = j.at("device_height_m");
  s.randomize_motion_noise = j.at("randomize_motion_noise");
  s.motion_noise_max_m = j.at("motion_noise_max_m");
  s.randomize_measurement_noise = j.at("randomize_measurement_noise");
  s.measurement_noise_min_m = j.at("measurement_noise_min_m");
  s.measurement_noise_max_m = j.at("measurement_noise_max_m");
  s.ap_prior_error_max_m = j.at("ap_prior_error_max_m");
  s.init_at_start = j.at("init_at_start");
  s.init_std_m = j.at("init_std_m");
  s.validate();
  return s;
}

std::string require_path(const json& cfg, const std::string& key, const std::string& flag) {
  if (!cfg.at(key).is_string() || cfg.at(key).get<std::string>().empty())
    throw ValidationError(key + " is required (" + flag + ")");
  return cfg.at(key);
}

/// Replaces a trailing ".csv" with `suffix`, or appends it.
std::string sibling(const std::string& out, const std::string& suffix) {
  const std::string ext = ".csv";
  if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0)
    return out.substr(0, out.size() - ext.size()) + suffix;
  return out + suffix;
}

// Loaded classifier for hc/sc runs, or null for nc.
struct ClassifierHandle {
  std::unique_ptr<Mlp> mlp;
  std::unique_ptr<MlpClassifier> adapter;
  const LinkClassifier* get() const { return adapter.get(); }
};

ClassifierHandle load_classifier(const json& cfg, MeasurementMode mode, json& inputs) {
  ClassifierHandle h;
  const bool has = cfg.at("weights").is_string();
  if (mode == MeasurementMode::NoClassification) {
    if (has) inputs["weights"] = {{"path", cfg.at("weights")}, {"fnv1a64", file_hash(cfg.at("weights"))}};
    return h;
  }
  if (!has)
    throw ValidationError(std::string("--mode ") + to_string(mode) + " requires --weights");
  const std::string path = cfg.at("weights");
  inputs["weights"] = {{"path", path}, {"fnv1a64", file_hash(path)}};
  h.mlp = std::make_unique<Mlp>(load_weights(path));
  h.adapter = std::make_unique<MlpClassifier>(*h.mlp);
  return h;
}

struct Context {
  std::string command;
  json cfg;
  json manifest_inputs;  // from a loaded manifest, to verify
  std::ostream* out;
};

void write_manifest(const Context& ctx, const std::string& path, const json& inputs,
                    const std::vector<std::string>& outputs, const json& extra = json::object()) {
  json m = {{"format", 1},
            {"command", ctx.command},
            {"config", ctx.cfg},
            {"inputs", inputs},
            {"outputs", outputs}};
  if (!extra.empty()) m["run"] = extra;
  auto f = detail::open_out(path);
  f << m.dump(2) << '\n';
}

void verify_inputs(const Context& ctx, const json& inputs) {
  if (ctx.manifest_inputs.is_null()) return;
  for (auto it = ctx.manifest_inputs.begin(); it != ctx.manifest_inputs.end(); ++it) {
    if (!inputs.contains(it.key())) continue;
    if (inputs[it.key()] != it.value())
      throw ValidationError("input '" + it.key() + "' differs from the one recorded in the manifest");
  }
}

Environment load_env(const std::string& path, json& inputs, const std::string& key = "plan") {
  inputs[key] = {{"path", path}, {"fnv1a64", file_hash(path)}};
  return load_environment(path);
}

// ---------------------------------------------------------------- commands

int cmd_gen_data(Context& ctx) {
  const json& c = ctx.cfg;
  const PropagationParams params = propagation_from(c.at("propagation"));
  DatasetConfig dc;
  dc.n_paths = c.at("paths");
  dc.planar = planar_of(c);
  dc.device_height_m = c.at("device_height_m");
  dc.walk.step_size_m = c.at("step_size_m");
  dc.walk.goal_bias = c.at("goal_bias");
  dc.walk.max_steps = c.at("max_steps");
  dc.max_waypoints_per_path = c.at("max_waypoints_per_path");
  const std::uint64_t seed = c.at("seed");
  const std::size_t n_plans = c.at("plans");
  const bool have_plan = c.at("plan").is_string();
  if (have_plan == (n_plans > 0))
    throw ValidationError("give exactly one of --plan and --plans");

  json inputs = json::object();
  std::vector<Environment> envs;
  if (have_plan) {
    envs.push_back(load_env(c.at("plan"), inputs));
  } else {
    OfficeLayout lay;
    const json& l = c.at("layout");
    lay.length_m = l.at("length_m");
    lay.width_m = l.at("width_m");
    lay.height_m = l.at("height_m");
    lay.corridor_width_m = l.at("corridor_width_m");
    lay.room_length_min_m = l.at("room_length_min_m");
    lay.room_length_max_m = l.at("room_length_max_m");
    lay.door_width_m = l.at("door_width_m");
    lay.wall_thickness_m = l.at("wall_thickness_m");
    for (std::size_t k = 0; k < n_plans; ++k) {
      Rng r = Rng(seed).derive(Stream::Scenario, {k});
      envs.push_back(generate_office_environment(lay, c.at("aps_per_plan"), c.at("ap_height_m"), r));
    }
  }
  verify_inputs(ctx, inputs);

  const std::string out = c.at("out");
  std::vector<std::string> outputs{out};
  Dataset all;
  json plans = json::array();
  for (std::size_t k = 0; k < envs.size(); ++k) {
    Rng r = Rng(seed).derive(Stream::Dataset, {k});
    Dataset ds = generate_dataset(envs[k].plan, envs[k].aps, dc, params, r);
    plans.push_back({{"plan_hash", hash_hex(envs[k].plan.content_hash())},
                     {"ap_hash", hash_hex(envs[k].aps.content_hash())},
                     {"samples", ds.samples.size()},
                     {"los", ds.los_count},
                     {"nlos", ds.nlos_count}});
    all.samples.insert(all.samples.end(), ds.samples.begin(), ds.samples.end());
    all.los_count += ds.los_count;
    all.nlos_count += ds.nlos_count;
    if (c.at("save_plans").is_string()) {
      const std::string p = c.at("save_plans").get<std::string>() + "_" + std::to_string(k) + ".plan.json";
      auto f = detail::open_out(p);
      f << environment_document(envs[k]);
      outputs.push_back(p);
    }
  }
  write_dataset_csv(all.samples, out);
  const json extra = {{"seed", seed},
                      {"plans", plans},
                      {"samples", all.samples.size()},
                      {"los", all.los_count},
                      {"nlos", all.nlos_count}};
  write_manifest(ctx, manifest_path(out), inputs, outputs, extra);
  *ctx.out << "wrote " << all.samples.size() << " samples (" << all.los_count << " LOS, "
           << all.nlos_count << " NLOS) to " << out << '\n';
  return kOk;
}

int cmd_train(Context& ctx) {
  const json& c = ctx.cfg;
  if (c.at("data").empty()) throw ValidationError("data is required (--data)");
  TrainConfig tc;
  tc.epochs = c.at("epochs");
  tc.learning_rate = c.at("learning_rate");
  tc.batch_size = c.at("batch_size");
  const std::string opt = c.at("optimizer");
  if (opt == "momentum") tc.optimizer = Optimizer::Momentum;
  else if (opt == "adam") tc.optimizer = Optimizer::Adam;
  else throw ValidationError("optimizer must be momentum or adam");
  tc.momentum = c.at("momentum");
  tc.adam_beta1 = c.at("adam_beta1");
  tc.adam_beta2 = c.at("adam_beta2");
  tc.adam_epsilon = c.at("adam_epsilon");
  tc.test_fraction = c.at("test_fraction");
  tc.max_majority_fraction = c.at("max_majority_fraction");
  tc.seed = c.at("seed");
  tc.validate();

  json inputs = json::object();
  std::vector<LabeledSample> data;
  for (std::size_t k = 0; k < c.at("data").size(); ++k) {
    if (!c.at("data")[k].is_string()) throw ValidationError("data entries must be paths");
    const std::string p = c.at("data")[k];
    inputs["data" + std::to_string(k)] = {{"path", p}, {"fnv1a64", file_hash(p)}};
    Dataset ds = read_dataset_csv(p);
    data.insert(data.end(), ds.samples.begin(), ds.samples.end());
  }
  const json& init_weights = c.at("init_weights");
  if (!init_weights.is_null() && !init_weights.is_string())
    throw ValidationError("init_weights must be a path or null");
  if (init_weights.is_string())
    inputs["init_weights"] = {{"path", init_weights}, {"fnv1a64", file_hash(init_weights)}};
  verify_inputs(ctx, inputs);

  Rng init_rng = Rng(tc.seed).derive(Stream::Network);
  Mlp mlp = [&] {
    if (init_weights.is_string()) {
      if (!c.at("dims").empty()) return load_weights(init_weights.get<std::string>());
      return load_weights(init_weights.get<std::string>(), parse_architecture(c.at("arch")));
    }
    if (!c.at("dims").empty()) {
      std::vector<int> dims;
      for (const auto& d : c.at("dims")) {
        if (!d.is_number_unsigned()) throw ValidationError("dims must be positive integers");
        dims.push_back(d.get<int>());
      }
      return build_network(dims, init_rng);
    }
    return build_network(parse_architecture(c.at("arch")), init_rng);
  }();
  const TrainResult res = train(mlp, data, tc);

  const std::string out = c.at("out");
  const std::string metrics =
      c.at("metrics").is_string() ? c.at("metrics").get<std::string>() : out + ".metrics.csv";
  save_weights(mlp, out);
  write_metrics_csv(res.epochs, metrics);
  const json extra = {{"train_size", res.train_size},
                      {"test_size", res.test_size},
                      {"final_test_acc", res.final_test_acc},
                      {"parameters", mlp.parameter_count()},
                      {"weights_fnv1a64", file_hash(out)}};
  write_manifest(ctx, manifest_path(out), inputs, {out, metrics}, extra);
  *ctx.out << "trained " << mlp.parameter_count() << " parameters on " << res.train_size
           << " samples, test accuracy " << detail::fixed(100.0 * res.final_test_acc, 2) << "%\n";
  return kOk;
}

int cmd_run(Context& ctx, Algorithm algorithm) {
  const json& c = ctx.cfg;
  json inputs = json::object();
  ExperimentConfig ec;
  ec.env = load_env(require_path(c, "plan", "--plan"), inputs);
  ec.planar = planar_of(c);
  ec.algorithm = algorithm;
  ec.mode = parse_mode(c.at("mode"));
  ec.trials = 1;
  ec.base_seed = c.at("seed");
  ec.params = propagation_from(c.at("propagation"));
  const FilterConfig fc = filter_from(c.at("filter"));
  ec.slam = algorithm == Algorithm::FastSlam ? slam_from(c.at("slam"), fc) : SlamConfig{fc};
  ec.scenario = scenario_from(c.at("scenario"));
  ClassifierHandle clf = load_classifier(c, ec.mode, inputs);
  ec.validate();
  verify_inputs(ctx, inputs);

  const Scenario sc = make_scenario(ec, ec.base_seed);
  const SlamConfig scfg = scenario_filter_config(ec, sc);
  const std::uint64_t filter_seed = Rng(ec.base_seed).derive(Stream::Filter).seed();
  const std::string out = c.at("out");
  std::vector<std::string> outputs{out};
  RunResult run;
  json extra = {{"seed", ec.base_seed},
                {"filter_seed", filter_seed},
                {"plan_hash", hash_hex(ec.env.plan.content_hash())},
                {"motion_noise_std", {sc.motion_noise_std.x(), sc.motion_noise_std.y(), sc.motion_noise_std.z()}},
                {"measurement_noise_std_m", sc.measurement_noise_std_m},
                {"waypoints", sc.steps.size()}};
  if (algorithm == Algorithm::ParticleFilter) {
    run = run_particle_filter(ec.env.plan, ec.env.aps, sc.steps, scfg.filter, clf.get(),
                              filter_seed, ec.params);
  } else {
    SlamRunResult srun =
        run_fastslam(ec.env.plan, sc.prior, sc.steps, scfg, clf.get(), filter_seed, ec.params);
    const std::string aps = sibling(out, "_aps.csv");
    write_ap_csv(srun.final_map, &ec.env.aps, aps);
    outputs.push_back(aps);
    json prior = json::object();
    for (const auto& ap : sc.prior.aps())
      prior[ap.id] = {ap.position.x, ap.position.y, ap.position.z};
    extra["ap_prior"] = prior;
    run = std::move(srun);
  }
  write_run_csv(sc.steps, run, out);
  if (c.at("scan_log_out").is_string()) {
    const std::string p = c.at("scan_log_out");
    write_scan_log(from_step_inputs(sc.steps), p);
    outputs.push_back(p);
  }
  std::vector<Pose> truth;
  for (const auto& s : sc.steps) truth.push_back(*s.truth);
  const double err = rmse(truth, run.estimates);
  extra["rmse_m"] = err;
  write_manifest(ctx, manifest_path(out), inputs, outputs, extra);
  *ctx.out << to_string(algorithm) << ' ' << to_string(ec.mode) << ": " << sc.steps.size()
           << " waypoints, RMSE " << detail::fixed(err, 4) << " m\n";
  return kOk;
}

int cmd_replay(Context& ctx) {
  const json& c = ctx.cfg;
  json inputs = json::object();
  const Environment env = load_env(require_path(c, "plan", "--plan"), inputs);
  const std::string log_path = require_path(c, "log", "--log");
  inputs["log"] = {{"path", log_path}, {"fnv1a64", file_hash(log_path)}};
  std::optional<Environment> truth_env;
  if (c.at("ap_truth").is_string()) truth_env = load_env(c.at("ap_truth"), inputs, "ap_truth");
  const Algorithm algorithm = parse_algorithm(c.at("algorithm"));
  const MeasurementMode mode = parse_mode(c.at("mode"));
  ClassifierHandle clf = load_classifier(c, mode, inputs);
  verify_inputs(ctx, inputs);

  const auto records = load_scan_log(log_path);
  if (records.empty()) throw ValidationError("scan log " + log_path + " has no records");
  const std::vector<StepInput> steps = to_step_inputs(records);
  const PropagationParams params = propagation_from(c.at("propagation"));
  FilterConfig fc = filter_from(c.at("filter"));
  fc.mode = mode;
  fc.planar = planar_of(c);
  fc.plane_z = c.at("device_height_m");
  if (fc.planar) fc.motion_noise_std.z() = 0.0;

  const json& init = c.at("init");
  const std::string kind = init.at("kind");
  const Vec3 std3 = Vec3::Constant(init.at("std_m").get<double>());
  std::optional<Pose> center;
  if (!init.at("center").empty()) center = Pose::from(vec3(init.at("center"), "init/center"));
  else if (steps.front().truth) center = *steps.front().truth;
  if (kind == "uniform" || (kind == "auto" && !center)) {
    fc.init.kind = InitDistribution::Kind::Uniform;
  } else if (kind == "auto" || kind == "gaussian" || kind == "point") {
    if (!center) throw ValidationError("init/kind " + kind + " needs init/center or a logged start pose");
    fc.init.kind = kind == "point" ? InitDistribution::Kind::Point : InitDistribution::Kind::Gaussian;
    fc.init.center = *center;
    if (fc.planar) fc.init.center.z = fc.plane_z;
    fc.init.std = std3;
  } else {
    throw ValidationError("init/kind must be auto, uniform, point or gaussian");
  }

  const std::uint64_t seed = c.at("seed");
  const std::string out = c.at("out");
  std::vector<std::string> outputs{out};
  RunResult run;
  if (algorithm == Algorithm::ParticleFilter) {
    run = run_particle_filter(env.plan, env.aps, steps, fc, clf.get(), seed, params);
  } else {
    const SlamConfig scfg = slam_from(c.at("slam"), fc);
    SlamRunResult srun = run_fastslam(env.plan, env.aps, steps, scfg, clf.get(), seed, params);
    const std::string aps = sibling(out, "_aps.csv");
    write_ap_csv(srun.final_map, truth_env ? &truth_env->aps : nullptr, aps);
    outputs.push_back(aps);
    run = std::move(srun);
  }
  write_run_csv(steps, run, out);
  json extra = {{"seed", seed}, {"steps", steps.size()}};
  if (std::all_of(steps.begin(), steps.end(), [](const StepInput& s) { return s.truth.has_value(); })) {
    std::vector<Pose> truth;
    for (const auto& s : steps) truth.push_back(*s.truth);
    extra["rmse_m"] = rmse(truth, run.estimates);
  }
  write_manifest(ctx, manifest_path(out), inputs, outputs, extra);
  *ctx.out << "replayed " << steps.size() << " steps with " << to_string(algorithm) << ' '
           << to_string(mode) << '\n';
  return kOk;
}

int cmd_bench(Context& ctx) {
  const json& c = ctx.cfg;
  json inputs = json::object();
  ExperimentConfig ec;
  ec.env = load_env(require_path(c, "plan", "--plan"), inputs);
  ec.planar = planar_of(c);
  ec.trials = c.at("trials");
  ec.base_seed = c.at("base_seed");
  ec.params = propagation_from(c.at("propagation"));
  const FilterConfig fc = filter_from(c.at("filter"));
  ec.slam = slam_from(c.at("slam"), fc);
  ec.scenario = scenario_from(c.at("scenario"));

  std::vector<Algorithm> algs;
  for (const auto& a : c.at("algorithms")) algs.push_back(parse_algorithm(a.get<std::string>()));
  std::vector<MeasurementMode> modes;
  for (const auto& m : c.at("modes")) modes.push_back(parse_mode(m.get<std::string>()));
  if (algs.empty() || modes.empty()) throw ValidationError("bench needs at least one algorithm and mode");
  const bool needs_clf = std::any_of(modes.begin(), modes.end(), [](MeasurementMode m) {
    return m != MeasurementMode::NoClassification;
  });
  ClassifierHandle clf = load_classifier(
      c, needs_clf ? MeasurementMode::SoftClassification : MeasurementMode::NoClassification, inputs);
  ec.validate();
  verify_inputs(ctx, inputs);

  std::vector<ExperimentReport> reports;
  for (Algorithm a : algs)
    for (MeasurementMode m : modes) {
      ec.algorithm = a;
      ec.mode = m;
      reports.push_back(run_trials(ec, clf.get()));
      const Aggregate& s = reports.back().summary;
      *ctx.out << to_string(a) << ' ' << to_string(m) << ": mean RMSE "
               << detail::fixed(s.mean_rmse, 4) << " m over " << s.trials << " trials";
      if (s.failed) *ctx.out << " (" << s.failed << " failed)";
      *ctx.out << '\n';
    }
  const std::string prefix = c.at("out");
  ReportFormats fmt;
  fmt.svg = c.at("svg");
  const auto written = emit_report(reports, prefix, fmt);
  write_manifest(ctx, prefix + ".manifest.json", inputs, written,
                 {{"plan_hash", hash_hex(ec.env.plan.content_hash())}});
  return kOk;
}

// ---------------------------------------------------------------- flags

struct FlagSpec {
  const char* flag;
  const char* pointer;  // into the config
  const char* help;
};

std::vector<FlagSpec> flags_for(const std::string& cmd) {
  std::vector<FlagSpec> common = {{"--seed", "/seed", "random seed"},
                                  {"--out", "/out", "output path"}};
  if (cmd == "gen-data") {
    common.insert(common.end(),
                  {{"--plan", "/plan", "floor-plan document"},
                   {"--plans", "/plans", "number of office plans to generate instead of --plan"},
                   {"--aps", "/aps_per_plan", "access points per generated plan"},
                   {"--save-plans", "/save_plans", "prefix for writing generated plans"},
                   {"--paths", "/paths", "random walks per plan"},
                   {"--dim", "/dim", "2d or 3d"}});
  } else if (cmd == "train") {
    common.insert(common.end(), {{"--data", "/data", "dataset CSV(s), comma separated"},
                                 {"--arch", "/arch", "architecture A, B, C or D"},
                                 {"--epochs", "/epochs", "training epochs"},
                                 {"--lr", "/learning_rate", "learning rate"},
                                 {"--batch", "/batch_size", "mini-batch size"},
                                 {"--optimizer", "/optimizer", "momentum or adam"},
                                 {"--metrics", "/metrics", "metrics CSV path"},
                                 {"--init-weights", "/init_weights", "weights file to fine-tune"}});
  } else if (cmd == "run-pf" || cmd == "run-slam") {
    common.insert(common.end(), {{"--plan", "/plan", "floor-plan document"},
                                 {"--mode", "/mode", "nc, hc or sc"},
                                 {"--weights", "/weights", "classifier weights"},
                                 {"--dim", "/dim", "2d or 3d"},
                                 {"--particles", "/filter/particles", "particle count"},
                                 {"--waypoints", "/scenario/max_waypoints", "maximum waypoints"},
                                 {"--scan-log-out", "/scan_log_out", "write the simulated scan log"}});
  } else if (cmd == "replay") {
    common.insert(common.end(), {{"--plan", "/plan", "floor-plan document with AP priors"},
                                 {"--log", "/log", "scan log CSV"},
                                 {"--ap-truth", "/ap_truth", "floor-plan document with true AP positions"},
                                 {"--algorithm", "/algorithm", "pf or fastslam"},
                                 {"--mode", "/mode", "nc, hc or sc"},
                                 {"--weights", "/weights", "classifier weights"},
                                 {"--dim", "/dim", "2d or 3d"},
                                 {"--particles", "/filter/particles", "particle count"},
                                 {"--motion-std", "/filter/motion_noise_std", "odometry noise std, m"}});
  } else if (cmd == "bench") {
    common = {{"--plan", "/plan", "floor-plan document"},
              {"--algorithms", "/algorithms", "pf and/or fastslam, comma separated"},
              {"--modes", "/modes", "modes, comma separated"},
              {"--weights", "/weights", "classifier weights"},
              {"--dim", "/dim", "2d or 3d"},
              {"--trials", "/trials", "trial count"},
              {"--base-seed", "/base_seed", "seed of trial 0"},
              {"--particles", "/filter/particles", "particle count"},
              {"--out", "/out", "report file prefix"}};
  }
  return common;
}

const std::vector<std::string> kCommands = {"gen-data", "train", "run-pf", "run-slam", "replay", "bench"};

const std::map<std::string, std::string> kDescriptions = {
    {"gen-data", "simulate labeled LOS/NLOS ranging samples"},
    {"train", "train the LOS/NLOS classifier"},
    {"run-pf", "simulate one trial and localize with the particle filter"},
    {"run-slam", "simulate one trial and localize with FastSLAM"},
    {"replay", "run a filter over a recorded scan log"},
    {"bench", "run seeded trials across modes and write reports"}};

int run_command(const std::string& cmd, const std::optional<std::string>& config_path,
                const std::map<std::string, std::string>& flag_values, std::ostream& out) {
  Context ctx;
  ctx.command = cmd;
  ctx.out = &out;
  const json defaults = defaults_for(cmd);
  ctx.cfg = defaults;
  if (config_path) {
    json loaded = parse_json_file(resolve_config(*config_path));
    if (loaded.is_object() && loaded.contains("command") && loaded.contains("config")) {
      if (loaded["command"] != cmd)
        throw ValidationError("manifest was written by '" + loaded["command"].get<std::string>() +
                              "', not '" + cmd + "'");
      ctx.manifest_inputs = loaded.value("inputs", json::object());
      loaded = loaded["config"];
    }
    check_schema(defaults, loaded, "");
    merge_into(ctx.cfg, loaded);
  }
  for (const auto& spec : flags_for(cmd)) {
    auto it = flag_values.find(spec.flag);
    if (it == flag_values.end()) continue;
    const json::json_pointer ptr(spec.pointer);
    ctx.cfg[ptr] = flag_value(defaults.at(ptr), it->second, spec.flag);
  }
  check_schema(defaults, ctx.cfg, "");

  if (cmd == "gen-data") return cmd_gen_data(ctx);
  if (cmd == "train") return cmd_train(ctx);
  if (cmd == "run-pf") return cmd_run(ctx, Algorithm::ParticleFilter);
  if (cmd == "run-slam") return cmd_run(ctx, Algorithm::FastSlam);
  if (cmd == "replay") return cmd_replay(ctx);
  return cmd_bench(ctx);
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const ParseError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ValidationError*>(&e) ||
      dynamic_cast<const DegenerateMapError*>(&e) || dynamic_cast<const DataAssociationError*>(&e) ||
      dynamic_cast<const BoundsError*>(&e))
    return kValidation;
  return kRuntime;
}

}  // namespace

std::string default_config(const std::string& subcommand) {
  return defaults_for(subcommand).dump(2);
}

std::string manifest_path(const std::string& output) { return output + ".manifest.json"; }

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"WiFi RSSI localization with learned LOS/NLOS classification"};
  app.require_subcommand(1);
  std::map<std::string, std::map<std::string, std::string>> values;
  std::map<std::string, std::string> config_paths;
  std::map<std::string, bool> print_defaults;
  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.add_subcommand(cmd, kDescriptions.at(cmd));
    sub->add_option("--config", config_paths[cmd], "JSON config or manifest to start from");
    sub->add_flag("--print-config", print_defaults[cmd], "print the default config and exit");
    for (const auto& spec : flags_for(cmd)) sub->add_option(spec.flag, values[cmd][spec.flag], spec.help);
  }

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << '\n';
    return kUsage;
  }

  for (const auto& cmd : kCommands) {
    CLI::App* sub = app.get_subcommand(cmd);
    if (!sub->parsed()) continue;
    if (print_defaults[cmd]) {
      out << default_config(cmd) << '\n';
      return kOk;
    }
    std::map<std::string, std::string> given;
    for (const auto& spec : flags_for(cmd))
      if (sub->count(spec.flag) > 0) given[spec.flag] = values[cmd][spec.flag];
    std::optional<std::string> config;
    if (sub->count("--config") > 0) config = config_paths[cmd];
    try {
      return run_command(cmd, config, given, out);
    } catch (const Error& e) {
      err << "error: " << e.what() << '\n';
      return exit_code_for(e);
    } catch (const json::exception& e) {
      err << "error: config: " << e.what() << '\n';
      return kValidation;
    } catch (const std::exception& e) {
      err << "error: " << e.what() << '\n';
      return kRuntime;
    }
  }
  err << "usage error: no subcommand\n";
  return kUsage;
}

}  // namespace wifiloc::cli
