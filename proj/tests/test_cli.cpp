#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <cstdlib>
#include <map>

#include "test_util.hpp"
#include "wifiloc/cli.hpp"

using namespace wifiloc;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::dispatch(args, out, err);
  return {code, out.str(), err.str()};
}

const std::string kPlan = WIFILOC_DATA_DIR "/office.plan.json";

// Output files listed in a manifest, by content.
std::map<std::string, std::string> outputs_of(const fs::path& manifest) {
  const auto m = nlohmann::json::parse(test::slurp(manifest));
  std::map<std::string, std::string> files;
  for (const auto& p : m.at("outputs")) files[p.get<std::string>()] = test::slurp(p.get<std::string>());
  return files;
}

// Re-runs a command from its manifest and checks every output is byte-identical.
void expect_rerun_identical(const std::string& cmd, const fs::path& manifest) {
  const auto before = outputs_of(manifest);
  ASSERT_FALSE(before.empty());
  for (const auto& [path, bytes] : before) fs::remove(path);
  const std::string manifest_bytes = test::slurp(manifest);
  const Result r = run({cmd, "--config", manifest.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const auto& [path, bytes] : before) EXPECT_EQ(test::slurp(path), bytes) << path;
  EXPECT_EQ(test::slurp(manifest), manifest_bytes);
}

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli_pipeline");
    const Result g = run({"gen-data", "--plan", kPlan, "--paths", "4", "--seed", "3", "--dim", "2d",
                          "--out", (dir_ / "d.csv").string()});
    ASSERT_EQ(g.code, 0) << g.err;
    const Result t = run({"train", "--data", (dir_ / "d.csv").string(), "--arch", "A", "--epochs",
                          "2", "--seed", "4", "--out", (dir_ / "w.bin").string()});
    ASSERT_EQ(t.code, 0) << t.err;
  }
  static fs::path dir_;
};

fs::path Pipeline::dir_;

}  // namespace

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run({}).code, 2);
  EXPECT_EQ(run({"fly"}).code, 2);
  EXPECT_EQ(run({"run-pf", "--bogus", "1"}).code, 2);
  EXPECT_EQ(run({"run-pf", "--particles"}).code, 2);
}

TEST(Cli, PrintConfigShowsDefaults) {
  for (const char* cmd : {"gen-data", "train", "run-pf", "run-slam", "replay", "bench"}) {
    const Result r = run({cmd, "--print-config"});
    ASSERT_EQ(r.code, 0) << cmd;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_TRUE(j.contains("out")) << cmd;
    EXPECT_EQ(r.out, cli::default_config(cmd) + "\n");
  }
  const auto bench = nlohmann::json::parse(cli::default_config("bench"));
  EXPECT_EQ(bench.at("trials"), 20);
  EXPECT_EQ(bench.at("filter").at("particles"), 3000);
}

TEST(Cli, ValidationErrors) {
  const auto dir = test::scratch_dir("cli_validation");
  EXPECT_EQ(run({"run-pf", "--plan", kPlan, "--mode", "hc", "--out", (dir / "r.csv").string()}).code, 3);
  EXPECT_EQ(run({"run-pf", "--plan", kPlan, "--mode", "xx"}).code, 3);
  EXPECT_EQ(run({"run-pf", "--plan", kPlan, "--particles", "many"}).code, 3);
  EXPECT_EQ(run({"run-pf", "--plan", kPlan, "--particles", "0"}).code, 3);
  EXPECT_EQ(run({"run-pf"}).code, 3);
  EXPECT_EQ(run({"gen-data", "--plan", kPlan, "--plans", "2"}).code, 3);
  EXPECT_EQ(run({"gen-data", "--plan", kPlan, "--dim", "4d"}).code, 3);

  test::spit(dir / "unknown.json", R"({"filter": {"partcles": 10}})");
  const Result u = run({"run-pf", "--config", (dir / "unknown.json").string()});
  EXPECT_EQ(u.code, 3);
  EXPECT_NE(u.err.find("/filter/partcles"), std::string::npos);
  test::spit(dir / "type.json", R"({"trials": "many"})");
  EXPECT_EQ(run({"bench", "--config", (dir / "type.json").string()}).code, 3);
  test::spit(dir / "broken.json", R"({"trials": )");
  EXPECT_EQ(run({"bench", "--config", (dir / "broken.json").string()}).code, 3);
  test::spit(dir / "bad.plan.json", R"({"format": 1})");
  EXPECT_EQ(run({"run-pf", "--plan", (dir / "bad.plan.json").string()}).code, 3);
}

TEST(Cli, RuntimeErrors) {
  const auto dir = test::scratch_dir("cli_runtime");
  const Result r = run({"run-pf", "--plan", (dir / "missing.json").string()});
  EXPECT_EQ(r.code, 4);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, ConfigDirectoryFromEnvironment) {
  const auto dir = test::scratch_dir("cli_config_dir");
  const auto work = test::scratch_dir("cli_config_work");
  test::spit(dir / "small.json",
             nlohmann::json({{"plan", kPlan},
                             {"filter", {{"particles", 50}}},
                             {"scenario", {{"max_waypoints", 5}}},
                             {"out", (work / "r.csv").string()}})
                 .dump());
  ASSERT_EQ(setenv(cli::kConfigDirEnv, dir.c_str(), 1), 0);
  const Result r = run({"run-pf", "--config", "small.json"});
  unsetenv(cli::kConfigDirEnv);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(work / "r.csv"));
  EXPECT_EQ(run({"run-pf", "--config", "small.json"}).code, 4);
}

TEST(Cli, FlagsOverrideConfig) {
  const auto dir = test::scratch_dir("cli_override");
  test::spit(dir / "c.json", nlohmann::json({{"plan", kPlan},
                                             {"filter", {{"particles", 50}}},
                                             {"scenario", {{"max_waypoints", 5}}},
                                             {"out", (dir / "a.csv").string()}})
                                 .dump());
  ASSERT_EQ(run({"run-pf", "--config", (dir / "c.json").string(), "--particles", "60", "--out",
                 (dir / "b.csv").string()})
                .code,
            0);
  const auto m = nlohmann::json::parse(test::slurp(cli::manifest_path((dir / "b.csv").string())));
  EXPECT_EQ(m.at("config").at("filter").at("particles"), 60);
  EXPECT_EQ(m.at("config").at("scenario").at("max_waypoints"), 5);
  EXPECT_EQ(m.at("command"), "run-pf");
  EXPECT_FALSE(fs::exists(dir / "a.csv"));
}

TEST_F(Pipeline, GenDataManifestRerun) {
  const std::string text = test::slurp(dir_ / "d.csv");
  EXPECT_EQ(text.rfind("d_euc_m,d_fspl_m,label\n", 0), 0u);
  expect_rerun_identical("gen-data", cli::manifest_path((dir_ / "d.csv").string()));
}

TEST_F(Pipeline, GeneratedPlansManifestRerun) {
  const Result r = run({"gen-data", "--plans", "2", "--paths", "2", "--seed", "5", "--save-plans",
                        (dir_ / "gen").string(), "--out", (dir_ / "g.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "gen_0.plan.json"));
  EXPECT_TRUE(fs::exists(dir_ / "gen_1.plan.json"));
  expect_rerun_identical("gen-data", cli::manifest_path((dir_ / "g.csv").string()));
}

TEST_F(Pipeline, TrainManifestRerun) {
  EXPECT_TRUE(fs::exists(dir_ / "w.bin.metrics.csv"));
  expect_rerun_identical("train", cli::manifest_path((dir_ / "w.bin").string()));
}

TEST_F(Pipeline, FineTunesFromWeights) {
  const std::string out = (dir_ / "tuned.bin").string();
  const Result r = run({"train", "--data", (dir_ / "d.csv").string(), "--arch", "A", "--epochs", "1",
                        "--init-weights", (dir_ / "w.bin").string(), "--out", out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(test::slurp(out), test::slurp(dir_ / "w.bin"));
  expect_rerun_identical("train", cli::manifest_path(out));
  EXPECT_EQ(run({"train", "--data", (dir_ / "d.csv").string(), "--arch", "D", "--epochs", "1",
                 "--init-weights", (dir_ / "w.bin").string(), "--out", (dir_ / "bad.bin").string()})
                .code,
            3);
}

TEST_F(Pipeline, TrainRejectsChangedInput) {
  const auto copy = dir_ / "d_copy.csv";
  fs::copy_file(dir_ / "d.csv", copy, fs::copy_options::overwrite_existing);
  ASSERT_EQ(run({"train", "--data", copy.string(), "--arch", "A", "--epochs", "1", "--out",
                 (dir_ / "w2.bin").string()})
                .code,
            0);
  test::spit(copy, test::slurp(copy) + "1,1,1\n");
  const Result r = run({"train", "--config", cli::manifest_path((dir_ / "w2.bin").string())});
  EXPECT_EQ(r.code, 3);
  EXPECT_NE(r.err.find("manifest"), std::string::npos);
  EXPECT_EQ(run({"run-pf", "--config", cli::manifest_path((dir_ / "w.bin").string())}).code, 3);
}

TEST_F(Pipeline, RunPfAndReplayManifestRerun) {
  const std::string out = (dir_ / "pf.csv").string();
  const std::string log = (dir_ / "pf_log.csv").string();
  const Result r = run({"run-pf", "--plan", kPlan, "--mode", "sc", "--weights",
                        (dir_ / "w.bin").string(), "--particles", "100", "--waypoints", "8", "--seed",
                        "9", "--out", out, "--scan-log-out", log});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(test::slurp(out).rfind("step,gt_x,gt_y,gt_z,est_x,est_y,est_z,err_m,n_eff\n", 0), 0u);
  expect_rerun_identical("run-pf", cli::manifest_path(out));

  const std::string rep = (dir_ / "replay.csv").string();
  const Result p = run({"replay", "--plan", kPlan, "--log", log, "--algorithm", "pf", "--particles",
                        "100", "--out", rep});
  ASSERT_EQ(p.code, 0) << p.err;
  expect_rerun_identical("replay", cli::manifest_path(rep));

  const std::string rep2 = (dir_ / "replay_slam.csv").string();
  ASSERT_EQ(run({"replay", "--plan", kPlan, "--log", log, "--ap-truth", kPlan, "--particles", "50",
                 "--out", rep2})
                .code,
            0);
  EXPECT_TRUE(fs::exists(dir_ / "replay_slam_aps.csv"));
  expect_rerun_identical("replay", cli::manifest_path(rep2));
}

TEST_F(Pipeline, RunSlamManifestRerun) {
  const std::string out = (dir_ / "slam.csv").string();
  const Result r = run({"run-slam", "--plan", kPlan, "--mode", "hc", "--weights",
                        (dir_ / "w.bin").string(), "--particles", "60", "--waypoints", "6", "--out",
                        out});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir_ / "slam_aps.csv"));
  expect_rerun_identical("run-slam", cli::manifest_path(out));
}

TEST_F(Pipeline, BenchManifestRerun) {
  const std::string prefix = (dir_ / "bench").string();
  const Result r = run({"bench", "--plan", kPlan, "--algorithms", "pf,fastslam", "--modes", "nc,sc",
                        "--weights", (dir_ / "w.bin").string(), "--trials", "2", "--particles", "40",
                        "--out", prefix});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("fastslam sc"), std::string::npos);
  EXPECT_TRUE(fs::exists(prefix + "_aps.csv"));
  EXPECT_TRUE(fs::exists(prefix + "_rmse_box.svg"));
  expect_rerun_identical("bench", prefix + ".manifest.json");
}

TEST_F(Pipeline, ExecutableMatchesDispatch) {
  const auto out = dir_ / "exe.csv";
  const std::string cmd = std::string(WIFILOC_CLI) + " run-pf --plan " + kPlan +
                          " --particles 30 --waypoints 4 --out " + out.string() + " > /dev/null";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const std::string first = test::slurp(out);
  ASSERT_EQ(run({"run-pf", "--plan", kPlan, "--particles", "30", "--waypoints", "4", "--out",
                 out.string()})
                .code,
            0);
  EXPECT_EQ(test::slurp(out), first);
  const std::string bad = std::string(WIFILOC_CLI) + " run-pf --mode hc --plan " + kPlan + " 2> /dev/null";
  const int status = std::system(bad.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 3);
}
