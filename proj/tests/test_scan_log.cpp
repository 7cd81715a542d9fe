#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wifiloc/scan_log.hpp"

using namespace wifiloc;

namespace {

std::string expect_error(const std::string& text) {
  try {
    parse_scan_log(text);
  } catch (const Error& e) {
    return e.what();
  }
  ADD_FAILURE() << "no error for:\n" << text;
  return {};
}

}  // namespace

TEST(ScanLog, ParsesGroupedSteps) {
  const auto recs = parse_scan_log(
      "step,dx,dy,dz,ap_id,rssi_dbm\n"
      "0,0,0,0,aa,-50.5\n"
      "0,0,0,0,bb,-70\n"
      "1,1.5,-2,0,,\n"
      "2,0.5,0.5,0.25,bb,-65\n");
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].scans.size(), 2u);
  EXPECT_EQ(recs[0].scans[1].ap_id, "bb");
  EXPECT_EQ(recs[0].scans[0].rssi_dbm, -50.5);
  EXPECT_TRUE(recs[1].scans.empty());
  EXPECT_EQ(recs[1].odometry.dx, 1.5);
  EXPECT_EQ(recs[1].odometry.dy, -2.0);
  EXPECT_EQ(recs[2].odometry.dz, 0.25);
  EXPECT_FALSE(recs[2].truth);
}

TEST(ScanLog, ParsesGroundTruthColumns) {
  const auto recs = parse_scan_log(
      "step,dx,dy,dz,ap_id,rssi_dbm,gt_x,gt_y,gt_z\n"
      "3,0,0,0,aa,-40,1,2,1.5\n"
      "1,0,0,0,aa,-41,0,0,1.5\n");
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_EQ(recs[0].step, 1u);
  EXPECT_EQ(recs[1].step, 3u);
  EXPECT_EQ(*recs[1].truth, (Pose{1, 2, 1.5}));
}

TEST(ScanLog, ReportsOffendingRow) {
  const std::string h = "step,dx,dy,dz,ap_id,rssi_dbm\n";
  EXPECT_NE(expect_error(h + "0,0,0,0,aa,-50\n0,0,0,0,bb,loud\n").find("row 3"), std::string::npos);
  EXPECT_NE(expect_error(h + "0,0,0,aa,-50\n").find("row 2"), std::string::npos);
  EXPECT_NE(expect_error(h + "-1,0,0,0,aa,-50\n").find("row 2"), std::string::npos);
  EXPECT_NE(expect_error(h + "0,0,0,0,,-50\n").find("ap_id"), std::string::npos);
  EXPECT_NE(expect_error("step,x\n").find("header"), std::string::npos);
  EXPECT_THROW(parse_scan_log(""), FormatError);
  EXPECT_THROW(parse_scan_log(h + "0,nan,0,0,aa,-50\n"), FormatError);
}

TEST(ScanLog, RejectsInconsistentSteps) {
  const std::string h = "step,dx,dy,dz,ap_id,rssi_dbm\n";
  EXPECT_THROW(parse_scan_log(h + "0,0,0,0,aa,-50\n1,1,0,0,aa,-50\n0,0,0,0,bb,-50\n"),
               ValidationError);
  EXPECT_THROW(parse_scan_log(h + "0,0,0,0,aa,-50\n0,1,0,0,bb,-50\n"), ValidationError);
  EXPECT_THROW(parse_scan_log(h + "0,0,0,0,aa,-50\n0,0,0,0,aa,-51\n"), ValidationError);
}

TEST(ScanLog, DocumentRoundTripIsExact) {
  Rng rng(1);
  std::vector<ScanLogRecord> recs;
  for (std::size_t s = 0; s < 20; ++s) {
    ScanLogRecord r;
    r.step = s;
    r.odometry = {rng.normal(), rng.normal(), s ? 0.0 : 0.1};
    r.truth = Pose{rng.uniform(0, 50), rng.uniform(0, 9), 1.5};
    const std::size_t n = rng.index(4);
    for (std::size_t k = 0; k < n; ++k)
      r.scans.push_back({"ap" + std::to_string(k), rng.uniform(-90, -30), s});
    recs.push_back(r);
  }
  const std::string doc = scan_log_document(recs);
  EXPECT_EQ(parse_scan_log(doc), recs);
  EXPECT_EQ(scan_log_document(parse_scan_log(doc)), doc);

  const auto dir = test::scratch_dir("scan_log");
  write_scan_log(recs, (dir / "s.csv").string());
  EXPECT_EQ(load_scan_log((dir / "s.csv").string()), recs);

  recs[3].truth.reset();
  EXPECT_THROW(scan_log_document(recs), ValidationError);
  recs[3].truth = Pose{};
  recs[4].scans.push_back({"bad,id", -50, 4});
  EXPECT_THROW(scan_log_document(recs), ValidationError);
}

TEST(ScanLog, StepInputConversion) {
  std::vector<StepInput> steps(3);
  steps[0].command = {9, 9, 9};  // ignored at step 0
  steps[1].command = {1, 0, 0};
  steps[2].command = {0, 2, 0};
  steps[1].observations = {{"aa", -60, 77}};
  for (std::size_t t = 0; t < 3; ++t) steps[t].truth = Pose{double(t), 0, 1.5};
  const auto recs = from_step_inputs(steps);
  ASSERT_EQ(recs.size(), 3u);
  EXPECT_EQ(recs[0].odometry, (MotionCommand{0, 0, 0}));
  EXPECT_EQ(recs[1].scans[0].step, 1u);
  const auto back = to_step_inputs(recs);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].command, steps[2].command);
  EXPECT_EQ(back[1].observations, recs[1].scans);
  EXPECT_EQ(back[2].truth, steps[2].truth);
}
