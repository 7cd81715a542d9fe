#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wifiloc/filters.hpp"

namespace wifiloc {

/// One recorded step: odometry since the previous step, the scan taken at the
/// new pose and, when known, the ground-truth pose.
struct ScanLogRecord {
  std::size_t step = 0;
  MotionCommand odometry;
  std::vector<RssiObservation> scans;
  std::optional<Pose> truth;

  friend bool operator==(const ScanLogRecord&, const ScanLogRecord&) = default;
};

/// CSV `step,dx,dy,dz,ap_id,rssi_dbm[,gt_x,gt_y,gt_z]`, one row per (step, AP).
/// A row with empty ap_id and rssi_dbm records a step without scans. Rows of
/// one step must agree on odometry and ground truth. Records come back sorted
/// by step.
std::vector<ScanLogRecord> parse_scan_log(const std::string& text);
std::vector<ScanLogRecord> load_scan_log(const std::string& path);

std::string scan_log_document(std::span<const ScanLogRecord> records);
void write_scan_log(std::span<const ScanLogRecord> records, const std::string& path);

/// Filter inputs; the first record's odometry is ignored (step 0 has no motion).
std::vector<StepInput> to_step_inputs(std::span<const ScanLogRecord> records);

/// Scan log of a simulated run.
std::vector<ScanLogRecord> from_step_inputs(std::span<const StepInput> steps);

}  // namespace wifiloc
