#include "wifiloc/scan_log.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "text_util.hpp"

namespace wifiloc {

namespace {

const char* kHeader = "step,dx,dy,dz,ap_id,rssi_dbm";
const char* kHeaderGt = "step,dx,dy,dz,ap_id,rssi_dbm,gt_x,gt_y,gt_z";

[[noreturn]] void row_error(std::size_t row, const std::string& msg) {
  throw FormatError("scan log row " + std::to_string(row) + ": " + msg);
}

double field_double(const std::string& s, std::size_t row, const char* name) {
  double v = 0.0;
  if (!detail::parse_double(s, v) || !std::isfinite(v))
    row_error(row, std::string("invalid ") + name + " '" + s + "'");
  return v;
}

}  // namespace

std::vector<ScanLogRecord> parse_scan_log(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw FormatError("scan log is empty (missing header)");
  const std::string header = detail::trim(line);
  bool with_gt = false;
  if (header == kHeaderGt) {
    with_gt = true;
  } else if (header != kHeader) {
    throw FormatError("unrecognized scan log header '" + header + "'");
  }
  const std::size_t ncols = with_gt ? 9 : 6;

  std::map<std::size_t, ScanLogRecord> by_step;
  std::set<std::pair<std::size_t, std::string>> seen;
  std::size_t row = 1;
  std::optional<std::size_t> current;
  while (std::getline(in, line)) {
    ++row;
    if (detail::trim(line).empty()) continue;
    const auto f = detail::split(detail::trim(line));
    if (f.size() != ncols)
      row_error(row, "expected " + std::to_string(ncols) + " fields, got " + std::to_string(f.size()));
    long long step = 0;
    if (!detail::parse_int(f[0], step) || step < 0) row_error(row, "invalid step '" + f[0] + "'");
    const auto s = static_cast<std::size_t>(step);

    ScanLogRecord rec;
    rec.step = s;
    rec.odometry = {field_double(f[1], row, "dx"), field_double(f[2], row, "dy"),
                    field_double(f[3], row, "dz")};
    if (with_gt)
      rec.truth = Pose{field_double(f[6], row, "gt_x"), field_double(f[7], row, "gt_y"),
                       field_double(f[8], row, "gt_z")};

    const std::string id = detail::trim(f[4]);
    const std::string rssi_text = detail::trim(f[5]);
    std::optional<RssiObservation> obs;
    if (!id.empty() || !rssi_text.empty()) {
      if (id.empty()) row_error(row, "empty ap_id");
      obs = RssiObservation{id, field_double(rssi_text, row, "rssi_dbm"), s};
    }

    auto it = by_step.find(s);
    if (it == by_step.end()) {
      it = by_step.emplace(s, rec).first;
    } else {
      if (current != s)
        throw ValidationError("scan log row " + std::to_string(row) + ": duplicate step " +
                              std::to_string(s));
      if (!(it->second.odometry == rec.odometry) || it->second.truth != rec.truth)
        throw ValidationError("scan log row " + std::to_string(row) + ": step " +
                              std::to_string(s) + " disagrees with its earlier rows");
    }
    current = s;
    if (obs) {
      if (!seen.emplace(s, id).second)
        throw ValidationError("scan log row " + std::to_string(row) + ": AP " + id +
                              " listed twice for step " + std::to_string(s));
      it->second.scans.push_back(*obs);
    }
  }

  std::vector<ScanLogRecord> out;
  for (auto& [s, r] : by_step) out.push_back(std::move(r));
  return out;
}

std::vector<ScanLogRecord> load_scan_log(const std::string& path) {
  return parse_scan_log(detail::read_file(path));
}

std::string scan_log_document(std::span<const ScanLogRecord> records) {
  const bool with_gt = std::any_of(records.begin(), records.end(),
                                   [](const ScanLogRecord& r) { return r.truth.has_value(); });
  if (with_gt && !std::all_of(records.begin(), records.end(),
                              [](const ScanLogRecord& r) { return r.truth.has_value(); }))
    throw ValidationError("scan log ground truth must be present for all steps or none");
  std::ostringstream out;
  out << (with_gt ? kHeaderGt : kHeader) << '\n';
  for (const auto& r : records) {
    auto prefix = [&] {
      out << r.step << ',' << detail::exact(r.odometry.dx) << ',' << detail::exact(r.odometry.dy)
          << ',' << detail::exact(r.odometry.dz) << ',';
    };
    auto suffix = [&] {
      if (with_gt)
        out << ',' << detail::exact(r.truth->x) << ',' << detail::exact(r.truth->y) << ','
            << detail::exact(r.truth->z);
      out << '\n';
    };
    if (r.scans.empty()) {
      prefix();
      out << ',';
      suffix();
    }
    for (const auto& o : r.scans) {
      if (o.ap_id.empty() || o.ap_id.find_first_of(",\n") != std::string::npos)
        throw ValidationError("ap_id '" + o.ap_id + "' cannot be written to a scan log");
      prefix();
      out << o.ap_id << ',' << detail::exact(o.rssi_dbm);
      suffix();
    }
  }
  return out.str();
}

void write_scan_log(std::span<const ScanLogRecord> records, const std::string& path) {
  auto out = detail::open_out(path);
  out << scan_log_document(records);
}

std::vector<StepInput> to_step_inputs(std::span<const ScanLogRecord> records) {
  std::vector<StepInput> out;
  for (const auto& r : records) {
    StepInput in;
    in.command = r.odometry;
    in.observations = r.scans;
    for (auto& o : in.observations) o.step = out.size();
    in.truth = r.truth;
    out.push_back(std::move(in));
  }
  return out;
}

std::vector<ScanLogRecord> from_step_inputs(std::span<const StepInput> steps) {
  std::vector<ScanLogRecord> out;
  for (std::size_t t = 0; t < steps.size(); ++t) {
    ScanLogRecord r;
    r.step = t;
    if (t > 0) r.odometry = steps[t].command;
    r.scans = steps[t].observations;
    for (auto& o : r.scans) o.step = t;
    r.truth = steps[t].truth;
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace wifiloc
