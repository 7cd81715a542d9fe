#include <algorithm>
#include <cmath>
#include <sstream>

#include "text_util.hpp"
#include "wifiloc/eval.hpp"

namespace wifiloc {

namespace {

using detail::fixed;

std::string label_of(const ExperimentReport& r) {
  return std::string(to_string(r.algorithm)) + ' ' + to_string(r.mode) + ' ' + (r.planar ? "2d" : "3d");
}

std::string row_prefix(const ExperimentReport& r) {
  return std::string(to_string(r.algorithm)) + ',' + to_string(r.mode) + ',' + (r.planar ? "2d" : "3d");
}

double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

// Rounds the axis maximum up to 1, 2 or 5 times a power of ten.
double nice_ceiling(double v) {
  if (!(v > 0.0)) return 1.0;
  const double p = std::pow(10.0, std::floor(std::log10(v)));
  for (double m : {1.0, 2.0, 5.0, 10.0})
    if (m * p >= v) return m * p;
  return 10.0 * p;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

struct Frame {
  double w = 640, h = 400, left = 60, right = 20, top = 30, bottom = 60;
  double ymax = 1.0;
  double px(double f) const { return left + f * (w - left - right); }
  double py(double v) const { return top + (1.0 - v / ymax) * (h - top - bottom); }
};

void svg_axes(std::ostream& out, const Frame& f, const std::string& title, const std::string& ylabel) {
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(f.w, 0) << "\" height=\""
      << fixed(f.h, 0) << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << fixed(f.w / 2, 1) << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
      << title << "</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double v = f.ymax * k / 5.0;
    const double y = f.py(v);
    out << "<line x1=\"" << fixed(f.left, 1) << "\" y1=\"" << fixed(y, 1) << "\" x2=\""
        << fixed(f.w - f.right, 1) << "\" y2=\"" << fixed(y, 1) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << fixed(f.left - 5, 1) << "\" y=\"" << fixed(y + 4, 1)
        << "\" text-anchor=\"end\">" << fixed(v, 2) << "</text>\n";
  }
  out << "<text x=\"14\" y=\"" << fixed(f.h / 2, 1) << "\" transform=\"rotate(-90 14 "
      << fixed(f.h / 2, 1) << ")\" text-anchor=\"middle\">" << ylabel << "</text>\n";
}

void write_box_svg(std::span<const ExperimentReport> reports, const std::string& path) {
  Frame f;
  double vmax = 0.0;
  for (const auto& r : reports)
    for (const auto& t : r.trials)
      if (!t.failed) vmax = std::max(vmax, t.rmse_m);
  f.ymax = nice_ceiling(vmax);
  auto out = detail::open_out(path);
  svg_axes(out, f, "RMSE per trial", "RMSE (m)");
  const double slot = 1.0 / static_cast<double>(reports.size());
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& r = reports[i];
    const double cx = f.px((i + 0.5) * slot);
    const double half = 0.25 * slot * (f.w - f.left - f.right);
    out << "<text x=\"" << fixed(cx, 1) << "\" y=\"" << fixed(f.h - f.bottom + 16, 1)
        << "\" text-anchor=\"middle\">" << label_of(r) << "</text>\n";
    std::vector<double> v;
    for (const auto& t : r.trials)
      if (!t.failed) v.push_back(t.rmse_m);
    if (v.empty()) continue;
    const double q1 = quantile(v, 0.25), q2 = quantile(v, 0.5), q3 = quantile(v, 0.75);
    const double lo = *std::min_element(v.begin(), v.end());
    const double hi = *std::max_element(v.begin(), v.end());
    const char* color = kPalette[i % std::size(kPalette)];
    out << "<line x1=\"" << fixed(cx, 1) << "\" y1=\"" << fixed(f.py(lo), 1) << "\" x2=\""
        << fixed(cx, 1) << "\" y2=\"" << fixed(f.py(hi), 1) << "\" stroke=\"black\"/>\n";
    out << "<rect x=\"" << fixed(cx - half, 1) << "\" y=\"" << fixed(f.py(q3), 1) << "\" width=\""
        << fixed(2 * half, 1) << "\" height=\"" << fixed(f.py(q1) - f.py(q3), 1) << "\" fill=\""
        << color << "\" fill-opacity=\"0.4\" stroke=\"black\"/>\n";
    for (double q : {lo, q2, hi}) {
      out << "<line x1=\"" << fixed(cx - half, 1) << "\" y1=\"" << fixed(f.py(q), 1) << "\" x2=\""
          << fixed(cx + half, 1) << "\" y2=\"" << fixed(f.py(q), 1) << "\" stroke=\"black\""
          << (q == q2 ? " stroke-width=\"2\"" : "") << "/>\n";
    }
  }
  out << "</svg>\n";
}

void write_line_svg(std::span<const ExperimentReport> reports, const std::string& path) {
  Frame f;
  std::size_t steps = 1;
  double vmax = 0.0;
  std::vector<const TrialReport*> shown;
  for (const auto& r : reports) {
    const TrialReport* pick = nullptr;
    for (const auto& t : r.trials)
      if (!t.failed) {
        pick = &t;
        break;
      }
    shown.push_back(pick);
    if (!pick) continue;
    steps = std::max(steps, pick->waypoint_errors_m.size());
    for (double e : pick->waypoint_errors_m) vmax = std::max(vmax, e);
  }
  f.ymax = nice_ceiling(vmax);
  auto out = detail::open_out(path);
  svg_axes(out, f, "Error per waypoint (first trial)", "error (m)");
  const double denom = static_cast<double>(std::max<std::size_t>(steps - 1, 1));
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const char* color = kPalette[i % std::size(kPalette)];
    out << "<text x=\"" << fixed(f.left + 10 + 110.0 * i, 1) << "\" y=\""
        << fixed(f.h - 20, 1) << "\" fill=\"" << color << "\">" << label_of(reports[i])
        << "</text>\n";
    if (!shown[i]) continue;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" points=\"";
    const auto& e = shown[i]->waypoint_errors_m;
    for (std::size_t k = 0; k < e.size(); ++k) {
      if (k) out << ' ';
      out << fixed(f.px(k / denom), 1) << ',' << fixed(f.py(e[k]), 1);
    }
    out << "\"/>\n";
  }
  out << "<text x=\"" << fixed(f.w / 2, 1) << "\" y=\"" << fixed(f.h - f.bottom + 16, 1)
      << "\" text-anchor=\"middle\">waypoint</text>\n";
  out << "</svg>\n";
}

}  // namespace

std::vector<std::string> emit_report(std::span<const ExperimentReport> reports,
                                     const std::string& prefix, const ReportFormats& formats) {
  if (reports.empty()) throw ConfigError("no reports to emit");
  std::vector<std::string> written;
  if (formats.csv) {
    {
      const std::string p = prefix + "_aggregate.csv";
      auto out = detail::open_out(p);
      out << "algorithm,mode,dim,trials,mean_rmse,std_rmse,min,max\n";
      for (const auto& r : reports) {
        const Aggregate& a = r.summary;
        out << row_prefix(r) << ',' << a.trials << ',' << fixed(a.mean_rmse) << ','
            << fixed(a.std_rmse) << ',' << fixed(a.min_rmse) << ',' << fixed(a.max_rmse) << '\n';
      }
      written.push_back(p);
    }
    {
      const std::string p = prefix + "_trials.csv";
      auto out = detail::open_out(p);
      out << "algorithm,mode,dim,trial,seed,failed,rmse,mean_initial_ap_err,mean_final_ap_err,failure\n";
      for (const auto& r : reports)
        for (const auto& t : r.trials) {
          out << row_prefix(r) << ',' << t.trial << ',' << t.seed << ',' << (t.failed ? 1 : 0) << ',';
          if (!t.failed) out << fixed(t.rmse_m);
          out << ',';
          if (!t.ap_ids.empty())
            out << fixed(t.mean_initial_ap_error()) << ',' << fixed(t.mean_final_ap_error());
          else
            out << ',';
          std::string why = t.failure;
          std::replace(why.begin(), why.end(), ',', ';');
          std::replace(why.begin(), why.end(), '\n', ' ');
          out << ',' << why << '\n';
        }
      written.push_back(p);
    }
    {
      const std::string p = prefix + "_waypoints.csv";
      auto out = detail::open_out(p);
      out << "algorithm,mode,dim,trial,step,gt_x,gt_y,gt_z,est_x,est_y,est_z,err_m\n";
      for (const auto& r : reports)
        for (const auto& t : r.trials)
          for (std::size_t k = 0; k < t.waypoint_errors_m.size(); ++k) {
            const Pose& g = t.truth[k];
            const Pose& e = t.estimates[k];
            out << row_prefix(r) << ',' << t.trial << ',' << k << ',' << fixed(g.x) << ','
                << fixed(g.y) << ',' << fixed(g.z) << ',' << fixed(e.x) << ',' << fixed(e.y) << ','
                << fixed(e.z) << ',' << fixed(t.waypoint_errors_m[k]) << '\n';
          }
      written.push_back(p);
    }
    const bool any_aps = std::any_of(reports.begin(), reports.end(), [](const ExperimentReport& r) {
      return std::any_of(r.trials.begin(), r.trials.end(),
                         [](const TrialReport& t) { return !t.ap_ids.empty(); });
    });
    if (any_aps) {
      const std::string p = prefix + "_aps.csv";
      auto out = detail::open_out(p);
      out << "algorithm,mode,dim,trial,ap_id,initial_err_m,final_err_m\n";
      for (const auto& r : reports)
        for (const auto& t : r.trials)
          for (std::size_t j = 0; j < t.ap_ids.size(); ++j)
            out << row_prefix(r) << ',' << t.trial << ',' << t.ap_ids[j] << ','
                << fixed(t.ap_initial_error_m[j]) << ',' << fixed(t.ap_final_error_m[j]) << '\n';
      written.push_back(p);
    }
  }
  if (formats.svg) {
    write_box_svg(reports, prefix + "_rmse_box.svg");
    written.push_back(prefix + "_rmse_box.svg");
    write_line_svg(reports, prefix + "_waypoint_error.svg");
    written.push_back(prefix + "_waypoint_error.svg");
  }
  return written;
}

}  // namespace wifiloc
