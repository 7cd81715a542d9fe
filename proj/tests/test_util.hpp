#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wifiloc/propagation.hpp"
#include "wifiloc/world.hpp"

namespace wifiloc::test {

/// Fresh per-test scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("wifiloc_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void spit(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Upper-tail p-value of a chi-square statistic.
inline double chi_square_p(double stat, double dof) {
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), stat));
}

/// Pearson statistic for observed counts against expected counts.
inline double pearson(const std::vector<double>& observed, const std::vector<double>& expected) {
  double s = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i)
    s += (observed[i] - expected[i]) * (observed[i] - expected[i]) / expected[i];
  return s;
}

/// 52 x 9.5 x 3 m office environment shipped with the project.
inline Environment office() { return load_environment(WIFILOC_DATA_DIR "/office.plan.json"); }

/// Empty open box, no APs.
inline FloorPlan open_plan(double x = 10.0, double y = 10.0, double z = 3.0) {
  return FloorPlan::with_extent(Vec3(x, y, z));
}

}  // namespace wifiloc::test
