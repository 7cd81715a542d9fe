#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace wifiloc {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Error hierarchy. Every failure the library reports derives from Error so
// callers (the CLI in particular) can map categories onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};
class FormatError : public Error {
 public:
  using Error::Error;
};
class ConfigError : public Error {
 public:
  using Error::Error;
};
class ValidationError : public Error {
 public:
  using Error::Error;
};
class DomainError : public Error {
 public:
  using Error::Error;
};
class BoundsError : public Error {
 public:
  using Error::Error;
};
class DegenerateMapError : public Error {
 public:
  using Error::Error;
};
class DegenerateDataError : public Error {
 public:
  using Error::Error;
};
class DataAssociationError : public Error {
 public:
  using Error::Error;
};
class AlignmentError : public Error {
 public:
  using Error::Error;
};
class IoError : public Error {
 public:
  using Error::Error;
};

/// Position of the device (or of an access point) in the global frame, meters.
struct Pose {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  static Pose from(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
  Vec3 vec() const { return {x, y, z}; }
  bool finite() const { return std::isfinite(x) && std::isfinite(y) && std::isfinite(z); }

  friend bool operator==(const Pose&, const Pose&) = default;
};

/// Intended displacement for one step, meters.
struct MotionCommand {
  double dx = 0.0;
  double dy = 0.0;
  double dz = 0.0;

  Vec3 vec() const { return {dx, dy, dz}; }
  double norm() const { return vec().norm(); }

  friend bool operator==(const MotionCommand&, const MotionCommand&) = default;
};

inline Pose operator+(const Pose& p, const MotionCommand& u) {
  return {p.x + u.dx, p.y + u.dy, p.z + u.dz};
}

/// Line-of-sight class of a radio link. The integer values double as the
/// dataset label encoding and the classifier's output index.
enum class LinkClass : int { Nlos = 0, Los = 1 };

inline const char* to_string(LinkClass c) { return c == LinkClass::Los ? "LOS" : "NLOS"; }

/// Device trajectory: waypoints plus the command that produced each step.
struct Trajectory {
  std::vector<Pose> waypoints;
  std::vector<MotionCommand> commands;  // size() == waypoints.size() - 1
};

/// ((x - m)^T (x - m))^(1/2)
inline double euclidean_distance(const Pose& x, const Pose& m) {
  const double dx = x.x - m.x;
  const double dy = x.y - m.y;
  const double dz = x.z - m.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace wifiloc
