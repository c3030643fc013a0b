#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace blockbench {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline constexpr double kPi = 3.14159265358979323846;

/// Rigid placement of a body. Orientation is kept unit-norm by every producer.
struct Pose {
  Vec3 position = Vec3::Zero();
  Quat orientation = Quat::Identity();

  Vec3 apply(const Vec3& local) const { return position + orientation * local; }
  Vec3 inverse_apply(const Vec3& world) const {
    return orientation.conjugate() * (world - position);
  }
};

/// Pose from (radius, azimuth, height, yaw): the cylindrical convention used by
/// every pose variable in the catalog.
inline Pose pose_from_cylindrical(double radius, double azimuth, double height, double yaw) {
  Pose p;
  p.position = Vec3(radius * std::cos(azimuth), radius * std::sin(azimuth), height);
  p.orientation = Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
  return p;
}

/// Heading of the body x-axis projected on the floor plane.
inline double yaw_of(const Quat& q) {
  const Vec3 x = q * Vec3::UnitX();
  return std::atan2(x.y(), x.x());
}

inline std::array<double, 4> cylindrical_from_pose(const Pose& p) {
  const double r = std::hypot(p.position.x(), p.position.y());
  const double az = r > 0.0 ? std::atan2(p.position.y(), p.position.x()) : 0.0;
  return {r, az, p.position.z(), yaw_of(p.orientation)};
}

/// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0.0) a += 2.0 * kPi;
  return a - kPi;
}

/// A vector in the catalog's value language.
using Values = std::vector<double>;

// Error families. Rejections and suppressions are values, not exceptions.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct CatalogError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct TaskError : Error {
  using Error::Error;
};
struct MetricUndefined : Error {
  using Error::Error;
};
struct SimulationDiverged : Error {
  SimulationDiverged(std::string body, const std::string& what)
      : Error(what), body_name(std::move(body)) {}
  std::string body_name;
};
struct ActionError : Error {
  using Error::Error;
};
struct LifecycleError : Error {
  using Error::Error;
};
struct LogError : Error {
  using Error::Error;
};

}  // namespace blockbench
