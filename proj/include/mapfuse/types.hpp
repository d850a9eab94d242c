#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <vector>

#include "mapfuse/errors.hpp"

namespace mapfuse {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

/// Rigid pose: proper orthonormal rotation plus translation in meters.
struct PoseSE3 {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  PoseSE3() = default;
  PoseSE3(const Mat3& R, const Vec3& t) : rotation(R), translation(t) {}

  PoseSE3 inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }

  PoseSE3 operator*(const PoseSE3& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  Vec3 operator*(const Vec3& p) const { return rotation * p + translation; }

  bool is_valid(double tol = 1e-9) const {
    const Mat3 err = rotation.transpose() * rotation - Mat3::Identity();
    return err.norm() <= tol && std::abs(rotation.determinant() - 1.0) <= tol;
  }
};

/// Similarity transform: positive scale, rotation, translation.
struct TransformSim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  TransformSim3() = default;
  TransformSim3(double s, const Mat3& R, const Vec3& t)
      : scale(s), rotation(R), translation(t) {}

  TransformSim3 inverse() const {
    const double inv_s = 1.0 / scale;
    const Mat3 Rt = rotation.transpose();
    return {inv_s, Rt, -inv_s * (Rt * translation)};
  }

  TransformSim3 operator*(const TransformSim3& rhs) const {
    return {scale * rhs.scale, rotation * rhs.rotation,
            scale * (rotation * rhs.translation) + translation};
  }

  Vec3 operator*(const Vec3& p) const {
    return scale * (rotation * p) + translation;
  }

  PoseSE3 se3() const { return {rotation, translation}; }
};

/// Point positions in meters paired with RGB colors, channels in [0,1].
struct ColoredPointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> colors;

  std::size_t size() const { return positions.size(); }
  bool empty() const { return positions.empty(); }

  void append(const Vec3& p, const Vec3& c) {
    positions.push_back(p);
    colors.push_back(c);
  }

  void validate() const {
    if (positions.size() != colors.size())
      throw DataError("point cloud position/color count mismatch");
    for (const Vec3& p : positions)
      if (!p.allFinite()) throw DataError("non-finite point position");
    for (const Vec3& c : colors)
      if (!(c.minCoeff() >= 0.0 && c.maxCoeff() <= 1.0))
        throw DataError("color channel outside [0,1]");
  }
};

struct TimedEntry {
  double timestamp = 0.0;  // seconds
  PoseSE3 pose;
};

/// Pose sequence with strictly increasing timestamps.
struct TimedTrajectory {
  std::vector<TimedEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }

  void validate() const {
    for (std::size_t i = 1; i < entries.size(); ++i)
      if (!(entries[i].timestamp > entries[i - 1].timestamp))
        throw NonMonotonicTimestamps("timestamps not strictly increasing");
  }
};

}  // namespace mapfuse
