#pragma once

#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

/// Least-squares Sim(3) aligning src onto tgt (Umeyama). Requires at least
/// three non-coincident pairs.
TransformSim3 umeyama_sim3(const std::vector<Vec3>& src,
                           const std::vector<Vec3>& tgt);

/// Linearity of a point set: 1 - (lambda2 + lambda3) / lambda1 over the
/// eigenvalues of the centered covariance, largest first.
double pca_linearity(const std::vector<Vec3>& positions);

/// Frobenius-nearest proper rotation of M via SVD.
Mat3 project_to_so3(const Mat3& m);

/// Transforms positions by T; colors pass through.
ColoredPointCloud apply_sim3(const TransformSim3& t,
                             const ColoredPointCloud& cloud);

// SO(3) / SE(3) tangent-space maps. se(3) vectors are [translation; rotation].
Mat3 so3_exp(const Vec3& w);
Vec3 so3_log(const Mat3& r);
PoseSE3 se3_exp(const Vec6& xi);
Vec6 se3_log(const PoseSE3& t);

/// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& a, const Mat3& b);

}  // namespace mapfuse
