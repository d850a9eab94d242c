#include "mapfuse/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>

namespace mapfuse {

TransformSim3 umeyama_sim3(const std::vector<Vec3>& src,
                           const std::vector<Vec3>& tgt) {
  if (src.size() != tgt.size())
    throw DegenerateInput("umeyama_sim3: size mismatch");
  const std::size_t n = src.size();
  if (n < 3) throw DegenerateInput("umeyama_sim3: fewer than 3 pairs");

  Vec3 mean_src = Vec3::Zero();
  Vec3 mean_tgt = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mean_src += src[i];
    mean_tgt += tgt[i];
  }
  mean_src /= static_cast<double>(n);
  mean_tgt /= static_cast<double>(n);

  Mat3 sigma = Mat3::Zero();
  double var_src = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 dx = src[i] - mean_src;
    const Vec3 dy = tgt[i] - mean_tgt;
    sigma += dy * dx.transpose();
    var_src += dx.squaredNorm();
  }
  sigma /= static_cast<double>(n);
  var_src /= static_cast<double>(n);
  if (var_src <= 1e-30)
    throw DegenerateInput("umeyama_sim3: source points coincident");

  Eigen::JacobiSVD<Mat3> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 s = Mat3::Identity();
  if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0)
    s(2, 2) = -1.0;

  const Mat3 rotation = svd.matrixU() * s * svd.matrixV().transpose();
  const double scale = svd.singularValues().dot(s.diagonal()) / var_src;
  if (!(scale > 0.0))
    throw DegenerateInput("umeyama_sim3: non-positive scale");
  const Vec3 translation = mean_tgt - scale * (rotation * mean_src);
  return {scale, rotation, translation};
}

double pca_linearity(const std::vector<Vec3>& positions) {
  if (positions.size() < 2)
    throw DegenerateInput("pca_linearity: fewer than 2 points");

  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : positions) mean += p;
  mean /= static_cast<double>(positions.size());

  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : positions) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(positions.size());

  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  // Ascending from Eigen; clamp small negatives from the symmetric solver.
  Vec3 lambda = eig.eigenvalues().cwiseMax(0.0);
  const double l1 = lambda(2), l2 = lambda(1), l3 = lambda(0);
  if (l1 <= 0.0) throw DegenerateInput("pca_linearity: all points coincide");
  return 1.0 - (l2 + l3) / l1;
}

Mat3 project_to_so3(const Mat3& m) {
  if (!m.allFinite()) throw DegenerateInput("project_to_so3: non-finite input");
  Eigen::JacobiSVD<Mat3> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (svd.singularValues()(0) <= 1e-30)
    throw DegenerateInput("project_to_so3: zero matrix");
  Mat3 s = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0)
    s(2, 2) = -1.0;
  return svd.matrixU() * s * svd.matrixV().transpose();
}

ColoredPointCloud apply_sim3(const TransformSim3& t,
                             const ColoredPointCloud& cloud) {
  ColoredPointCloud out;
  out.positions.resize(cloud.size());
  out.colors = cloud.colors;
  for (std::size_t i = 0; i < cloud.size(); ++i)
    out.positions[i] = t * cloud.positions[i];
  return out;
}

Mat3 so3_exp(const Vec3& w) {
  const double theta = w.norm();
  if (theta < 1e-12) {
    Mat3 skew;
    skew << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
    return Mat3::Identity() + skew;
  }
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

Vec3 so3_log(const Mat3& r) {
  const Eigen::AngleAxisd aa(r);
  return aa.angle() * aa.axis();
}

namespace {

Mat3 skew(const Vec3& w) {
  Mat3 s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

// Left Jacobian of SO(3).
Mat3 so3_left_jacobian(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 s = skew(w);
  if (theta < 1e-6)
    return Mat3::Identity() + 0.5 * s + (1.0 / 6.0) * s * s;
  const double t2 = theta * theta;
  return Mat3::Identity() + (1.0 - std::cos(theta)) / t2 * s +
         (theta - std::sin(theta)) / (t2 * theta) * s * s;
}

Mat3 so3_left_jacobian_inv(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 s = skew(w);
  if (theta < 1e-6)
    return Mat3::Identity() - 0.5 * s + (1.0 / 12.0) * s * s;
  const double half = 0.5 * theta;
  const double cot = 1.0 / std::tan(half);
  return Mat3::Identity() - 0.5 * s +
         (1.0 - half * cot) / (theta * theta) * s * s;
}

}  // namespace

PoseSE3 se3_exp(const Vec6& xi) {
  const Vec3 rho = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  return {so3_exp(w), so3_left_jacobian(w) * rho};
}

Vec6 se3_log(const PoseSE3& t) {
  const Vec3 w = so3_log(t.rotation);
  Vec6 xi;
  xi.head<3>() = so3_left_jacobian_inv(w) * t.translation;
  xi.tail<3>() = w;
  return xi;
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  const double c = ((a.transpose() * b).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

}  // namespace mapfuse
