#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <Eigen/Geometry>
#include <algorithm>
#include <random>

#include "mapfuse/geometry.hpp"

using namespace mapfuse;

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vec3 random_vec(std::mt19937_64& rng, double lo, double hi) {
  return {lo + (hi - lo) * uniform01(rng), lo + (hi - lo) * uniform01(rng),
          lo + (hi - lo) * uniform01(rng)};
}

Mat3 random_rotation(std::mt19937_64& rng) {
  Vec3 axis = random_vec(rng, -1, 1);
  if (axis.norm() < 1e-9) axis = Vec3::UnitX();
  axis.normalize();
  return Eigen::AngleAxisd(uniform01(rng) * M_PI, axis).toRotationMatrix();
}

}  // namespace

TEST_CASE("umeyama identity on a self-mapped triangle") {
  const std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  const TransformSim3 t = umeyama_sim3(pts, pts);
  CHECK(t.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(t.translation.norm() < 1e-12);
}

TEST_CASE("umeyama pure scale") {
  const std::vector<Vec3> src = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  std::vector<Vec3> tgt;
  for (const Vec3& p : src) tgt.push_back(2.0 * p);
  const TransformSim3 t = umeyama_sim3(src, tgt);
  CHECK(t.scale == doctest::Approx(2.0).epsilon(1e-12));
  CHECK((t.rotation - Mat3::Identity()).norm() < 1e-12);
  CHECK(t.translation.norm() < 1e-12);
}

TEST_CASE("umeyama recovers a generating Sim(3) from 50 random points") {
  std::mt19937_64 rng(7);
  const TransformSim3 gt{0.37, random_rotation(rng), Vec3(5, -2, 1)};
  std::vector<Vec3> src, tgt;
  for (int i = 0; i < 50; ++i) {
    src.push_back(random_vec(rng, -10, 10));
    tgt.push_back(gt * src.back());
  }
  const TransformSim3 t = umeyama_sim3(src, tgt);
  CHECK(std::abs(t.scale - gt.scale) < 1e-8);
  CHECK((t.rotation - gt.rotation).norm() < 1e-8);
  CHECK((t.translation - gt.translation).norm() < 1e-8);
}

TEST_CASE("umeyama is invariant under pair permutation") {
  std::mt19937_64 rng(11);
  const TransformSim3 gt{2.5, random_rotation(rng), Vec3(1, 2, 3)};
  std::vector<Vec3> src, tgt;
  for (int i = 0; i < 30; ++i) {
    src.push_back(random_vec(rng, -5, 5));
    tgt.push_back(gt * src.back());
  }
  const TransformSim3 a = umeyama_sim3(src, tgt);

  std::vector<std::size_t> order(src.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Vec3> src2, tgt2;
  for (std::size_t i : order) {
    src2.push_back(src[i]);
    tgt2.push_back(tgt[i]);
  }
  const TransformSim3 b = umeyama_sim3(src2, tgt2);
  CHECK(std::abs(a.scale - b.scale) < 1e-8);
  CHECK((a.rotation - b.rotation).norm() < 1e-8);
  CHECK((a.translation - b.translation).norm() < 1e-8);
}

TEST_CASE("umeyama degenerate inputs") {
  const std::vector<Vec3> two = {{0, 0, 0}, {1, 0, 0}};
  CHECK_THROWS_AS(umeyama_sim3(two, two), DegenerateInput);
  const std::vector<Vec3> coincident(5, Vec3(1, 1, 1));
  std::vector<Vec3> tgt(5, Vec3(2, 2, 2));
  CHECK_THROWS_AS(umeyama_sim3(coincident, tgt), DegenerateInput);
}

TEST_CASE("pca linearity of collinear points is 1") {
  const std::vector<Vec3> pts = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
  CHECK(pca_linearity(pts) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pca linearity of an isotropic planar grid is 0") {
  // Equal in-plane variances, zero out-of-plane variance.
  std::vector<Vec3> pts;
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j) pts.push_back(Vec3(i, j, 0));
  CHECK(pca_linearity(pts) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("pca linearity matches an independent eigendecomposition") {
  std::mt19937_64 rng(3);
  auto gaussian = [&] {
    const double u1 = std::max(uniform01(rng), 1e-300);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  };
  std::vector<Vec3> pts;
  for (int i = 0; i < 100; ++i)
    pts.push_back(Vec3(2.0 * gaussian(), 1.0 * gaussian(), 0.5 * gaussian()));

  // Direct oracle.
  Vec3 mean = Vec3::Zero();
  for (const Vec3& p : pts) mean += p;
  mean /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - mean) * (p - mean).transpose();
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 lambda = eig.eigenvalues().cwiseMax(0.0);
  const double expected = 1.0 - (lambda(1) + lambda(0)) / lambda(2);

  CHECK(pca_linearity(pts) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("pca linearity is rigid-invariant") {
  std::mt19937_64 rng(5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 60; ++i) pts.push_back(random_vec(rng, -3, 3));
  const double base = pca_linearity(pts);

  const Mat3 r = random_rotation(rng);
  const Vec3 t(4, -7, 2);
  std::vector<Vec3> moved;
  for (const Vec3& p : pts) moved.push_back(r * p + t);
  CHECK(pca_linearity(moved) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("project_to_so3 basics") {
  CHECK((project_to_so3(Mat3::Identity()) - Mat3::Identity()).norm() < 1e-12);

  std::mt19937_64 rng(9);
  const Mat3 r = random_rotation(rng);
  CHECK((project_to_so3(1.5 * r) - r).norm() < 1e-9);
  CHECK((project_to_so3(0.01 * r) - r).norm() < 1e-9);
  CHECK_THROWS_AS(project_to_so3(Mat3::Zero()), DegenerateInput);
}

TEST_CASE("project_to_so3 equals the polar-factor oracle on noisy input") {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    Mat3 m = random_rotation(rng);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) += 0.05 * (uniform01(rng) - 0.5);

    // Independent oracle: polar decomposition M (MᵀM)^{-1/2} via
    // eigendecomposition, which is the Frobenius-nearest rotation when
    // det(M) > 0.
    Eigen::SelfAdjointEigenSolver<Mat3> eig(m.transpose() * m);
    const Mat3 inv_sqrt =
        eig.eigenvectors() *
        eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
        eig.eigenvectors().transpose();
    const Mat3 oracle = m * inv_sqrt;

    CHECK((project_to_so3(m) - oracle).norm() < 1e-6);
  }
}

TEST_CASE("apply_sim3") {
  ColoredPointCloud cloud;
  cloud.append(Vec3(1, 1, 1), Vec3(0.5, 0.5, 0.5));
  cloud.append(Vec3(-2, 0, 3), Vec3(0.1, 0.9, 0.3));

  const ColoredPointCloud same = apply_sim3(TransformSim3{}, cloud);
  CHECK(same.positions[0] == cloud.positions[0]);
  CHECK(same.positions[1] == cloud.positions[1]);

  const TransformSim3 doubled{2.0, Mat3::Identity(), Vec3::Zero()};
  CHECK((apply_sim3(doubled, cloud).positions[0] - Vec3(2, 2, 2)).norm() <
        1e-15);

  std::mt19937_64 rng(17);
  const TransformSim3 t{0.7, random_rotation(rng), Vec3(3, -1, 2)};
  const ColoredPointCloud round = apply_sim3(t.inverse(), apply_sim3(t, cloud));
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((round.positions[i] - cloud.positions[i]).cwiseAbs().maxCoeff() <
          1e-9);
    CHECK(round.colors[i] == cloud.colors[i]);
  }
}

TEST_CASE("sim3 composition and inversion are consistent") {
  std::mt19937_64 rng(19);
  const TransformSim3 a{1.7, random_rotation(rng), Vec3(1, 2, 3)};
  const TransformSim3 b{0.4, random_rotation(rng), Vec3(-2, 0, 5)};
  const TransformSim3 c{3.1, random_rotation(rng), Vec3(0.5, -4, 1)};
  const Vec3 p = random_vec(rng, -1000, 1000);

  CHECK(((a * b) * p - a * (b * p)).cwiseAbs().maxCoeff() < 1e-6);
  const Vec3 assoc_l = ((a * b) * c) * p;
  const Vec3 assoc_r = (a * (b * c)) * p;
  CHECK((assoc_l - assoc_r).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((a.inverse() * (a * p) - p).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("se3 exp/log round trip") {
  std::mt19937_64 rng(23);
  for (int i = 0; i < 50; ++i) {
    Vec6 xi;
    xi << random_vec(rng, -2, 2), random_vec(rng, -2, 2);
    const PoseSE3 t = se3_exp(xi);
    CHECK(t.is_valid(1e-9));
    CHECK((se3_log(t) - xi).cwiseAbs().maxCoeff() < 1e-9);
  }
  // Small-angle branch.
  Vec6 tiny;
  tiny << 0.001, -0.002, 0.0005, 1e-9, -2e-9, 5e-10;
  CHECK((se3_log(se3_exp(tiny)) - tiny).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("rotation_angle") {
  std::mt19937_64 rng(29);
  const Mat3 r = random_rotation(rng);
  CHECK(rotation_angle(r, r) < 1e-9);
  const Mat3 q = Eigen::AngleAxisd(0.3, Vec3::UnitZ()).toRotationMatrix();
  CHECK(rotation_angle(r, r * q) == doctest::Approx(0.3).epsilon(1e-9));
}
