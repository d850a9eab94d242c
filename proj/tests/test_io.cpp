#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <Eigen/Geometry>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "mapfuse/io.hpp"

using namespace mapfuse;
namespace fs = std::filesystem;

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() /
      ("mapfuse_io_test_" + std::to_string(::getpid()) + "_" +
       std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

Mat3 rot(double angle, const Vec3& axis) {
  return Eigen::AngleAxisd(angle, axis.normalized()).toRotationMatrix();
}

}  // namespace

TEST_CASE("single-point PLY round trip") {
  const fs::path dir = temp_dir();
  ColoredPointCloud cloud;
  cloud.append(Vec3(1.25, -3.5, 0.125), Vec3(0.2, 0.4, 0.8));
  write_ply(cloud, dir / "one.ply");
  const ColoredPointCloud back = read_ply(dir / "one.ply");
  REQUIRE(back.size() == 1);
  CHECK((back.positions[0] - cloud.positions[0]).cwiseAbs().maxCoeff() < 1e-6);
  CHECK((back.colors[0] - cloud.colors[0]).cwiseAbs().maxCoeff() <= 1.0 / 255.0);
}

TEST_CASE("random PLY round trip within float32/uint8 precision") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(1);
  ColoredPointCloud cloud;
  for (int i = 0; i < 500; ++i)
    cloud.append(Vec3(200 * uniform01(rng) - 100, 200 * uniform01(rng) - 100,
                      20 * uniform01(rng)),
                 Vec3(uniform01(rng), uniform01(rng), uniform01(rng)));
  write_ply(cloud, dir / "cloud.ply");
  const ColoredPointCloud back = read_ply(dir / "cloud.ply");
  REQUIRE(back.size() == cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    CHECK((back.positions[i] - cloud.positions[i]).cwiseAbs().maxCoeff() <
          1e-4);  // float32 at |x| <= 100
    CHECK((back.colors[i] - cloud.colors[i]).cwiseAbs().maxCoeff() <=
          0.5 / 255.0 + 1e-12);
  }
}

TEST_CASE("ascii and binary PLY encodings parse identically") {
  const fs::path dir = temp_dir();
  ColoredPointCloud cloud;
  cloud.append(Vec3(0.5, 1.5, -2.25), Vec3(10.0 / 255, 200.0 / 255, 0));
  cloud.append(Vec3(4, 5, 6), Vec3(1, 1, 128.0 / 255));

  std::ostringstream ascii;
  ascii << "ply\nformat ascii 1.0\nelement vertex 2\n"
        << "property float x\nproperty float y\nproperty float z\n"
        << "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        << "end_header\n"
        << "0.5 1.5 -2.25 10 200 0\n"
        << "4 5 6 255 255 128\n";
  write_text_file(dir / "a.ply", ascii.str());
  write_ply(cloud, dir / "b.ply");

  const ColoredPointCloud a = read_ply(dir / "a.ply");
  const ColoredPointCloud b = read_ply(dir / "b.ply");
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK((a.positions[i] - b.positions[i]).cwiseAbs().maxCoeff() < 1e-7);
    CHECK((a.colors[i] - b.colors[i]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("PLY float colors in [0,1] are taken as-is") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "float_colors.ply",
                  "ply\nformat ascii 1.0\nelement vertex 1\n"
                  "property float x\nproperty float y\nproperty float z\n"
                  "property float red\nproperty float green\n"
                  "property float blue\nend_header\n"
                  "1 2 3 0.25 0.5 0.75\n");
  const ColoredPointCloud c = read_ply(dir / "float_colors.ply");
  CHECK((c.colors[0] - Vec3(0.25, 0.5, 0.75)).cwiseAbs().maxCoeff() < 1e-7);
}

TEST_CASE("PLY with extra vertex properties and trailing element") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "extra.ply",
                  "ply\nformat ascii 1.0\nelement vertex 1\n"
                  "property float x\nproperty float y\nproperty float z\n"
                  "property float nx\n"
                  "property uchar red\nproperty uchar green\n"
                  "property uchar blue\n"
                  "element face 0\nproperty uchar dummy\nend_header\n"
                  "1 2 3 0.7 255 0 0\n");
  const ColoredPointCloud c = read_ply(dir / "extra.ply");
  REQUIRE(c.size() == 1);
  CHECK(c.positions[0] == Vec3(1, 2, 3));
  CHECK((c.colors[0] - Vec3(1, 0, 0)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("PLY missing blue property throws MissingProperty") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "noblue.ply",
                  "ply\nformat ascii 1.0\nelement vertex 1\n"
                  "property float x\nproperty float y\nproperty float z\n"
                  "property uchar red\nproperty uchar green\nend_header\n"
                  "1 2 3 4 5\n");
  CHECK_THROWS_AS(read_ply(dir / "noblue.ply"), MissingProperty);
}

TEST_CASE("malformed PLY files throw ParseError, never crash") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "bad_magic.ply", "nope\n");
  CHECK_THROWS_AS(read_ply(dir / "bad_magic.ply"), ParseError);

  write_text_file(dir / "truncated.ply",
                  "ply\nformat ascii 1.0\nelement vertex 5\n"
                  "property float x\nproperty float y\nproperty float z\n"
                  "property uchar red\nproperty uchar green\n"
                  "property uchar blue\nend_header\n1 2 3 4 5 6\n");
  CHECK_THROWS_AS(read_ply(dir / "truncated.ply"), ParseError);

  CHECK_THROWS_AS(read_ply(dir / "does_not_exist.ply"), ParseError);
}

TEST_CASE("TUM identity line") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "id.txt", "# comment\n0.0 0 0 0 0 0 0 1\n");
  const TimedTrajectory t = read_tum(dir / "id.txt");
  REQUIRE(t.size() == 1);
  CHECK(t.entries[0].timestamp == 0.0);
  CHECK((t.entries[0].pose.rotation - Mat3::Identity()).norm() < 1e-15);
  CHECK(t.entries[0].pose.translation.norm() == 0.0);
}

TEST_CASE("TUM error cases") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "order.txt",
                  "1.0 0 0 0 0 0 0 1\n0.5 0 0 0 0 0 0 1\n");
  CHECK_THROWS_AS(read_tum(dir / "order.txt"), NonMonotonicTimestamps);

  write_text_file(dir / "short.txt", "0.0 1 2 3 0 0 0\n");
  CHECK_THROWS_AS(read_tum(dir / "short.txt"), ParseError);

  write_text_file(dir / "nonunit.txt", "0.0 1 2 3 0.5 0.5 0.5 0.9\n");
  CHECK_THROWS_AS(read_tum(dir / "nonunit.txt"), ParseError);
}

TEST_CASE("random TUM round trip below 1e-9") {
  const fs::path dir = temp_dir();
  std::mt19937_64 rng(2);
  TimedTrajectory traj;
  double t = 0;
  for (int i = 0; i < 200; ++i) {
    t += 0.05 + uniform01(rng);
    traj.entries.push_back(
        {t, PoseSE3{rot(3.0 * uniform01(rng) - 1.5,
                        Vec3(uniform01(rng) - 0.5, uniform01(rng) - 0.5,
                             uniform01(rng) - 0.5)),
                    Vec3(200 * uniform01(rng) - 100,
                         200 * uniform01(rng) - 100, 50 * uniform01(rng))}});
  }
  write_tum(traj, dir / "traj.txt");
  const TimedTrajectory back = read_tum(dir / "traj.txt");
  REQUIRE(back.size() == traj.size());
  double max_dev = 0;
  for (std::size_t i = 0; i < traj.size(); ++i) {
    max_dev = std::max(max_dev, std::abs(back.entries[i].timestamp -
                                         traj.entries[i].timestamp));
    max_dev = std::max(max_dev, (back.entries[i].pose.translation -
                                 traj.entries[i].pose.translation)
                                    .cwiseAbs()
                                    .maxCoeff());
    max_dev = std::max(max_dev, (back.entries[i].pose.rotation -
                                 traj.entries[i].pose.rotation)
                                    .cwiseAbs()
                                    .maxCoeff());
  }
  CHECK(max_dev < 1e-9);
}

TEST_CASE("extrinsics round trip and validation") {
  const fs::path dir = temp_dir();
  Extrinsics ext;
  ext.cam_from_lidar = PoseSE3{rot(0.3, Vec3(1, 2, 3)), Vec3(0.1, -0.2, 0.05)};
  ext.time_offset = 0.125;
  write_extrinsics(ext, dir / "ext.txt");
  const Extrinsics back = read_extrinsics(dir / "ext.txt");
  CHECK((back.cam_from_lidar.rotation - ext.cam_from_lidar.rotation).norm() <
        1e-12);
  CHECK((back.cam_from_lidar.translation - ext.cam_from_lidar.translation)
            .norm() < 1e-12);
  CHECK(back.time_offset == ext.time_offset);

  write_text_file(dir / "short_ext.txt", "1 0 0 0\n");
  CHECK_THROWS_AS(read_extrinsics(dir / "short_ext.txt"), ParseError);

  write_text_file(dir / "bad_row.txt",
                  "1 0 0 0\n0 1 0 0\n0 0 1 0\n1 0 0 1\n0.0\n");
  CHECK_THROWS_AS(read_extrinsics(dir / "bad_row.txt"), ParseError);
}

TEST_CASE("manifest round trip and validation") {
  const fs::path dir = temp_dir();
  // Create the referenced files.
  ColoredPointCloud c;
  c.append(Vec3(0, 0, 0), Vec3(0.5, 0.5, 0.5));
  write_ply(c, dir / "lidar.ply");
  write_ply(c, dir / "s0.ply");
  write_ply(c, dir / "s1.ply");
  write_text_file(dir / "lidar.txt", "0.0 0 0 0 0 0 0 1\n");
  write_text_file(dir / "t0.txt", "0.0 0 0 0 0 0 0 1\n");
  write_text_file(dir / "t1.txt", "0.0 0 0 0 0 0 0 1\n");
  write_extrinsics(Extrinsics{}, dir / "ext.txt");

  SessionManifest manifest;
  manifest.lidar_cloud = dir / "lidar.ply";
  manifest.lidar_traj = dir / "lidar.txt";
  manifest.extrinsics = dir / "ext.txt";
  manifest.sessions.push_back({0, dir / "s0.ply", dir / "t0.txt"});
  manifest.sessions.push_back({1, dir / "s1.ply", dir / "t1.txt"});
  write_manifest(manifest, dir / "manifest.txt");

  const SessionManifest back = read_manifest(dir / "manifest.txt");
  CHECK(back.lidar_cloud == dir / "lidar.ply");
  REQUIRE(back.sessions.size() == 2);
  CHECK(back.sessions[1].traj == dir / "t1.txt");
}

TEST_CASE("manifest errors") {
  const fs::path dir = temp_dir();
  write_text_file(dir / "missing_file.txt",
                  "lidar_cloud = nope.ply\nlidar_traj = nope.txt\n"
                  "extrinsics = nope.txt\nsession.0.cloud = nope.ply\n"
                  "session.0.traj = nope.txt\n");
  CHECK_THROWS_WITH_AS(read_manifest(dir / "missing_file.txt"),
                       doctest::Contains("nope.ply"), ParseError);

  write_text_file(dir / "gap.txt",
                  "lidar_cloud = a\nlidar_traj = b\nextrinsics = c\n"
                  "session.1.cloud = d\nsession.1.traj = e\n");
  CHECK_THROWS_AS(read_manifest(dir / "gap.txt"), ParseError);

  write_text_file(dir / "unknown.txt",
                  "lidar_cloud = a\nlidar_traj = b\nextrinsics = c\n"
                  "bogus = d\n");
  CHECK_THROWS_AS(read_manifest(dir / "unknown.txt"), ParseError);
}

TEST_CASE("config parsing") {
  const PipelineConfig cfg = parse_config(
      "# comment\n"
      "prefusion.max_gap = 0.02\n"
      "prefusion.ransac_iterations = 250\n"
      "prefusion.seed = 99\n"
      "postfusion.beta = 0.4\n"
      "pgo.sigma_trans = 0.1\n"
      "eval.tau = 0.2\n");
  CHECK(cfg.prefusion.max_gap == 0.02);
  CHECK(cfg.prefusion.ransac_iterations == 250);
  CHECK(cfg.prefusion.seed == 99);
  CHECK(cfg.postfusion.beta == 0.4);
  CHECK(cfg.pgo.sigma_trans == 0.1);
  CHECK(cfg.eval.tau == 0.2);
  // Untouched keys keep defaults.
  CHECK(cfg.postfusion.max_iterations == 50);
  CHECK(cfg.eval.voxel_size == 0.1);

  CHECK_THROWS_AS(parse_config("prefusion.unknown = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("prefusion.max_gap 0.02\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("postfusion.beta = not_a_number\n"),
                  ConfigError);
}
