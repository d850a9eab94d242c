#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <string>

#include "mapfuse/spatial_index.hpp"
#include "mapfuse/synthetic.hpp"

using namespace mapfuse;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  static int counter = 0;
  const fs::path dir =
      fs::temp_directory_path() /
      ("mapfuse_synth_test_" + std::to_string(::getpid()) + "_" +
       std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in),
                     std::istreambuf_iterator<char>());
}

SyntheticSceneSpec small_spec() {
  SyntheticSceneSpec spec;
  spec.seed = 7;
  spec.points_per_frame = 60;
  spec.frames_per_session = 8;
  spec.session_count = 3;
  spec.overlap_frames = 3;
  spec.outlier_session = -1;
  return spec;
}

}  // namespace

TEST_CASE("spec validation rejects bad parameters") {
  SyntheticSceneSpec spec;
  spec.extent = -1.0;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = SyntheticSceneSpec{};
  spec.frames_per_session = 1;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = SyntheticSceneSpec{};
  spec.overlap_frames = spec.frames_per_session;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = SyntheticSceneSpec{};
  spec.crop_fraction = 0.0;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = SyntheticSceneSpec{};
  spec.scale_min = 2.0;
  spec.scale_max = 1.0;
  CHECK_THROWS_AS(spec.validate(), DataError);
  spec = SyntheticSceneSpec{};
  spec.outlier_session = spec.session_count;
  CHECK_THROWS_AS(spec.validate(), DataError);
  SyntheticSceneSpec{}.validate();  // defaults are valid
}

TEST_CASE("generation is deterministic in the seed") {
  const SyntheticSceneSpec spec = small_spec();
  const SyntheticScene a = generate_synthetic_scene(spec);
  const SyntheticScene b = generate_synthetic_scene(spec);

  REQUIRE(a.gt_cloud.size() == b.gt_cloud.size());
  for (std::size_t i = 0; i < a.gt_cloud.size(); ++i) {
    CHECK(a.gt_cloud.positions[i] == b.gt_cloud.positions[i]);
    CHECK(a.gt_cloud.colors[i] == b.gt_cloud.colors[i]);
  }
  REQUIRE(a.session_clouds.size() == b.session_clouds.size());
  for (std::size_t k = 0; k < a.session_clouds.size(); ++k) {
    REQUIRE(a.session_clouds[k].size() == b.session_clouds[k].size());
    CHECK(a.gt_session_transforms[k].scale == b.gt_session_transforms[k].scale);
    CHECK(a.gt_session_transforms[k].translation ==
          b.gt_session_transforms[k].translation);
    for (std::size_t i = 0; i < a.session_clouds[k].size(); ++i)
      CHECK(a.session_clouds[k].positions[i] ==
            b.session_clouds[k].positions[i]);
  }

  SyntheticSceneSpec other = spec;
  other.seed = 8;
  const SyntheticScene c = generate_synthetic_scene(other);
  CHECK(c.gt_session_transforms[0].scale != a.gt_session_transforms[0].scale);
}

TEST_CASE("structural invariants") {
  const SyntheticSceneSpec spec = small_spec();
  const SyntheticScene scene = generate_synthetic_scene(spec);

  const int total_frames =
      spec.session_count * spec.frames_per_session -
      (spec.session_count - 1) * spec.overlap_frames;
  CHECK(scene.gt_frame_poses.size() == static_cast<std::size_t>(total_frames));
  CHECK(scene.frame_times.size() == scene.gt_frame_poses.size());
  CHECK(scene.gt_cloud.size() ==
        static_cast<std::size_t>(total_frames * spec.points_per_frame));
  CHECK(scene.session_clouds.size() ==
        static_cast<std::size_t>(spec.session_count));

  // LiDAR reference is every second ground-truth point.
  REQUIRE(scene.lidar_cloud.size() == (scene.gt_cloud.size() + 1) / 2);
  for (std::size_t i = 0; i < scene.lidar_cloud.size(); ++i)
    CHECK(scene.lidar_cloud.positions[i] == scene.gt_cloud.positions[2 * i]);

  // Consecutive sessions share `overlap_frames` frames with equal timestamps.
  for (int k = 0; k + 1 < spec.session_count; ++k) {
    const auto& cur = scene.session_frames[static_cast<std::size_t>(k)];
    const auto& nxt = scene.session_frames[static_cast<std::size_t>(k + 1)];
    for (int i = 0; i < spec.overlap_frames; ++i) {
      const std::size_t tail =
          cur.size() - static_cast<std::size_t>(spec.overlap_frames) +
          static_cast<std::size_t>(i);
      CHECK(cur[tail] == nxt[static_cast<std::size_t>(i)]);
      CHECK(scene.session_trajs[static_cast<std::size_t>(k)]
                .entries[tail]
                .timestamp ==
            scene.session_trajs[static_cast<std::size_t>(k + 1)]
                .entries[static_cast<std::size_t>(i)]
                .timestamp);
    }
  }

  // LiDAR trajectory composes camera pose with the fixed extrinsics.
  for (std::size_t f = 0; f < scene.gt_frame_poses.size(); ++f) {
    const PoseSE3 expected =
        scene.gt_frame_poses[f] * scene.extrinsics.cam_from_lidar;
    CHECK((scene.lidar_traj.entries[f].pose.rotation - expected.rotation)
              .norm() < 1e-14);
    CHECK((scene.lidar_traj.entries[f].pose.translation - expected.translation)
              .norm() < 1e-14);
  }
}

TEST_CASE("session clouds map back onto the ground truth exactly") {
  const SyntheticScene scene = generate_synthetic_scene(small_spec());
  const SpatialIndex gt_index(scene.gt_cloud.positions);

  for (std::size_t k = 0; k < scene.session_clouds.size(); ++k) {
    const TransformSim3& to_world = scene.gt_session_transforms[k];
    const ColoredPointCloud& cloud = scene.session_clouds[k];
    REQUIRE(cloud.size() > 0);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      const Vec3 world = to_world * cloud.positions[i];
      const auto [id, dist] = gt_index.nearest(world);
      CHECK(dist < 1e-9);  // positions carry no noise
      // Clamped coordinates can coincide, so the color must match one of
      // the coincident ground-truth points.
      bool color_found = false;
      for (int cand : gt_index.radius(world, 1e-9))
        if (cloud.colors[i] ==
            scene.gt_cloud.colors[static_cast<std::size_t>(cand)])
          color_found = true;
      CHECK(color_found);
    }
  }
}

TEST_CASE("noiseless session trajectories map back exactly") {
  SyntheticSceneSpec spec = small_spec();
  spec.pose_noise_trans = 0.0;
  spec.pose_noise_rot = 0.0;
  const SyntheticScene scene = generate_synthetic_scene(spec);

  for (std::size_t k = 0; k < scene.session_trajs.size(); ++k) {
    const TransformSim3& to_world = scene.gt_session_transforms[k];
    const auto& frames = scene.session_frames[k];
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const PoseSE3& gt =
          scene.gt_frame_poses[static_cast<std::size_t>(frames[i])];
      const PoseSE3& rec = scene.session_trajs[k].entries[i].pose;
      CHECK((to_world * rec.translation - gt.translation).norm() < 1e-9);
      CHECK((to_world.rotation * rec.rotation - gt.rotation).norm() < 1e-12);
    }
  }
}

TEST_CASE("session scales honor the configured range and outlier factor") {
  SyntheticSceneSpec spec = small_spec();
  spec.scale_min = 0.2;
  spec.scale_max = 5.0;
  spec.outlier_session = 1;
  spec.outlier_scale_factor = 5.0;
  const SyntheticScene scene = generate_synthetic_scene(spec);

  for (std::size_t k = 0; k < scene.gt_session_transforms.size(); ++k) {
    const double s = scene.gt_session_transforms[k].scale;
    if (static_cast<int>(k) == spec.outlier_session) {
      CHECK(s >= spec.scale_min * spec.outlier_scale_factor);
      CHECK(s <= spec.scale_max * spec.outlier_scale_factor);
    } else {
      CHECK(s >= spec.scale_min);
      CHECK(s <= spec.scale_max);
    }
  }
}

TEST_CASE("written scenes are byte-identical across runs and re-readable") {
  const SyntheticSceneSpec spec = small_spec();
  const SyntheticScene scene = generate_synthetic_scene(spec);
  const fs::path dir_a = temp_dir();
  const fs::path dir_b = temp_dir();
  const fs::path manifest_a = write_scene(scene, dir_a);
  const fs::path manifest_b = write_scene(scene, dir_b);

  for (const auto& entry : fs::directory_iterator(dir_a)) {
    const fs::path name = entry.path().filename();
    CHECK(slurp(entry.path()) == slurp(dir_b / name));
  }

  // The manifest the writer emits resolves and loads.
  const SessionManifest manifest = read_manifest(manifest_a);
  CHECK(manifest.sessions.size() == scene.session_clouds.size());
  const ColoredPointCloud lidar = read_ply(manifest.lidar_cloud);
  CHECK(lidar.size() == scene.lidar_cloud.size());
  const TimedTrajectory traj = read_tum(manifest.sessions[0].traj);
  CHECK(traj.size() == scene.session_trajs[0].size());
}
