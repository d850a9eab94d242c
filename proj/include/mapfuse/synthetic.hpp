#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "mapfuse/io.hpp"
#include "mapfuse/types.hpp"

namespace mapfuse {

/// Desk-scale stand-in for the pipeline's inputs: a structured ground-truth
/// scene plus degraded scale-ambiguous per-session reconstructions of it.
struct SyntheticSceneSpec {
  std::uint64_t seed = 0;
  double extent = 16.0;        // meters, scene footprint width
  int points_per_frame = 400;
  int frames_per_session = 20;
  int session_count = 4;
  int overlap_frames = 5;      // frames shared by consecutive sessions
  double scale_min = 0.8;      // per-session reconstruction scale range
  double scale_max = 1.25;
  double pose_noise_trans = 0.02;        // meters
  double pose_noise_rot = 0.0087266462;  // radians (0.5 deg)
  double color_noise_std = 0.02;
  double crop_fraction = 0.6;  // fraction of each frame's points kept
  int outlier_session = 2;     // -1 disables the scale outlier
  double outlier_scale_factor = 5.0;

  void validate() const;
};

struct SyntheticScene {
  // Ground truth.
  ColoredPointCloud gt_cloud;
  std::vector<PoseSE3> gt_frame_poses;  // camera poses, world frame
  std::vector<double> frame_times;
  std::vector<std::vector<int>> session_frames;      // global frame indices
  std::vector<TransformSim3> gt_session_transforms;  // session -> world

  // Degraded inputs (what the manifest references).
  ColoredPointCloud lidar_cloud;
  TimedTrajectory lidar_traj;  // LiDAR body poses
  Extrinsics extrinsics;
  std::vector<ColoredPointCloud> session_clouds;
  std::vector<TimedTrajectory> session_trajs;
};

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec);

/// Writes cloud/trajectory/extrinsics files, the manifest, and the
/// ground-truth sidecar into `dir`. Returns the manifest path.
std::filesystem::path write_scene(const SyntheticScene& scene,
                                  const std::filesystem::path& dir);

}  // namespace mapfuse
