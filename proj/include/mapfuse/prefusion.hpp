#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

/// A scale-ambiguous reconstruction pose matched to the metric camera pose
/// nearest in time.
struct PosePair {
  PoseSE3 recon_pose;
  PoseSE3 cam_pose;
  double time_gap = 0.0;  // seconds, >= 0
};

/// Camera-from-LiDAR mounting transform plus clock offset.
struct Extrinsics {
  PoseSE3 cam_from_lidar;
  double time_offset = 0.0;  // seconds
};

/// Coarse per-session alignment result.
struct SessionAlignment {
  int session_id = 0;
  TransformSim3 transform;       // session frame -> metric world
  double linearity = 0.0;        // trajectory linearity in [-1, 1]
  double raw_scale = 1.0;        // Umeyama scale
  double corrected_scale = 1.0;  // after consensus repair
  bool scale_inlier = true;
  bool rotation_corrected = false;
};

struct PrefusionConfig {
  double max_gap = 0.05;             // seconds, timestamp pairing gate
  double linearity_threshold = 0.9;  // rotation correction trigger
  int ransac_iterations = 100;
  std::uint64_t seed = 0;
};

/// Converts a LiDAR body trajectory into the camera trajectory:
/// T_world_cam = T_world_lidar * inverse(cam_from_lidar), timestamps
/// shifted by the clock offset.
TimedTrajectory lidar_to_camera_trajectory(const TimedTrajectory& lidar_traj,
                                           const Extrinsics& ext);

/// Pairs each reconstruction pose with the camera pose nearest in time,
/// dropping pairs with |dt| > max_gap.
std::vector<PosePair> pair_poses_by_timestamp(const TimedTrajectory& recon,
                                              const TimedTrajectory& cam,
                                              double max_gap);

/// Umeyama Sim(3) over the translation components of the pairs.
TransformSim3 register_session_poses(const std::vector<PosePair>& pairs);

/// Refines an initial rotation by averaging the relative rotation between
/// transformed source rotations and target rotations, projected onto SO(3).
Mat3 correct_rotation(const TransformSim3& initial,
                      const std::vector<Mat3>& src_rots,
                      const std::vector<Mat3>& tgt_rots);

/// Full coarse alignment of one session: pairing, Umeyama, linearity gate,
/// optional rotation correction.
SessionAlignment align_session(int session_id, const TimedTrajectory& recon,
                               const TimedTrajectory& cam,
                               const PrefusionConfig& cfg);

struct ScaleConsensus {
  double best_scale = 1.0;  // mean of inlier raw scales
  std::set<int> inliers;    // session ids
};

/// Linearity-weighted RANSAC over per-session scales. Candidates are single
/// session scales sampled with softmax(alpha * linearity) probabilities.
ScaleConsensus scale_ransac(const std::vector<SessionAlignment>& alignments,
                            const PrefusionConfig& cfg);

/// Overlapping frame translations for a session pair. Keyed by
/// (lower id, higher id); first vector is in the lower session's frame.
using OverlapPoses =
    std::map<std::pair<int, int>, std::pair<std::vector<Vec3>, std::vector<Vec3>>>;

/// Repairs outlier scales by chaining the nearest inlier's corrected scale
/// with the relative scale estimated from overlapping poses. Falls back to
/// the neighbor's scale when overlap data is missing or too small.
std::vector<SessionAlignment> correct_outlier_scales(
    std::vector<SessionAlignment> alignments, const std::set<int>& inliers,
    const OverlapPoses& overlap_pairs);

}  // namespace mapfuse
