#include "mapfuse/prefusion.hpp"

#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mapfuse/geometry.hpp"

namespace mapfuse {

TimedTrajectory lidar_to_camera_trajectory(const TimedTrajectory& lidar_traj,
                                           const Extrinsics& ext) {
  const PoseSE3 lidar_from_cam = ext.cam_from_lidar.inverse();
  TimedTrajectory out;
  out.entries.reserve(lidar_traj.size());
  for (const TimedEntry& e : lidar_traj.entries)
    out.entries.push_back(
        {e.timestamp + ext.time_offset, e.pose * lidar_from_cam});
  return out;
}

std::vector<PosePair> pair_poses_by_timestamp(const TimedTrajectory& recon,
                                              const TimedTrajectory& cam,
                                              double max_gap) {
  if (recon.empty() || cam.empty())
    throw NoPairsFound("pair_poses_by_timestamp: empty trajectory");

  std::vector<PosePair> pairs;
  pairs.reserve(recon.size());
  for (const TimedEntry& r : recon.entries) {
    auto it = std::lower_bound(
        cam.entries.begin(), cam.entries.end(), r.timestamp,
        [](const TimedEntry& e, double t) { return e.timestamp < t; });
    // Candidates: first entry at/after, and the one before it.
    const TimedEntry* best = nullptr;
    double best_gap = std::numeric_limits<double>::infinity();
    if (it != cam.entries.end()) {
      best = &*it;
      best_gap = std::abs(it->timestamp - r.timestamp);
    }
    if (it != cam.entries.begin()) {
      const TimedEntry& prev = *(it - 1);
      const double gap = std::abs(prev.timestamp - r.timestamp);
      if (gap < best_gap) {
        best = &prev;
        best_gap = gap;
      }
    }
    if (best != nullptr && best_gap <= max_gap)
      pairs.push_back({r.pose, best->pose, best_gap});
  }
  if (pairs.empty())
    throw NoPairsFound("pair_poses_by_timestamp: no pair within max_gap");
  return pairs;
}

TransformSim3 register_session_poses(const std::vector<PosePair>& pairs) {
  std::vector<Vec3> src, tgt;
  src.reserve(pairs.size());
  tgt.reserve(pairs.size());
  for (const PosePair& p : pairs) {
    src.push_back(p.recon_pose.translation);
    tgt.push_back(p.cam_pose.translation);
  }
  return umeyama_sim3(src, tgt);
}

Mat3 correct_rotation(const TransformSim3& initial,
                      const std::vector<Mat3>& src_rots,
                      const std::vector<Mat3>& tgt_rots) {
  if (src_rots.empty() || src_rots.size() != tgt_rots.size())
    throw DegenerateInput("correct_rotation: invalid rotation lists");

  Mat3 mean = Mat3::Zero();
  for (std::size_t i = 0; i < src_rots.size(); ++i) {
    const Mat3 transformed = initial.rotation * src_rots[i];
    mean += tgt_rots[i] * transformed.transpose();
  }
  mean /= static_cast<double>(src_rots.size());

  Eigen::JacobiSVD<Mat3> svd(mean, Eigen::ComputeFullU | Eigen::ComputeFullV);
  int near_zero = 0;
  for (int i = 0; i < 3; ++i)
    if (svd.singularValues()(i) < 1e-12) ++near_zero;
  if (near_zero > 1)
    throw DegenerateInput("correct_rotation: rank-deficient rotation mean");

  const Mat3 delta = project_to_so3(mean);
  return delta * initial.rotation;
}

SessionAlignment align_session(int session_id, const TimedTrajectory& recon,
                               const TimedTrajectory& cam,
                               const PrefusionConfig& cfg) {
  const std::vector<PosePair> pairs =
      pair_poses_by_timestamp(recon, cam, cfg.max_gap);
  TransformSim3 transform = register_session_poses(pairs);

  std::vector<Vec3> cam_translations;
  std::vector<Vec3> recon_translations;
  std::vector<Mat3> src_rots, tgt_rots;
  cam_translations.reserve(pairs.size());
  for (const PosePair& p : pairs) {
    cam_translations.push_back(p.cam_pose.translation);
    recon_translations.push_back(p.recon_pose.translation);
    src_rots.push_back(p.recon_pose.rotation);
    tgt_rots.push_back(p.cam_pose.rotation);
  }

  SessionAlignment out;
  out.session_id = session_id;
  out.linearity = pca_linearity(cam_translations);
  out.raw_scale = transform.scale;
  out.corrected_scale = transform.scale;

  if (out.linearity > cfg.linearity_threshold) {
    transform.rotation = correct_rotation(transform, src_rots, tgt_rots);
    // Re-fit the translation so the centroids stay matched under the
    // corrected rotation.
    Vec3 mean_src = Vec3::Zero(), mean_tgt = Vec3::Zero();
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      mean_src += recon_translations[i];
      mean_tgt += cam_translations[i];
    }
    mean_src /= static_cast<double>(pairs.size());
    mean_tgt /= static_cast<double>(pairs.size());
    transform.translation =
        mean_tgt - transform.scale * (transform.rotation * mean_src);
    out.rotation_corrected = true;
  }
  out.transform = transform;
  return out;
}

namespace {

// Deterministic uniform double in [0,1) from the raw generator; the
// standard distributions are implementation-defined.
double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

ScaleConsensus scale_ransac(const std::vector<SessionAlignment>& alignments,
                            const PrefusionConfig& cfg) {
  if (alignments.empty())
    throw DegenerateInput("scale_ransac: no alignments");

  const std::size_t k = alignments.size();
  ScaleConsensus out;
  if (k == 1) {
    out.best_scale = alignments[0].raw_scale;
    out.inliers.insert(alignments[0].session_id);
    return out;
  }

  double mean = 0.0;
  for (const SessionAlignment& a : alignments) mean += a.raw_scale;
  mean /= static_cast<double>(k);
  double var = 0.0;
  for (const SessionAlignment& a : alignments)
    var += (a.raw_scale - mean) * (a.raw_scale - mean);
  const double sigma = std::sqrt(var / static_cast<double>(k));

  if (sigma < 1e-12) {
    // Zero spread: the softmax sharpness is undefined and there is nothing
    // to reject.
    out.best_scale = mean;
    for (const SessionAlignment& a : alignments)
      out.inliers.insert(a.session_id);
    return out;
  }

  const double threshold = 2.0 * sigma;
  const double alpha = mean / sigma;

  std::vector<double> cdf(k);
  double norm = 0.0;
  double max_l = -std::numeric_limits<double>::infinity();
  for (const SessionAlignment& a : alignments)
    max_l = std::max(max_l, a.linearity);
  for (std::size_t i = 0; i < k; ++i) {
    norm += std::exp(alpha * (alignments[i].linearity - max_l));
    cdf[i] = norm;
  }

  std::mt19937_64 rng(cfg.seed);
  int best_count = -1;
  double best_lin_sum = 0.0;
  int best_session = std::numeric_limits<int>::max();
  std::set<int> best_inliers;
  double best_inlier_mean = alignments[0].raw_scale;

  for (int it = 0; it < cfg.ransac_iterations; ++it) {
    const double u = uniform01(rng) * norm;
    std::size_t pick = static_cast<std::size_t>(
        std::lower_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
    if (pick >= k) pick = k - 1;
    const double candidate = alignments[pick].raw_scale;

    int count = 0;
    double lin_sum = 0.0;
    std::set<int> inliers;
    double scale_sum = 0.0;
    for (const SessionAlignment& a : alignments) {
      if (std::abs(a.raw_scale - candidate) < threshold) {
        ++count;
        lin_sum += a.linearity;
        scale_sum += a.raw_scale;
        inliers.insert(a.session_id);
      }
    }
    const int session = alignments[pick].session_id;
    const bool better =
        count > best_count ||
        (count == best_count && lin_sum > best_lin_sum) ||
        (count == best_count && lin_sum == best_lin_sum &&
         session < best_session);
    if (better) {
      best_count = count;
      best_lin_sum = lin_sum;
      best_session = session;
      best_inliers = std::move(inliers);
      best_inlier_mean = scale_sum / static_cast<double>(count);
    }
  }

  out.best_scale = best_inlier_mean;
  out.inliers = std::move(best_inliers);
  return out;
}

std::vector<SessionAlignment> correct_outlier_scales(
    std::vector<SessionAlignment> alignments, const std::set<int>& inliers,
    const OverlapPoses& overlap_pairs) {
  if (inliers.empty()) throw NoInliers("correct_outlier_scales: no inliers");

  // Corrected scales of inliers, addressable by session id.
  std::map<int, double> inlier_scale;
  for (SessionAlignment& a : alignments) {
    if (inliers.count(a.session_id)) {
      a.scale_inlier = true;
      a.corrected_scale = a.raw_scale;
      inlier_scale[a.session_id] = a.corrected_scale;
    }
  }

  for (SessionAlignment& a : alignments) {
    if (inliers.count(a.session_id)) continue;
    a.scale_inlier = false;

    int nearest = -1;
    int best_dist = std::numeric_limits<int>::max();
    for (int j : inliers) {
      const int dist = std::abs(j - a.session_id);
      if (dist < best_dist || (dist == best_dist && j < nearest)) {
        best_dist = dist;
        nearest = j;
      }
    }
    const double neighbor_scale = inlier_scale.at(nearest);

    const int lo = std::min(nearest, a.session_id);
    const int hi = std::max(nearest, a.session_id);
    auto it = overlap_pairs.find({lo, hi});
    double corrected = neighbor_scale;
    if (it != overlap_pairs.end()) {
      // First vector is in the lower session's frame.
      const auto& [lo_pts, hi_pts] = it->second;
      const auto& outlier_pts = (a.session_id == lo) ? lo_pts : hi_pts;
      const auto& inlier_pts = (a.session_id == lo) ? hi_pts : lo_pts;
      if (outlier_pts.size() >= 3 && outlier_pts.size() == inlier_pts.size()) {
        try {
          corrected =
              neighbor_scale * umeyama_sim3(outlier_pts, inlier_pts).scale;
        } catch (const DegenerateInput&) {
          corrected = neighbor_scale;
        }
      }
    }
    a.corrected_scale = corrected;
  }
  return alignments;
}

}  // namespace mapfuse
