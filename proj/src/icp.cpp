#include "mapfuse/icp.hpp"

#include <cmath>
#include <limits>

#include "mapfuse/geometry.hpp"
#include "mapfuse/spatial_index.hpp"

namespace mapfuse {

double compute_lambda(std::size_t n, double bbox_diag, double beta) {
  return beta * static_cast<double>(n) * bbox_diag * bbox_diag;
}

double closed_form_scale(
    const std::vector<std::pair<Vec3, Vec3>>& correspondences, const Mat3& r,
    const Vec3& t, double lambda, double anchor) {
  double num = lambda * anchor;
  double den = lambda;
  for (const auto& [p, q] : correspondences) {
    const Vec3 rp = r * p;
    num += (q - t).dot(rp);
    den += rp.squaredNorm();
  }
  if (den <= 1e-15)
    throw DegenerateInput("closed_form_scale: vanishing denominator");
  return num / den;
}

std::pair<Mat3, Vec3> estimate_rt_fixed_scale(
    const std::vector<std::pair<Vec3, Vec3>>& correspondences, double s) {
  if (correspondences.size() < 3)
    throw DegenerateInput("estimate_rt_fixed_scale: fewer than 3 pairs");

  Vec3 mean_p = Vec3::Zero(), mean_q = Vec3::Zero();
  for (const auto& [p, q] : correspondences) {
    mean_p += p;
    mean_q += q;
  }
  mean_p /= static_cast<double>(correspondences.size());
  mean_q /= static_cast<double>(correspondences.size());

  Mat3 cross = Mat3::Zero();
  for (const auto& [p, q] : correspondences)
    cross += (q - mean_q) * (p - mean_p).transpose();

  const Mat3 r = project_to_so3(cross);  // throws on coincident sources
  return {r, mean_q - s * (r * mean_p)};
}

namespace {

struct Correspondences {
  std::vector<std::pair<Vec3, Vec3>> pairs;  // (source point, target point)
  int count = 0;
};

// Gated nearest-neighbor correspondences of the transformed source into the
// target index. Query order is fixed, so the result is deterministic.
Correspondences find_correspondences(const std::vector<Vec3>& src,
                                     const TransformSim3& t,
                                     const SpatialIndex& tgt, double gate) {
  const std::int64_t n = static_cast<std::int64_t>(src.size());
  std::vector<int> hit(src.size(), -1);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto [id, dist] = tgt.nearest(t * src[static_cast<std::size_t>(i)]);
    if (dist <= gate) hit[static_cast<std::size_t>(i)] = id;
  }
  Correspondences out;
  out.pairs.reserve(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    if (hit[i] >= 0) out.pairs.emplace_back(src[i], tgt.point(hit[i]));
  out.count = static_cast<int>(out.pairs.size());
  return out;
}

double sim3_objective(const std::vector<std::pair<Vec3, Vec3>>& pairs,
                      const TransformSim3& t, double lambda, double anchor) {
  double obj = lambda * (t.scale - anchor) * (t.scale - anchor);
  for (const auto& [p, q] : pairs) obj += (q - t * p).squaredNorm();
  return obj;
}

double bbox_diagonal(const std::vector<Vec3>& points) {
  Vec3 lo = points.front(), hi = points.front();
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

}  // namespace

IcpResult regularized_sim3_icp(const ColoredPointCloud& src,
                               const ColoredPointCloud& tgt,
                               const TransformSim3& init,
                               const IcpConfig& cfg) {
  if (src.size() < 10 || tgt.size() < 10)
    throw DegenerateInput("regularized_sim3_icp: clouds too small");

  // Lambda is frozen from the source cloud as placed by the initial
  // transform.
  std::vector<Vec3> init_positions(src.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    init_positions[i] = init * src.positions[i];
  const double lambda =
      compute_lambda(src.size(), bbox_diagonal(init_positions), cfg.beta);

  const SpatialIndex tgt_index(tgt.positions);
  TransformSim3 transform = init;
  IcpResult result;
  result.transform = transform;

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Correspondences corr =
        find_correspondences(src.positions, transform, tgt_index,
                             cfg.max_correspondence_distance);
    if (corr.count < 3)
      throw NoCorrespondences("regularized_sim3_icp: fewer than 3 gated pairs");

    const double obj_before =
        sim3_objective(corr.pairs, transform, lambda, cfg.anchor_scale);

    const auto [r, t] = estimate_rt_fixed_scale(corr.pairs, transform.scale);
    const double s =
        closed_form_scale(corr.pairs, r, t, lambda, cfg.anchor_scale);
    if (!(s > 0.0))
      throw DegenerateInput("regularized_sim3_icp: non-positive scale");
    transform = TransformSim3{s, r, t};

    const double obj_after =
        sim3_objective(corr.pairs, transform, lambda, cfg.anchor_scale);

    result.transform = transform;
    result.final_objective = obj_after;
    result.iterations_used = it;
    result.correspondence_count = corr.count;
    if (std::abs(obj_before - obj_after) <=
        cfg.convergence_tol * std::max(obj_before, 1e-12)) {
      result.converged = true;
      break;
    }
  }
  return result;
}

std::pair<PoseSE3, double> icp_se3(const ColoredPointCloud& src,
                                   const ColoredPointCloud& tgt,
                                   const PoseSE3& init,
                                   const RigidIcpConfig& cfg) {
  if (src.size() < 10 || tgt.size() < 10)
    throw DegenerateInput("icp_se3: clouds too small");

  const SpatialIndex tgt_index(tgt.positions);
  TransformSim3 transform{1.0, init.rotation, init.translation};

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    const Correspondences corr =
        find_correspondences(src.positions, transform, tgt_index,
                             cfg.max_correspondence_distance);
    if (corr.count < 3)
      throw NoCorrespondences("icp_se3: fewer than 3 gated pairs");

    const double obj_before = sim3_objective(corr.pairs, transform, 0.0, 1.0);
    const auto [r, t] = estimate_rt_fixed_scale(corr.pairs, 1.0);
    transform = TransformSim3{1.0, r, t};
    const double obj_after = sim3_objective(corr.pairs, transform, 0.0, 1.0);
    if (std::abs(obj_before - obj_after) <=
        cfg.convergence_tol * std::max(obj_before, 1e-12))
      break;
  }

  const Correspondences final_corr =
      find_correspondences(src.positions, transform, tgt_index,
                           cfg.max_correspondence_distance);
  const double fitness = static_cast<double>(final_corr.count) /
                         static_cast<double>(src.size());
  return {PoseSE3{transform.rotation, transform.translation}, fitness};
}

}  // namespace mapfuse
