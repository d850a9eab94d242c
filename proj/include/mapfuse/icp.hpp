#pragma once

#include <utility>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

struct IcpConfig {
  double beta = 0.1;  // regularization strength, in (0, 1]
  int max_iterations = 50;
  double max_correspondence_distance = 1.0;  // meters
  double convergence_tol = 1e-6;             // relative objective change
  double anchor_scale = 1.0;                 // regularizer target s1*
};

struct IcpResult {
  TransformSim3 transform;
  double final_objective = 0.0;
  int iterations_used = 0;
  int correspondence_count = 0;
  bool converged = false;
};

/// Regularization weight: beta * n * D^2 for n source points and
/// bounding-box diagonal D.
double compute_lambda(std::size_t n, double bbox_diag, double beta);

/// Closed-form regularized scale for fixed rotation/translation:
/// [sum (q - t)^T R p + lambda * anchor] / [sum |R p|^2 + lambda].
double closed_form_scale(
    const std::vector<std::pair<Vec3, Vec3>>& correspondences, const Mat3& r,
    const Vec3& t, double lambda, double anchor);

/// Procrustes rotation plus translation minimizing
/// sum |q - (s R p + t)|^2 at fixed scale s.
std::pair<Mat3, Vec3> estimate_rt_fixed_scale(
    const std::vector<std::pair<Vec3, Vec3>>& correspondences, double s);

/// Sim(3) ICP with a scale regularizer anchored at cfg.anchor_scale.
/// Starts from `init` and alternates nearest-neighbor correspondences,
/// the fixed-scale rigid update, and the closed-form scale update.
IcpResult regularized_sim3_icp(const ColoredPointCloud& src,
                               const ColoredPointCloud& tgt,
                               const TransformSim3& init,
                               const IcpConfig& cfg);

struct RigidIcpConfig {
  int max_iterations = 50;
  double max_correspondence_distance = 1.0;
  double convergence_tol = 1e-6;
};

/// Point-to-point rigid ICP; returns the pose and the fraction of source
/// points with a gated correspondence at convergence.
std::pair<PoseSE3, double> icp_se3(const ColoredPointCloud& src,
                                   const ColoredPointCloud& tgt,
                                   const PoseSE3& init,
                                   const RigidIcpConfig& cfg);

}  // namespace mapfuse
