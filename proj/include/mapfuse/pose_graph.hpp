#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

using NodeId = std::pair<int, int>;  // (session id, frame index)

struct PoseNode {
  NodeId id{0, 0};
  PoseSE3 pose;        // world frame
  bool fixed = false;  // exactly one node per graph (the gauge)
};

enum class EdgeKind { kIntraSession, kInterSession };

struct PoseEdge {
  NodeId from{0, 0};
  NodeId to{0, 0};
  PoseSE3 relative;  // measured from -> to
  EdgeKind kind = EdgeKind::kIntraSession;
  Mat6 information = Mat6::Identity();  // symmetric positive definite
};

struct PoseGraph {
  std::map<NodeId, PoseNode> nodes;
  std::vector<PoseEdge> edges;

  /// Throws DataError unless endpoints exist, the graph is connected, and
  /// exactly one node is fixed.
  void validate() const;
};

/// One node per frame, consecutive intra-session odometry edges, the given
/// inter-session edges verbatim, node (session 0, frame 0) fixed.
PoseGraph build_pose_graph(const std::vector<TimedTrajectory>& sessions,
                           const std::vector<PoseEdge>& inter_constraints,
                           const Mat6& intra_information);

struct PgoConfig {
  double damping_init = 1e-4;
  double tol = 1e-8;  // relative chi2 change
  int max_iterations = 100;
};

struct PgoResult {
  std::map<NodeId, PoseSE3> poses;
  double final_chi2 = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Levenberg-damped Gauss-Newton over the 6-dof tangent space of all
/// non-fixed nodes. Steps that increase chi2 are rejected.
PgoResult optimize_pose_graph(const PoseGraph& graph, const PgoConfig& cfg);

/// Transforms each frame cloud by its optimized world pose and concatenates.
ColoredPointCloud propagate_poses_to_clouds(
    const std::vector<std::pair<NodeId, ColoredPointCloud>>& frame_clouds,
    const std::map<NodeId, PoseSE3>& optimized_poses);

/// g2o-style text dump: VERTEX_SE3:QUAT / EDGE_SE3:QUAT records, node ids
/// numbered consecutively in (session, frame) order.
std::string dump_g2o(const PoseGraph& graph);

}  // namespace mapfuse
