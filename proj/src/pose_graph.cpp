#include "mapfuse/pose_graph.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Geometry>
#include <cmath>
#include <sstream>

#include "mapfuse/geometry.hpp"

namespace mapfuse {

namespace {

// Union-find over node indices.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) {
    for (int i = 0; i < n; ++i) parent[i] = i;
  }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

}  // namespace

void PoseGraph::validate() const {
  if (nodes.empty()) throw DataError("pose graph: no nodes");

  std::map<NodeId, int> index;
  int fixed_count = 0;
  for (const auto& [id, node] : nodes) {
    index.emplace(id, static_cast<int>(index.size()));
    if (node.fixed) ++fixed_count;
  }
  if (fixed_count != 1)
    throw DataError("pose graph: exactly one fixed node required");

  DisjointSet ds(static_cast<int>(nodes.size()));
  for (const PoseEdge& e : edges) {
    auto from = index.find(e.from);
    auto to = index.find(e.to);
    if (from == index.end() || to == index.end())
      throw DataError("pose graph: edge endpoint missing");
    if (e.from == e.to) throw DataError("pose graph: self edge");
    ds.unite(from->second, to->second);
  }
  const int root = ds.find(0);
  for (int i = 1; i < static_cast<int>(nodes.size()); ++i)
    if (ds.find(i) != root)
      throw DisconnectedGraph("pose graph: disconnected component");
}

PoseGraph build_pose_graph(const std::vector<TimedTrajectory>& sessions,
                           const std::vector<PoseEdge>& inter_constraints,
                           const Mat6& intra_information) {
  if (sessions.empty()) throw DataError("build_pose_graph: no sessions");

  PoseGraph graph;
  for (int k = 0; k < static_cast<int>(sessions.size()); ++k) {
    const TimedTrajectory& traj = sessions[static_cast<std::size_t>(k)];
    for (int i = 0; i < static_cast<int>(traj.size()); ++i) {
      const NodeId id{k, i};
      graph.nodes[id] = PoseNode{
          id, traj.entries[static_cast<std::size_t>(i)].pose, id == NodeId{0, 0}};
      if (i > 0) {
        const PoseSE3& prev =
            traj.entries[static_cast<std::size_t>(i - 1)].pose;
        const PoseSE3& cur = traj.entries[static_cast<std::size_t>(i)].pose;
        graph.edges.push_back(PoseEdge{NodeId{k, i - 1}, id,
                                       prev.inverse() * cur,
                                       EdgeKind::kIntraSession,
                                       intra_information});
      }
    }
  }
  for (const PoseEdge& e : inter_constraints) graph.edges.push_back(e);
  graph.validate();
  return graph;
}

namespace {

Vec6 edge_error(const PoseEdge& e, const PoseSE3& from, const PoseSE3& to) {
  return se3_log(e.relative.inverse() * (from.inverse() * to));
}

double graph_chi2(const PoseGraph& graph,
                  const std::map<NodeId, PoseSE3>& poses) {
  double chi2 = 0.0;
  for (const PoseEdge& e : graph.edges) {
    const Vec6 err = edge_error(e, poses.at(e.from), poses.at(e.to));
    chi2 += err.dot(e.information * err);
  }
  return chi2;
}

PoseSE3 retract(const PoseSE3& pose, const Vec6& delta) {
  return pose * se3_exp(delta);
}

}  // namespace

PgoResult optimize_pose_graph(const PoseGraph& graph, const PgoConfig& cfg) {
  graph.validate();

  // Free-variable indexing: all non-fixed nodes in id order.
  std::map<NodeId, int> free_index;
  for (const auto& [id, node] : graph.nodes)
    if (!node.fixed) free_index.emplace(id, static_cast<int>(free_index.size()));
  const int dim = 6 * static_cast<int>(free_index.size());

  PgoResult result;
  for (const auto& [id, node] : graph.nodes) result.poses[id] = node.pose;
  result.final_chi2 = graph_chi2(graph, result.poses);
  if (dim == 0 || graph.edges.empty() || result.final_chi2 <= 1e-24) {
    result.converged = true;
    return result;
  }

  double damping = cfg.damping_init;
  const double jac_step = 1e-6;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    Eigen::MatrixXd hessian = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd gradient = Eigen::VectorXd::Zero(dim);

    for (const PoseEdge& e : graph.edges) {
      const PoseSE3& from = result.poses.at(e.from);
      const PoseSE3& to = result.poses.at(e.to);
      const Vec6 err = edge_error(e, from, to);

      // Central-difference Jacobians on the right tangent of each endpoint.
      Eigen::Matrix<double, 6, 12> jac;
      for (int d = 0; d < 6; ++d) {
        Vec6 delta = Vec6::Zero();
        delta(d) = jac_step;
        jac.col(d) = (edge_error(e, retract(from, delta), to) -
                      edge_error(e, retract(from, -delta), to)) /
                     (2.0 * jac_step);
        jac.col(6 + d) = (edge_error(e, from, retract(to, delta)) -
                          edge_error(e, from, retract(to, -delta))) /
                         (2.0 * jac_step);
      }

      auto it_from = free_index.find(e.from);
      auto it_to = free_index.find(e.to);
      const int bi = it_from == free_index.end() ? -1 : 6 * it_from->second;
      const int bj = it_to == free_index.end() ? -1 : 6 * it_to->second;
      const Eigen::Matrix<double, 6, 6> ja = jac.leftCols<6>();
      const Eigen::Matrix<double, 6, 6> jb = jac.rightCols<6>();

      if (bi >= 0) {
        hessian.block<6, 6>(bi, bi) += ja.transpose() * e.information * ja;
        gradient.segment<6>(bi) += ja.transpose() * e.information * err;
      }
      if (bj >= 0) {
        hessian.block<6, 6>(bj, bj) += jb.transpose() * e.information * jb;
        gradient.segment<6>(bj) += jb.transpose() * e.information * err;
      }
      if (bi >= 0 && bj >= 0) {
        hessian.block<6, 6>(bi, bj) += ja.transpose() * e.information * jb;
        hessian.block<6, 6>(bj, bi) += jb.transpose() * e.information * ja;
      }
    }

    if (!hessian.allFinite() || !gradient.allFinite())
      throw SingularSystem("optimize_pose_graph: non-finite normal equations");

    bool accepted = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      Eigen::MatrixXd damped = hessian;
      damped.diagonal().array() += damping;
      const Eigen::VectorXd step = damped.ldlt().solve(-gradient);
      if (!step.allFinite())
        throw SingularSystem("optimize_pose_graph: singular normal equations");

      std::map<NodeId, PoseSE3> trial = result.poses;
      for (const auto& [id, idx] : free_index)
        trial[id] = retract(trial[id], step.segment<6>(6 * idx));

      const double trial_chi2 = graph_chi2(graph, trial);
      if (trial_chi2 <= result.final_chi2) {
        const double previous = result.final_chi2;
        result.poses = std::move(trial);
        result.final_chi2 = trial_chi2;
        damping = std::max(damping * 0.1, 1e-12);
        accepted = true;
        result.iterations = iter + 1;
        if (previous - trial_chi2 <= cfg.tol * std::max(previous, 1e-30)) {
          result.converged = true;
          return result;
        }
        break;
      }
      damping *= 10.0;
    }
    if (!accepted) {
      // No descending step found at any damping; treat as converged.
      result.converged = true;
      return result;
    }
  }
  return result;  // iteration cap: converged stays false
}

ColoredPointCloud propagate_poses_to_clouds(
    const std::vector<std::pair<NodeId, ColoredPointCloud>>& frame_clouds,
    const std::map<NodeId, PoseSE3>& optimized_poses) {
  ColoredPointCloud out;
  std::size_t total = 0;
  for (const auto& [id, cloud] : frame_clouds) total += cloud.size();
  out.positions.reserve(total);
  out.colors.reserve(total);

  for (const auto& [id, cloud] : frame_clouds) {
    auto it = optimized_poses.find(id);
    if (it == optimized_poses.end())
      throw MissingPose("propagate_poses_to_clouds: no pose for frame");
    const PoseSE3& pose = it->second;
    for (std::size_t i = 0; i < cloud.size(); ++i)
      out.append(pose * cloud.positions[i], cloud.colors[i]);
  }
  return out;
}

std::string dump_g2o(const PoseGraph& graph) {
  std::map<NodeId, int> index;
  for (const auto& [id, node] : graph.nodes)
    index.emplace(id, static_cast<int>(index.size()));

  std::ostringstream os;
  os.precision(12);
  for (const auto& [id, node] : graph.nodes) {
    const Eigen::Quaterniond q(node.pose.rotation);
    const Vec3& t = node.pose.translation;
    os << "VERTEX_SE3:QUAT " << index.at(id) << ' ' << t.x() << ' ' << t.y()
       << ' ' << t.z() << ' ' << q.x() << ' ' << q.y() << ' ' << q.z() << ' '
       << q.w() << '\n';
  }
  for (const PoseEdge& e : graph.edges) {
    const Eigen::Quaterniond q(e.relative.rotation);
    const Vec3& t = e.relative.translation;
    os << "EDGE_SE3:QUAT " << index.at(e.from) << ' ' << index.at(e.to) << ' '
       << t.x() << ' ' << t.y() << ' ' << t.z() << ' ' << q.x() << ' ' << q.y()
       << ' ' << q.z() << ' ' << q.w();
    for (int row = 0; row < 6; ++row)
      for (int col = row; col < 6; ++col) os << ' ' << e.information(row, col);
    os << '\n';
  }
  return os.str();
}

}  // namespace mapfuse
