#pragma once

#include <utility>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

/// kd-tree over a fixed point set. Queries are exact (match exhaustive
/// scan), read-only, and safe to issue concurrently. Nearest-neighbor ties
/// break toward the lowest point id.
class SpatialIndex {
 public:
  explicit SpatialIndex(std::vector<Vec3> points);

  std::size_t size() const { return points_.size(); }
  const Vec3& point(int id) const { return points_[static_cast<std::size_t>(id)]; }

  /// Closest indexed point id and its Euclidean distance.
  std::pair<int, double> nearest(const Vec3& query) const;

  /// Ids of all points within `radius` of `query`, ascending.
  std::vector<int> radius(const Vec3& query, double radius) const;

 private:
  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range into ids_
  };

  int build(int begin, int end);
  void search_nearest(int node, const Vec3& q, int& best_id,
                      double& best_d2) const;
  void search_radius(int node, const Vec3& q, double r2,
                     std::vector<int>& out) const;

  std::vector<Vec3> points_;
  std::vector<int> ids_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace mapfuse
