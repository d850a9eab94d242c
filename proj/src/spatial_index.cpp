#include "mapfuse/spatial_index.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mapfuse {

namespace {
constexpr int kLeafSize = 16;
}

SpatialIndex::SpatialIndex(std::vector<Vec3> points)
    : points_(std::move(points)) {
  ids_.resize(points_.size());
  std::iota(ids_.begin(), ids_.end(), 0);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    root_ = build(0, static_cast<int>(points_.size()));
  }
}

int SpatialIndex::build(int begin, int end) {
  const int node_index = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  if (end - begin <= kLeafSize) {
    nodes_[node_index].begin = begin;
    nodes_[node_index].end = end;
    return node_index;
  }

  Vec3 lo = points_[ids_[begin]];
  Vec3 hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[ids_[i]]);
    hi = hi.cwiseMax(points_[ids_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const int mid = begin + (end - begin) / 2;
  std::nth_element(ids_.begin() + begin, ids_.begin() + mid,
                   ids_.begin() + end, [&](int a, int b) {
                     if (points_[a][axis] != points_[b][axis])
                       return points_[a][axis] < points_[b][axis];
                     return a < b;
                   });

  const double split = points_[ids_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[node_index].axis = axis;
  nodes_[node_index].split = split;
  nodes_[node_index].left = left;
  nodes_[node_index].right = right;
  return node_index;
}

void SpatialIndex::search_nearest(int node, const Vec3& q, int& best_id,
                                  double& best_d2) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int id = ids_[i];
      const double d2 = (points_[id] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && id < best_id)) {
        best_d2 = d2;
        best_id = id;
      }
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search_nearest(near, q, best_id, best_d2);
  // Equal distance must still be explored so id tie-breaks stay exact.
  if (delta * delta <= best_d2) search_nearest(far, q, best_id, best_d2);
}

std::pair<int, double> SpatialIndex::nearest(const Vec3& query) const {
  if (points_.empty()) throw EmptyIndex("nearest: empty spatial index");
  int best_id = std::numeric_limits<int>::max();
  double best_d2 = std::numeric_limits<double>::infinity();
  search_nearest(root_, query, best_id, best_d2);
  return {best_id, std::sqrt(best_d2)};
}

void SpatialIndex::search_radius(int node, const Vec3& q, double r2,
                                 std::vector<int>& out) const {
  const Node& n = nodes_[node];
  if (n.axis < 0) {
    for (int i = n.begin; i < n.end; ++i) {
      const int id = ids_[i];
      if ((points_[id] - q).squaredNorm() <= r2) out.push_back(id);
    }
    return;
  }
  const double delta = q[n.axis] - n.split;
  const int near = delta < 0.0 ? n.left : n.right;
  const int far = delta < 0.0 ? n.right : n.left;
  search_radius(near, q, r2, out);
  if (delta * delta <= r2) search_radius(far, q, r2, out);
}

std::vector<int> SpatialIndex::radius(const Vec3& query, double radius) const {
  std::vector<int> out;
  if (points_.empty()) return out;
  search_radius(root_, query, radius * radius, out);
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace mapfuse
