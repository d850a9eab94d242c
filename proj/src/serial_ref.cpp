#include "mapfuse/serial_ref.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>

namespace mapfuse::serial {

std::pair<int, double> nearest(const std::vector<Vec3>& points,
                               const Vec3& query) {
  if (points.empty()) throw EmptyIndex("serial::nearest: empty point set");
  int best = 0;
  double best_d2 = (points[0] - query).squaredNorm();
  for (int i = 1; i < static_cast<int>(points.size()); ++i) {
    const double d2 = (points[static_cast<std::size_t>(i)] - query).squaredNorm();
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return {best, std::sqrt(best_d2)};
}

std::vector<int> radius(const std::vector<Vec3>& points, const Vec3& query,
                        double r) {
  std::vector<int> out;
  for (int i = 0; i < static_cast<int>(points.size()); ++i)
    if ((points[static_cast<std::size_t>(i)] - query).norm() <= r)
      out.push_back(i);
  return out;
}

double color_distance(const ColoredPointCloud& src,
                      const ColoredPointCloud& ref) {
  if (src.empty() || ref.empty())
    throw EmptyCloud("serial::color_distance: empty cloud");
  double forward = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const int j = nearest(ref.positions, src.positions[i]).first;
    forward += (src.colors[i] - ref.colors[static_cast<std::size_t>(j)]).norm();
  }
  double backward = 0.0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    const int i = nearest(src.positions, ref.positions[j]).first;
    backward += (ref.colors[j] - src.colors[static_cast<std::size_t>(i)]).norm();
  }
  return forward / (2.0 * static_cast<double>(src.size())) +
         backward / (2.0 * static_cast<double>(ref.size()));
}

double local_color_recall(const ColoredPointCloud& src,
                          const ColoredPointCloud& ref, double tau,
                          double r_g) {
  if (src.empty() || ref.empty())
    throw EmptyCloud("serial::local_color_recall: empty cloud");
  std::size_t recalled = 0;
  for (std::size_t j = 0; j < ref.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < src.size(); ++i)
      if ((src.positions[i] - ref.positions[j]).norm() <= r_g)
        best = std::min(best, (src.colors[i] - ref.colors[j]).norm());
    if (best <= 3.0 * tau) ++recalled;
  }
  return static_cast<double>(recalled) / static_cast<double>(ref.size());
}

double color_consistency_score(const ColoredPointCloud& cloud,
                               double voxel_size) {
  if (cloud.empty())
    throw EmptyCloud("serial::color_consistency_score: empty cloud");
  Vec3 origin = cloud.positions.front();
  for (const Vec3& p : cloud.positions) origin = origin.cwiseMin(p);

  std::map<std::array<std::int64_t, 3>, std::vector<std::size_t>> cells;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 rel = (cloud.positions[i] - origin) / voxel_size;
    cells[{static_cast<std::int64_t>(std::floor(rel.x())),
           static_cast<std::int64_t>(std::floor(rel.y())),
           static_cast<std::int64_t>(std::floor(rel.z()))}]
        .push_back(i);
  }

  double sum = 0.0;
  std::size_t occupied = 0;
  for (const auto& [key, ids] : cells) {
    if (ids.size() < 2) continue;
    Vec3 mean = Vec3::Zero();
    for (std::size_t i : ids) mean += cloud.colors[i];
    mean /= static_cast<double>(ids.size());
    Mat3 cov = Mat3::Zero();
    for (std::size_t i : ids) {
      const Vec3 d = cloud.colors[i] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(ids.size() - 1);
    sum += cov.trace();
    ++occupied;
  }
  return occupied == 0 ? 0.0 : sum / static_cast<double>(occupied);
}

double geometric_chamfer(const ColoredPointCloud& src,
                         const ColoredPointCloud& ref) {
  if (src.empty() || ref.empty())
    throw EmptyCloud("serial::geometric_chamfer: empty cloud");
  double forward = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i)
    forward += nearest(ref.positions, src.positions[i]).second;
  double backward = 0.0;
  for (std::size_t j = 0; j < ref.size(); ++j)
    backward += nearest(src.positions, ref.positions[j]).second;
  return forward / (2.0 * static_cast<double>(src.size())) +
         backward / (2.0 * static_cast<double>(ref.size()));
}

double overlap_fitness(const ColoredPointCloud& src,
                       const ColoredPointCloud& ref, double gate) {
  if (src.empty() || ref.empty())
    throw EmptyCloud("serial::overlap_fitness: empty cloud");
  std::size_t within = 0;
  for (std::size_t i = 0; i < src.size(); ++i)
    if (nearest(ref.positions, src.positions[i]).second <= gate) ++within;
  return static_cast<double>(within) / static_cast<double>(src.size());
}

}  // namespace mapfuse::serial
