#pragma once

#include <utility>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse::serial {

// Exhaustive-scan reference implementations of the spatial queries and all
// cloud metrics. Single-threaded, O(N^2), no index structures. Kept as the
// independent check for the parallel kd-tree-backed kernels and as the
// baseline side of the benchmark.

std::pair<int, double> nearest(const std::vector<Vec3>& points,
                               const Vec3& query);

std::vector<int> radius(const std::vector<Vec3>& points, const Vec3& query,
                        double r);

double color_distance(const ColoredPointCloud& src,
                      const ColoredPointCloud& ref);

double local_color_recall(const ColoredPointCloud& src,
                          const ColoredPointCloud& ref, double tau,
                          double r_g);

double color_consistency_score(const ColoredPointCloud& cloud,
                               double voxel_size);

double geometric_chamfer(const ColoredPointCloud& src,
                         const ColoredPointCloud& ref);

double overlap_fitness(const ColoredPointCloud& src,
                       const ColoredPointCloud& ref, double gate);

}  // namespace mapfuse::serial
