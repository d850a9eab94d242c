#pragma once

#include <array>
#include <map>
#include <vector>

#include "mapfuse/types.hpp"

namespace mapfuse {

/// Voxel partition anchored at the cloud's axis-aligned minimum corner.
struct VoxelGrid {
  double voxel_size = 0.1;
  Vec3 origin = Vec3::Zero();
  std::map<std::array<std::int64_t, 3>, std::vector<int>> cells;
};

VoxelGrid build_voxel_grid(const ColoredPointCloud& cloud, double voxel_size);

/// Bidirectional nearest-neighbor RGB distance, averaged over both clouds.
double color_distance(const ColoredPointCloud& src,
                      const ColoredPointCloud& ref);

/// Decibel form of the color distance, capped when cd == 0.
double color_fidelity(double cd, double cap_db = 120.0);

/// Fraction of reference points with a color match (<= 3 tau) among the
/// reconstructed points within radius r_g. Empty neighborhoods count as
/// not recalled.
double local_color_recall(const ColoredPointCloud& src,
                          const ColoredPointCloud& ref, double tau,
                          double r_g);

/// Mean RGB sample-covariance trace over voxels holding at least 2 points.
double color_consistency_score(const ColoredPointCloud& cloud,
                               double voxel_size);

/// Bidirectional nearest-neighbor position distance average.
double geometric_chamfer(const ColoredPointCloud& src,
                         const ColoredPointCloud& ref);

/// Fraction of src points whose nearest ref point lies within gate.
double overlap_fitness(const ColoredPointCloud& src,
                       const ColoredPointCloud& ref, double gate);

struct ColorMetricsParams {
  double tau = 0.1;
  double r_g = 0.5;         // meters
  double voxel_size = 0.1;  // meters
  double cf_cap_db = 120.0;
};

struct ColorMetricsReport {
  double cd = 0.0;
  double cf = 0.0;
  double lcr = 0.0;
  double ccs = 0.0;
  ColorMetricsParams parameters;
  std::size_t n_src = 0;
  std::size_t n_ref = 0;
};

ColorMetricsReport evaluate_colored_clouds(const ColoredPointCloud& src,
                                           const ColoredPointCloud& ref,
                                           const ColorMetricsParams& params);

}  // namespace mapfuse
