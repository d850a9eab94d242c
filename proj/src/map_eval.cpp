#include "mapfuse/map_eval.hpp"

#include <cmath>
#include <cstdint>
#include <limits>

#include "mapfuse/spatial_index.hpp"

namespace mapfuse {

namespace {

void require_nonempty(const ColoredPointCloud& c, const char* what) {
  if (c.empty()) throw EmptyCloud(what);
}

// Per-point terms are computed in parallel, then accumulated in index order
// so results are reproducible.
double mean_of(const std::vector<double>& terms) {
  double sum = 0.0;
  for (double t : terms) sum += t;
  return sum / static_cast<double>(terms.size());
}

// Mean nearest-neighbor color distance of each `from` point into `to`.
double directed_color_term(const ColoredPointCloud& from,
                           const ColoredPointCloud& to,
                           const SpatialIndex& to_index) {
  const std::int64_t n = static_cast<std::int64_t>(from.size());
  std::vector<double> terms(from.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    const auto [id, dist] = to_index.nearest(from.positions[idx]);
    terms[idx] = (from.colors[idx] - to.colors[static_cast<std::size_t>(id)]).norm();
  }
  return mean_of(terms);
}

double directed_chamfer_term(const ColoredPointCloud& from,
                             const SpatialIndex& to_index) {
  const std::int64_t n = static_cast<std::int64_t>(from.size());
  std::vector<double> terms(from.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    terms[idx] = to_index.nearest(from.positions[idx]).second;
  }
  return mean_of(terms);
}

}  // namespace

VoxelGrid build_voxel_grid(const ColoredPointCloud& cloud, double voxel_size) {
  require_nonempty(cloud, "build_voxel_grid: empty cloud");
  if (!(voxel_size > 0.0)) throw DataError("voxel size must be positive");

  VoxelGrid grid;
  grid.voxel_size = voxel_size;
  grid.origin = cloud.positions.front();
  for (const Vec3& p : cloud.positions) grid.origin = grid.origin.cwiseMin(p);

  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const Vec3 rel = (cloud.positions[static_cast<std::size_t>(i)] - grid.origin) / voxel_size;
    grid.cells[{static_cast<std::int64_t>(std::floor(rel.x())),
                static_cast<std::int64_t>(std::floor(rel.y())),
                static_cast<std::int64_t>(std::floor(rel.z()))}]
        .push_back(i);
  }
  return grid;
}

double color_distance(const ColoredPointCloud& src,
                      const ColoredPointCloud& ref) {
  require_nonempty(src, "color_distance: empty source");
  require_nonempty(ref, "color_distance: empty reference");
  const SpatialIndex src_index(src.positions);
  const SpatialIndex ref_index(ref.positions);
  return 0.5 * directed_color_term(src, ref, ref_index) +
         0.5 * directed_color_term(ref, src, src_index);
}

double color_fidelity(double cd, double cap_db) {
  if (cd <= 0.0) return cap_db;
  return -20.0 * std::log10(cd);
}

double local_color_recall(const ColoredPointCloud& src,
                          const ColoredPointCloud& ref, double tau,
                          double r_g) {
  require_nonempty(src, "local_color_recall: empty source");
  require_nonempty(ref, "local_color_recall: empty reference");
  if (!(tau > 0.0) || !(r_g > 0.0))
    throw DataError("local_color_recall: tau and r_g must be positive");

  const SpatialIndex src_index(src.positions);
  const std::int64_t n = static_cast<std::int64_t>(ref.size());
  std::vector<double> recalled(ref.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    const std::size_t idx = static_cast<std::size_t>(j);
    double best = std::numeric_limits<double>::infinity();
    for (int i : src_index.radius(ref.positions[idx], r_g))
      best = std::min(best, (src.colors[static_cast<std::size_t>(i)] -
                             ref.colors[idx]).norm());
    recalled[idx] = best <= 3.0 * tau ? 1.0 : 0.0;
  }
  return mean_of(recalled);
}

double color_consistency_score(const ColoredPointCloud& cloud,
                               double voxel_size) {
  const VoxelGrid grid = build_voxel_grid(cloud, voxel_size);

  double sum = 0.0;
  std::size_t occupied = 0;
  for (const auto& [key, ids] : grid.cells) {
    const std::size_t n = ids.size();
    if (n < 2) continue;
    Vec3 mean = Vec3::Zero();
    for (int i : ids) mean += cloud.colors[static_cast<std::size_t>(i)];
    mean /= static_cast<double>(n);
    double trace = 0.0;
    for (int i : ids)
      trace += (cloud.colors[static_cast<std::size_t>(i)] - mean).squaredNorm();
    sum += trace / static_cast<double>(n - 1);
    ++occupied;
  }
  return occupied == 0 ? 0.0 : sum / static_cast<double>(occupied);
}

double geometric_chamfer(const ColoredPointCloud& src,
                         const ColoredPointCloud& ref) {
  require_nonempty(src, "geometric_chamfer: empty source");
  require_nonempty(ref, "geometric_chamfer: empty reference");
  const SpatialIndex src_index(src.positions);
  const SpatialIndex ref_index(ref.positions);
  return 0.5 * directed_chamfer_term(src, ref_index) +
         0.5 * directed_chamfer_term(ref, src_index);
}

double overlap_fitness(const ColoredPointCloud& src,
                       const ColoredPointCloud& ref, double gate) {
  require_nonempty(src, "overlap_fitness: empty source");
  require_nonempty(ref, "overlap_fitness: empty reference");
  if (!(gate > 0.0)) throw DataError("overlap_fitness: gate must be positive");

  const SpatialIndex ref_index(ref.positions);
  const std::int64_t n = static_cast<std::int64_t>(src.size());
  std::vector<double> within(src.size(), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    within[idx] = ref_index.nearest(src.positions[idx]).second <= gate ? 1.0 : 0.0;
  }
  return mean_of(within);
}

ColorMetricsReport evaluate_colored_clouds(const ColoredPointCloud& src,
                                           const ColoredPointCloud& ref,
                                           const ColorMetricsParams& params) {
  ColorMetricsReport report;
  report.parameters = params;
  report.n_src = src.size();
  report.n_ref = ref.size();
  report.cd = color_distance(src, ref);
  report.cf = color_fidelity(report.cd, params.cf_cap_db);
  report.lcr = local_color_recall(src, ref, params.tau, params.r_g);
  report.ccs = color_consistency_score(src, params.voxel_size);
  return report;
}

}  // namespace mapfuse
