#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mapfuse/prefusion.hpp"
#include "mapfuse/types.hpp"

namespace mapfuse {

/// PLY point cloud reader: ASCII or binary-little-endian, float or double
/// x/y/z, uint8 or float red/green/blue. Extra vertex properties and
/// trailing elements are skipped.
ColoredPointCloud read_ply(const std::filesystem::path& path);

/// Binary-little-endian writer: float32 positions, uint8 colors
/// (round-half-to-even on x255).
void write_ply(const ColoredPointCloud& cloud,
               const std::filesystem::path& path);

/// TUM trajectory: `timestamp tx ty tz qx qy qz qw` per line, quaternion
/// scalar-last, '#' comments. Quaternions must be unit within 1e-3 and are
/// renormalized on load.
TimedTrajectory read_tum(const std::filesystem::path& path);
void write_tum(const TimedTrajectory& traj,
               const std::filesystem::path& path);

/// 16 row-major entries of the homogeneous cam_from_lidar matrix followed
/// by one time-offset scalar; '#' comments allowed.
Extrinsics read_extrinsics(const std::filesystem::path& path);
void write_extrinsics(const Extrinsics& ext,
                      const std::filesystem::path& path);

struct SessionManifest {
  struct Entry {
    int session_id = 0;
    std::filesystem::path cloud;
    std::filesystem::path traj;
  };
  std::filesystem::path lidar_cloud;
  std::filesystem::path lidar_traj;
  std::filesystem::path extrinsics;
  std::vector<Entry> sessions;  // ids contiguous from 0
};

/// `key = path` lines; paths resolved relative to the manifest's directory.
/// All referenced files must exist.
SessionManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const SessionManifest& manifest,
                    const std::filesystem::path& path);

struct PostfusionConfig {
  double beta = 0.1;
  double max_correspondence_distance = 1.0;
  double convergence_tol = 1e-6;
  int max_iterations = 50;
};

struct PgoSectionConfig {
  double sigma_trans = 0.05;  // meters, intra-session edges
  double sigma_rot = 0.01;    // radians
  double damping = 1e-4;
  double tol = 1e-8;
  int max_iterations = 100;
};

struct EvalSectionConfig {
  double tau = 0.1;
  double r_g = 0.5;
  double voxel_size = 0.1;
};

struct PipelineConfig {
  PrefusionConfig prefusion;
  PostfusionConfig postfusion;
  PgoSectionConfig pgo;
  EvalSectionConfig eval;
};

/// Flat `section.key = value` text config; unknown keys are errors.
PipelineConfig read_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& text);

}  // namespace mapfuse
