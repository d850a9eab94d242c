#pragma once

#include <json.hpp>
#include <string>
#include <vector>

#include "mapfuse/icp.hpp"
#include "mapfuse/io.hpp"
#include "mapfuse/pose_graph.hpp"
#include "mapfuse/prefusion.hpp"
#include "mapfuse/types.hpp"

namespace mapfuse {

struct SessionData {
  ColoredPointCloud cloud;
  TimedTrajectory traj;
};

struct PipelineInputs {
  ColoredPointCloud lidar_cloud;
  TimedTrajectory lidar_traj;
  Extrinsics extrinsics;
  std::vector<SessionData> sessions;
};

PipelineInputs load_inputs(const SessionManifest& manifest);

struct PipelineResult {
  ColoredPointCloud fused_cloud;
  std::vector<SessionAlignment> alignments;       // after scale repair
  std::vector<TransformSim3> session_transforms;  // session -> metric world
  std::vector<IcpResult> icp_results;
  PoseGraph graph;
  PgoResult pgo;
  nlohmann::ordered_json report;
};

/// Runs the full coarse-to-fine pipeline: camera trajectory conversion,
/// per-session coarse alignment, scale consensus and repair, regularized
/// Sim(3) registration, pose graph optimization, and propagation into one
/// fused metric cloud.
PipelineResult run_pipeline(const PipelineInputs& inputs,
                            const PipelineConfig& config);

PipelineResult run_pipeline(const SessionManifest& manifest,
                            const PipelineConfig& config);

/// Human-readable rendering of the machine report.
std::string render_text_report(const nlohmann::ordered_json& report);

}  // namespace mapfuse
