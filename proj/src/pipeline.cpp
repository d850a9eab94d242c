#include "mapfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <limits>
#include <sstream>

#include "mapfuse/geometry.hpp"
#include "mapfuse/spatial_index.hpp"

namespace mapfuse {

using ordered_json = nlohmann::ordered_json;

namespace {

// FNV-1a over raw doubles; used for the stage integrity chain in reports.
struct Hasher {
  std::uint64_t state = 0xcbf29ce484222325ULL;

  void add(double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    for (int i = 0; i < 8; ++i) {
      state ^= (bits >> (8 * i)) & 0xff;
      state *= 0x100000001b3ULL;
    }
  }
  void add(const Vec3& v) {
    add(v.x());
    add(v.y());
    add(v.z());
  }
  void add(const Mat3& m) {
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) add(m(r, c));
  }
  void add(const PoseSE3& p) {
    add(p.rotation);
    add(p.translation);
  }
  void add(const TransformSim3& t) {
    add(t.scale);
    add(t.rotation);
    add(t.translation);
  }
  void add(const ColoredPointCloud& c) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      add(c.positions[i]);
      add(c.colors[i]);
    }
  }
  void add(const TimedTrajectory& t) {
    for (const TimedEntry& e : t.entries) {
      add(e.timestamp);
      add(e.pose);
    }
  }
};

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_alignments(const std::vector<SessionAlignment>& a) {
  Hasher h;
  for (const SessionAlignment& s : a) {
    h.add(static_cast<double>(s.session_id));
    h.add(s.transform);
    h.add(s.linearity);
    h.add(s.raw_scale);
    h.add(s.corrected_scale);
    h.add(s.scale_inlier ? 1.0 : 0.0);
    h.add(s.rotation_corrected ? 1.0 : 0.0);
  }
  return h.state;
}

std::uint64_t hash_transforms(const std::vector<TransformSim3>& ts) {
  Hasher h;
  for (const TransformSim3& t : ts) h.add(t);
  return h.state;
}

std::uint64_t hash_graph(const PoseGraph& g) {
  Hasher h;
  for (const auto& [id, node] : g.nodes) {
    h.add(static_cast<double>(id.first));
    h.add(static_cast<double>(id.second));
    h.add(node.pose);
  }
  for (const PoseEdge& e : g.edges) h.add(e.relative);
  return h.state;
}

std::uint64_t hash_poses(const std::map<NodeId, PoseSE3>& poses) {
  Hasher h;
  for (const auto& [id, pose] : poses) {
    h.add(static_cast<double>(id.first));
    h.add(static_cast<double>(id.second));
    h.add(pose);
  }
  return h.state;
}

// Rethrows with the stage name (and, where the callable adds it, the
// session id) prepended, preserving the error branch for exit codes.
template <typename F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("stage ") + name + ": " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string("stage ") + name + ": " + e.what());
  }
}

}  // namespace

PipelineInputs load_inputs(const SessionManifest& manifest) {
  PipelineInputs inputs;
  inputs.lidar_cloud = read_ply(manifest.lidar_cloud);
  inputs.lidar_traj = read_tum(manifest.lidar_traj);
  inputs.extrinsics = read_extrinsics(manifest.extrinsics);
  for (const auto& entry : manifest.sessions)
    inputs.sessions.push_back(
        {read_ply(entry.cloud), read_tum(entry.traj)});
  return inputs;
}

PipelineResult run_pipeline(const SessionManifest& manifest,
                            const PipelineConfig& config) {
  return run_pipeline(stage("load", [&] { return load_inputs(manifest); }),
                      config);
}

PipelineResult run_pipeline(const PipelineInputs& inputs,
                            const PipelineConfig& config) {
  PipelineResult result;
  ordered_json& report = result.report;
  report["stages"] = ordered_json::array();
  std::uint64_t previous_hash = 0;
  auto record_stage = [&](const char* name, std::uint64_t input_hash,
                          std::uint64_t output_hash) {
    report["stages"].push_back({{"name", name},
                                {"input_hash", hex(input_hash)},
                                {"output_hash", hex(output_hash)}});
    previous_hash = output_hash;
  };

  {
    Hasher h;
    h.add(inputs.lidar_cloud);
    h.add(inputs.lidar_traj);
    for (const SessionData& s : inputs.sessions) {
      h.add(s.cloud);
      h.add(s.traj);
    }
    record_stage("load", 0, h.state);
  }
  const int session_count = static_cast<int>(inputs.sessions.size());

  // 1. LiDAR body poses -> camera poses in the metric world frame.
  const TimedTrajectory cam_traj = stage("camera_trajectory", [&] {
    return lidar_to_camera_trajectory(inputs.lidar_traj, inputs.extrinsics);
  });
  {
    Hasher h;
    h.add(cam_traj);
    record_stage("camera_trajectory", previous_hash, h.state);
  }

  // 2. Coarse per-session alignment (independent across sessions).
  std::vector<SessionAlignment> alignments(
      static_cast<std::size_t>(session_count));
  {
    const std::uint64_t input_hash = [&] {
      Hasher h;
      h.add(cam_traj);
      return h.state;
    }();
    stage("align_sessions", [&] {
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
      for (int k = 0; k < session_count; ++k) {
        try {
          alignments[static_cast<std::size_t>(k)] = align_session(
              k, inputs.sessions[static_cast<std::size_t>(k)].traj, cam_traj,
              config.prefusion);
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      return 0;
    });
    record_stage("align_sessions", input_hash, hash_alignments(alignments));
  }

  // 3. Scale consensus.
  const ScaleConsensus consensus = stage(
      "scale_ransac", [&] { return scale_ransac(alignments, config.prefusion); });
  {
    Hasher h;
    h.state = hash_alignments(alignments);
    h.add(consensus.best_scale);
    for (int id : consensus.inliers) h.add(static_cast<double>(id));
    record_stage("scale_ransac", hash_alignments(alignments), h.state);
  }

  // 4. Outlier scale repair from overlapping poses.
  OverlapPoses overlaps;
  for (int a = 0; a < session_count; ++a) {
    for (int b = a + 1; b < session_count; ++b) {
      std::vector<Vec3> pts_a, pts_b;
      const auto& ta = inputs.sessions[static_cast<std::size_t>(a)].traj;
      const auto& tb = inputs.sessions[static_cast<std::size_t>(b)].traj;
      for (const TimedEntry& ea : ta.entries) {
        const TimedEntry* best = nullptr;
        double best_gap = config.prefusion.max_gap;
        for (const TimedEntry& eb : tb.entries) {
          const double gap = std::abs(ea.timestamp - eb.timestamp);
          if (gap <= best_gap) {
            best_gap = gap;
            best = &eb;
          }
        }
        if (best != nullptr) {
          pts_a.push_back(ea.pose.translation);
          pts_b.push_back(best->pose.translation);
        }
      }
      if (pts_a.size() >= 3)
        overlaps[{a, b}] = {std::move(pts_a), std::move(pts_b)};
    }
  }
  {
    const std::uint64_t input_hash = previous_hash;
    alignments = stage("correct_outlier_scales", [&] {
      return correct_outlier_scales(alignments, consensus.inliers, overlaps);
    });
    record_stage("correct_outlier_scales", input_hash,
                 hash_alignments(alignments));
  }
  result.alignments = alignments;

  // 5. Regularized Sim(3) registration of each session cloud against the
  // LiDAR cloud, anchored at the repaired coarse scale.
  result.session_transforms.resize(static_cast<std::size_t>(session_count));
  result.icp_results.resize(static_cast<std::size_t>(session_count));
  {
    const std::uint64_t input_hash = hash_alignments(alignments);
    stage("registration", [&] {
      std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
      for (int k = 0; k < session_count; ++k) {
        try {
          const SessionAlignment& a = alignments[static_cast<std::size_t>(k)];
          // Coarse transform with the repaired scale; the translation is
          // re-fit so paired trajectory centroids stay matched.
          TransformSim3 init = a.transform;
          if (a.corrected_scale != a.raw_scale) {
            init.scale = a.corrected_scale;
            const auto pairs = pair_poses_by_timestamp(
                inputs.sessions[static_cast<std::size_t>(k)].traj, cam_traj,
                config.prefusion.max_gap);
            Vec3 mean_src = Vec3::Zero(), mean_tgt = Vec3::Zero();
            for (const PosePair& p : pairs) {
              mean_src += p.recon_pose.translation;
              mean_tgt += p.cam_pose.translation;
            }
            mean_src /= static_cast<double>(pairs.size());
            mean_tgt /= static_cast<double>(pairs.size());
            init.translation =
                mean_tgt - init.scale * (init.rotation * mean_src);
          }

          IcpConfig icp_cfg;
          icp_cfg.beta = config.postfusion.beta;
          icp_cfg.max_iterations = config.postfusion.max_iterations;
          icp_cfg.max_correspondence_distance =
              config.postfusion.max_correspondence_distance;
          icp_cfg.convergence_tol = config.postfusion.convergence_tol;
          icp_cfg.anchor_scale = a.corrected_scale;

          const IcpResult icp = regularized_sim3_icp(
              inputs.sessions[static_cast<std::size_t>(k)].cloud,
              inputs.lidar_cloud, init, icp_cfg);
          result.icp_results[static_cast<std::size_t>(k)] = icp;
          result.session_transforms[static_cast<std::size_t>(k)] =
              icp.transform;
        } catch (const Error& e) {
          const std::string msg =
              "session " + std::to_string(k) + ": " + e.what();
#pragma omp critical
          if (!failure)
            failure = std::make_exception_ptr(NumericalError(msg));
        } catch (...) {
#pragma omp critical
          if (!failure) failure = std::current_exception();
        }
      }
      if (failure) std::rethrow_exception(failure);
      return 0;
    });
    record_stage("registration", input_hash,
                 hash_transforms(result.session_transforms));
  }

  // 6. Metric per-session trajectories from the final transforms.
  std::vector<TimedTrajectory> metric_trajs(
      static_cast<std::size_t>(session_count));
  for (int k = 0; k < session_count; ++k) {
    const TransformSim3& t =
        result.session_transforms[static_cast<std::size_t>(k)];
    for (const TimedEntry& e :
         inputs.sessions[static_cast<std::size_t>(k)].traj.entries)
      metric_trajs[static_cast<std::size_t>(k)].entries.push_back(
          {e.timestamp,
           PoseSE3{t.rotation * e.pose.rotation, t * e.pose.translation}});
  }

  // 7. Inter-session constraints: rigid ICP between consecutive metric
  // session clouds, one edge at the temporally closest shared frame pair.
  Mat6 intra_info = Mat6::Identity();
  intra_info.topLeftCorner<3, 3>() *=
      1.0 / (config.pgo.sigma_trans * config.pgo.sigma_trans);
  intra_info.bottomRightCorner<3, 3>() *=
      1.0 / (config.pgo.sigma_rot * config.pgo.sigma_rot);

  std::vector<PoseEdge> inter_edges;
  std::vector<double> inter_fitness;
  stage("inter_session_constraints", [&] {
    for (int k = 0; k + 1 < session_count; ++k) {
      const ColoredPointCloud cloud_a = apply_sim3(
          result.session_transforms[static_cast<std::size_t>(k)],
          inputs.sessions[static_cast<std::size_t>(k)].cloud);
      const ColoredPointCloud cloud_b = apply_sim3(
          result.session_transforms[static_cast<std::size_t>(k + 1)],
          inputs.sessions[static_cast<std::size_t>(k + 1)].cloud);

      // Restrict the registration to the mutual overlap: points without a
      // close counterpart in the other cloud sit at coverage boundaries and
      // would pull the correction systematically sideways. The crop radius
      // is deliberately tighter than the correspondence gate so that the
      // co-observed region dominates.
      const double crop_radius =
          0.3 * config.postfusion.max_correspondence_distance;
      const SpatialIndex index_a(cloud_a.positions);
      const SpatialIndex index_b(cloud_b.positions);
      ColoredPointCloud overlap_a, overlap_b;
      for (std::size_t i = 0; i < cloud_a.size(); ++i)
        if (index_b.nearest(cloud_a.positions[i]).second <= crop_radius)
          overlap_a.append(cloud_a.positions[i], cloud_a.colors[i]);
      for (std::size_t i = 0; i < cloud_b.size(); ++i)
        if (index_a.nearest(cloud_b.positions[i]).second <= crop_radius)
          overlap_b.append(cloud_b.positions[i], cloud_b.colors[i]);
      if (overlap_a.size() < 10 || overlap_b.size() < 10) {
        overlap_a = cloud_a;  // barely any co-observed points; use everything
        overlap_b = cloud_b;
      }

      RigidIcpConfig rigid_cfg;
      rigid_cfg.max_correspondence_distance =
          config.postfusion.max_correspondence_distance;
      rigid_cfg.convergence_tol = config.postfusion.convergence_tol;
      rigid_cfg.max_iterations = config.postfusion.max_iterations;
      const auto [correction, fitness] =
          icp_se3(overlap_b, overlap_a, PoseSE3{}, rigid_cfg);

      // Temporally closest frame pair across the two sessions.
      const auto& ta = metric_trajs[static_cast<std::size_t>(k)];
      const auto& tb = metric_trajs[static_cast<std::size_t>(k + 1)];
      int best_i = -1, best_j = -1;
      double best_gap = std::numeric_limits<double>::infinity();
      for (int i = 0; i < static_cast<int>(ta.size()); ++i) {
        for (int j = 0; j < static_cast<int>(tb.size()); ++j) {
          const double gap =
              std::abs(ta.entries[static_cast<std::size_t>(i)].timestamp -
                       tb.entries[static_cast<std::size_t>(j)].timestamp);
          if (gap < best_gap) {
            best_gap = gap;
            best_i = i;
            best_j = j;
          }
        }
      }
      const PoseSE3& pose_a =
          ta.entries[static_cast<std::size_t>(best_i)].pose;
      const PoseSE3 pose_b_corrected =
          correction * tb.entries[static_cast<std::size_t>(best_j)].pose;

      PoseEdge edge;
      edge.from = {k, best_i};
      edge.to = {k + 1, best_j};
      edge.relative = pose_a.inverse() * pose_b_corrected;
      edge.kind = EdgeKind::kInterSession;
      edge.information = intra_info * fitness;
      inter_edges.push_back(edge);
      inter_fitness.push_back(fitness);
    }
    return 0;
  });

  // 8. Global pose graph optimization.
  result.graph = stage("build_pose_graph", [&] {
    return build_pose_graph(metric_trajs, inter_edges, intra_info);
  });
  record_stage("build_pose_graph", hash_transforms(result.session_transforms),
               hash_graph(result.graph));

  PgoConfig pgo_cfg;
  pgo_cfg.damping_init = config.pgo.damping;
  pgo_cfg.tol = config.pgo.tol;
  pgo_cfg.max_iterations = config.pgo.max_iterations;
  result.pgo = stage("optimize_pose_graph",
                     [&] { return optimize_pose_graph(result.graph, pgo_cfg); });
  record_stage("optimize_pose_graph", hash_graph(result.graph),
               hash_poses(result.pgo.poses));

  // 9. Partition each metric session cloud by nearest frame and propagate
  // the optimized poses.
  std::vector<std::pair<NodeId, ColoredPointCloud>> frame_clouds;
  stage("propagate", [&] {
    for (int k = 0; k < session_count; ++k) {
      const auto& traj = metric_trajs[static_cast<std::size_t>(k)];
      std::vector<Vec3> frame_positions;
      for (const TimedEntry& e : traj.entries)
        frame_positions.push_back(e.pose.translation);
      const SpatialIndex frame_index(frame_positions);

      const ColoredPointCloud metric_cloud = apply_sim3(
          result.session_transforms[static_cast<std::size_t>(k)],
          inputs.sessions[static_cast<std::size_t>(k)].cloud);

      std::vector<ColoredPointCloud> per_frame(traj.size());
      for (std::size_t i = 0; i < metric_cloud.size(); ++i) {
        const int f = frame_index.nearest(metric_cloud.positions[i]).first;
        const PoseSE3 inv = traj.entries[static_cast<std::size_t>(f)].pose.inverse();
        per_frame[static_cast<std::size_t>(f)].append(
            inv * metric_cloud.positions[i], metric_cloud.colors[i]);
      }
      for (int f = 0; f < static_cast<int>(per_frame.size()); ++f)
        if (!per_frame[static_cast<std::size_t>(f)].empty())
          frame_clouds.emplace_back(NodeId{k, f},
                                    std::move(per_frame[static_cast<std::size_t>(f)]));
    }
    result.fused_cloud = propagate_poses_to_clouds(frame_clouds, result.pgo.poses);
    return 0;
  });
  {
    Hasher h;
    h.add(result.fused_cloud);
    record_stage("propagate", hash_poses(result.pgo.poses), h.state);
  }

  // Diagnostics.
  report["sessions"] = ordered_json::array();
  for (int k = 0; k < session_count; ++k) {
    const SessionAlignment& a = alignments[static_cast<std::size_t>(k)];
    const IcpResult& icp = result.icp_results[static_cast<std::size_t>(k)];
    const TransformSim3& t =
        result.session_transforms[static_cast<std::size_t>(k)];
    report["sessions"].push_back(
        {{"id", k},
         {"linearity", a.linearity},
         {"raw_scale", a.raw_scale},
         {"corrected_scale", a.corrected_scale},
         {"scale_inlier", a.scale_inlier},
         {"rotation_corrected", a.rotation_corrected},
         {"icp_objective", icp.final_objective},
         {"icp_iterations", icp.iterations_used},
         {"icp_correspondences", icp.correspondence_count},
         {"icp_converged", icp.converged},
         {"final_scale", t.scale}});
  }
  report["scale_ransac"] = {
      {"best_scale", consensus.best_scale},
      {"inliers", std::vector<int>(consensus.inliers.begin(),
                                   consensus.inliers.end())}};
  report["inter_session_fitness"] = inter_fitness;
  report["pgo"] = {{"final_chi2", result.pgo.final_chi2},
                   {"iterations", result.pgo.iterations},
                   {"converged", result.pgo.converged}};
  report["fused_point_count"] = result.fused_cloud.size();
  return result;
}

std::string render_text_report(const ordered_json& report) {
  std::ostringstream os;
  os.precision(12);
  os << "pipeline report\n===============\n";
  for (const auto& s : report.at("stages"))
    os << "stage " << s.at("name").get<std::string>() << " output "
       << s.at("output_hash").get<std::string>() << '\n';
  for (const auto& s : report.at("sessions")) {
    os << "session " << s.at("id").get<int>()
       << ": linearity=" << s.at("linearity").get<double>()
       << " raw_scale=" << s.at("raw_scale").get<double>()
       << " corrected_scale=" << s.at("corrected_scale").get<double>()
       << " inlier=" << (s.at("scale_inlier").get<bool>() ? "yes" : "no")
       << " rot_corrected="
       << (s.at("rotation_corrected").get<bool>() ? "yes" : "no")
       << " final_scale=" << s.at("final_scale").get<double>()
       << " icp_obj=" << s.at("icp_objective").get<double>() << '\n';
  }
  os << "consensus scale " << report.at("scale_ransac").at("best_scale").get<double>()
     << '\n';
  os << "pgo chi2 " << report.at("pgo").at("final_chi2").get<double>()
     << " iterations " << report.at("pgo").at("iterations").get<int>() << '\n';
  os << "fused points " << report.at("fused_point_count").get<std::size_t>()
     << '\n';
  return os.str();
}

}  // namespace mapfuse
