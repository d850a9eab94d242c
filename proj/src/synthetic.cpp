#include "mapfuse/synthetic.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <random>

#include "mapfuse/geometry.hpp"

namespace mapfuse {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

void SyntheticSceneSpec::validate() const {
  if (extent <= 0.0) throw DataError("synthetic: extent must be positive");
  if (points_per_frame < 1) throw DataError("synthetic: points_per_frame < 1");
  if (frames_per_session < 2)
    throw DataError("synthetic: frames_per_session < 2");
  if (session_count < 1) throw DataError("synthetic: session_count < 1");
  if (overlap_frames < 0 || overlap_frames >= frames_per_session)
    throw DataError("synthetic: overlap must be in [0, frames_per_session)");
  if (!(crop_fraction > 0.0 && crop_fraction <= 1.0))
    throw DataError("synthetic: crop_fraction must be in (0, 1]");
  if (!(scale_min > 0.0 && scale_max >= scale_min))
    throw DataError("synthetic: invalid scale range");
  if (outlier_session >= session_count)
    throw DataError("synthetic: outlier session out of range");
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller; the standard normal_distribution is implementation-defined.
double gaussian(std::mt19937_64& rng) {
  const double u1 = std::max(uniform01(rng), 1e-300);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Vec3 gaussian3(std::mt19937_64& rng) {
  const double a = gaussian(rng), b = gaussian(rng), c = gaussian(rng);
  return {a, b, c};
}

Mat3 random_rotation(std::mt19937_64& rng) {
  Vec3 axis = gaussian3(rng);
  if (axis.norm() < 1e-9) axis = Vec3::UnitZ();
  axis.normalize();
  return Eigen::AngleAxisd(uniform(rng, 0.0, M_PI), axis).toRotationMatrix();
}

struct Box {
  double x0, x1, y0, y1, height;
  Vec3 color;
};

struct Scene {
  double width, depth, wall_height;
  std::vector<Box> boxes;
  std::vector<Vec3> palette;

  Vec3 ground_color(double x, double y, double cell) const {
    const auto ix = static_cast<std::int64_t>(std::floor(x / cell));
    const auto iy = static_cast<std::int64_t>(std::floor(y / cell));
    const std::size_t h =
        static_cast<std::size_t>(((ix * 31 + iy * 17) % 64 + 64) % 64);
    return palette[h % palette.size()];
  }
};

}  // namespace

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);

  const double width = spec.extent;
  const double depth = 0.625 * spec.extent;
  const double margin = 0.125 * spec.extent;
  const double height = 0.25 * spec.extent;
  const double cell = spec.extent / 10.0;

  Scene scene;
  scene.width = width;
  scene.depth = depth;
  scene.wall_height = 0.25 * spec.extent;
  scene.palette.resize(64);
  for (Vec3& c : scene.palette)
    c = Vec3(uniform(rng, 0.05, 0.95), uniform(rng, 0.05, 0.95),
             uniform(rng, 0.05, 0.95));
  for (int b = 0; b < 2; ++b) {
    Box box;
    box.x0 = uniform(rng, 0.15 * width, 0.65 * width);
    box.x1 = box.x0 + uniform(rng, 0.1 * width, 0.2 * width);
    box.y0 = uniform(rng, 0.15 * depth, 0.55 * depth);
    box.y1 = box.y0 + uniform(rng, 0.15 * depth, 0.3 * depth);
    box.height = uniform(rng, 0.1 * spec.extent, 0.18 * spec.extent);
    box.color = scene.palette[static_cast<std::size_t>(rng() % 64)];
    scene.boxes.push_back(box);
  }

  const int total_frames =
      spec.session_count * spec.frames_per_session -
      (spec.session_count - 1) * spec.overlap_frames;

  SyntheticScene out;

  // Serpentine camera path over the footprint, gently varying orientation.
  const double sweeps = 3.0;
  for (int i = 0; i < total_frames; ++i) {
    const double u = total_frames == 1
                         ? 0.0
                         : static_cast<double>(i) / (total_frames - 1);
    const double phase = std::fmod(u * sweeps, 2.0);
    const double tri = phase < 1.0 ? phase : 2.0 - phase;
    const double x = margin + tri * (width - 2.0 * margin);
    const double y = margin + u * (depth - 2.0 * margin);
    const double yaw = 2.0 * M_PI * u + 0.4 * std::sin(7.0 * u);
    const double pitch = 0.25 * std::sin(5.0 * u + 1.0);
    const Mat3 rot =
        (Eigen::AngleAxisd(yaw, Vec3::UnitZ()) *
         Eigen::AngleAxisd(pitch, Vec3::UnitY()))
            .toRotationMatrix();
    out.gt_frame_poses.push_back(PoseSE3{rot, Vec3(x, y, height)});
    out.frame_times.push_back(0.1 * static_cast<double>(i));
  }

  // Per-frame surface samples around each camera position.
  const double rho = 0.45 * spec.extent;
  std::vector<std::vector<int>> frame_point_ids(
      static_cast<std::size_t>(total_frames));
  for (int f = 0; f < total_frames; ++f) {
    const Vec3 center = out.gt_frame_poses[static_cast<std::size_t>(f)].translation;
    for (int n = 0; n < spec.points_per_frame; ++n) {
      Vec3 p;
      Vec3 base_color;
      if (uniform01(rng) < 0.2) {
        // Back wall at y = depth.
        p.x() = std::clamp(center.x() + uniform(rng, -rho, rho), 0.0, width);
        p.y() = depth;
        p.z() = uniform(rng, 0.0, scene.wall_height);
        const auto ix = static_cast<std::int64_t>(std::floor(p.x() / cell));
        const auto iz = static_cast<std::int64_t>(std::floor(p.z() / cell));
        base_color = scene.palette[static_cast<std::size_t>(
            ((ix * 13 + iz * 29) % 64 + 64) % 64)];
      } else {
        p.x() = std::clamp(center.x() + uniform(rng, -rho, rho), 0.0, width);
        p.y() = std::clamp(center.y() + uniform(rng, -rho, rho), 0.0, depth);
        p.z() = 0.0;
        base_color = scene.ground_color(p.x(), p.y(), cell);
        for (const Box& b : scene.boxes) {
          if (p.x() >= b.x0 && p.x() <= b.x1 && p.y() >= b.y0 &&
              p.y() <= b.y1) {
            p.z() = b.height;
            base_color = b.color;
            break;
          }
        }
      }
      Vec3 color = base_color + spec.color_noise_std * gaussian3(rng);
      color = color.cwiseMax(0.0).cwiseMin(1.0);
      frame_point_ids[static_cast<std::size_t>(f)].push_back(
          static_cast<int>(out.gt_cloud.size()));
      out.gt_cloud.append(p, color);
    }
  }

  // Metric reference: subsampled ground truth plus the LiDAR body poses.
  out.extrinsics.cam_from_lidar = PoseSE3{
      Eigen::AngleAxisd(0.02, Vec3::UnitY()).toRotationMatrix(),
      Vec3(0.1, 0.0, 0.05)};
  out.extrinsics.time_offset = 0.0;
  for (std::size_t i = 0; i < out.gt_cloud.size(); i += 2)
    out.lidar_cloud.append(out.gt_cloud.positions[i], out.gt_cloud.colors[i]);
  for (int f = 0; f < total_frames; ++f) {
    // lidar_to_camera_trajectory inverts this composition.
    const PoseSE3 lidar_pose =
        out.gt_frame_poses[static_cast<std::size_t>(f)] *
        out.extrinsics.cam_from_lidar;
    out.lidar_traj.entries.push_back(
        {out.frame_times[static_cast<std::size_t>(f)] -
             out.extrinsics.time_offset,
         lidar_pose});
  }

  // Sessions: contiguous frame windows with `overlap` shared frames, each
  // expressed in its own random similarity frame.
  const int step = spec.frames_per_session - spec.overlap_frames;
  for (int k = 0; k < spec.session_count; ++k) {
    double scale = uniform(rng, spec.scale_min, spec.scale_max);
    if (k == spec.outlier_session) scale *= spec.outlier_scale_factor;
    const TransformSim3 session_to_world{scale, random_rotation(rng),
                                         Vec3(uniform(rng, -width, width),
                                              uniform(rng, -width, width),
                                              uniform(rng, -width, width))};
    const TransformSim3 world_to_session = session_to_world.inverse();
    out.gt_session_transforms.push_back(session_to_world);

    std::vector<int> frames;
    ColoredPointCloud cloud;
    TimedTrajectory traj;
    for (int i = 0; i < spec.frames_per_session; ++i) {
      const int f = k * step + i;
      frames.push_back(f);
      const PoseSE3& world_pose = out.gt_frame_poses[static_cast<std::size_t>(f)];

      // Noisy reconstruction pose in the session frame; translation noise
      // is metric, so it shrinks by the session scale.
      const Mat3 noisy_rot =
          world_pose.rotation * so3_exp(spec.pose_noise_rot * gaussian3(rng));
      const Vec3 noisy_trans =
          world_pose.translation + spec.pose_noise_trans * gaussian3(rng);
      const Mat3 session_rot = world_to_session.rotation * noisy_rot;
      const Vec3 session_trans = world_to_session * noisy_trans;
      traj.entries.push_back(
          {out.frame_times[static_cast<std::size_t>(f)],
           PoseSE3{session_rot, session_trans}});

      // FOV crop: keep the fraction of the frame's points nearest to the
      // camera, then express them in the session frame.
      const auto& ids = frame_point_ids[static_cast<std::size_t>(f)];
      std::vector<std::pair<double, int>> by_distance;
      by_distance.reserve(ids.size());
      for (int id : ids)
        by_distance.emplace_back(
            (out.gt_cloud.positions[static_cast<std::size_t>(id)] -
             world_pose.translation)
                .norm(),
            id);
      std::sort(by_distance.begin(), by_distance.end());
      const std::size_t keep = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(
                 spec.crop_fraction * static_cast<double>(ids.size()))));
      for (std::size_t n = 0; n < keep && n < by_distance.size(); ++n) {
        const int id = by_distance[n].second;
        cloud.append(world_to_session *
                         out.gt_cloud.positions[static_cast<std::size_t>(id)],
                     out.gt_cloud.colors[static_cast<std::size_t>(id)]);
      }
    }
    out.session_frames.push_back(std::move(frames));
    out.session_clouds.push_back(std::move(cloud));
    out.session_trajs.push_back(std::move(traj));
  }
  return out;
}

fs::path write_scene(const SyntheticScene& scene, const fs::path& dir) {
  fs::create_directories(dir);

  write_ply(scene.gt_cloud, dir / "gt_cloud.ply");
  write_ply(scene.lidar_cloud, dir / "lidar_cloud.ply");
  write_tum(scene.lidar_traj, dir / "lidar_traj.txt");
  write_extrinsics(scene.extrinsics, dir / "extrinsics.txt");

  SessionManifest manifest;
  manifest.lidar_cloud = dir / "lidar_cloud.ply";
  manifest.lidar_traj = dir / "lidar_traj.txt";
  manifest.extrinsics = dir / "extrinsics.txt";
  for (std::size_t k = 0; k < scene.session_clouds.size(); ++k) {
    const std::string base = "session_" + std::to_string(k);
    write_ply(scene.session_clouds[k], dir / (base + "_cloud.ply"));
    write_tum(scene.session_trajs[k], dir / (base + "_traj.txt"));
    manifest.sessions.push_back({static_cast<int>(k),
                                 dir / (base + "_cloud.ply"),
                                 dir / (base + "_traj.txt")});
  }
  const fs::path manifest_path = dir / "manifest.txt";
  write_manifest(manifest, manifest_path);

  ordered_json sidecar;
  sidecar["gt_cloud"] = "gt_cloud.ply";
  sidecar["sessions"] = ordered_json::array();
  for (std::size_t k = 0; k < scene.gt_session_transforms.size(); ++k) {
    const TransformSim3& t = scene.gt_session_transforms[k];
    const Eigen::Quaterniond q(t.rotation);
    ordered_json session;
    session["id"] = k;
    session["scale"] = t.scale;
    session["quaternion_xyzw"] = {q.x(), q.y(), q.z(), q.w()};
    session["translation"] = {t.translation.x(), t.translation.y(),
                              t.translation.z()};
    session["frames"] = scene.session_frames[k];
    sidecar["sessions"].push_back(session);
  }
  sidecar["frames"] = ordered_json::array();
  for (std::size_t f = 0; f < scene.gt_frame_poses.size(); ++f) {
    const PoseSE3& pose = scene.gt_frame_poses[f];
    const Eigen::Quaterniond q(pose.rotation);
    ordered_json frame;
    frame["index"] = f;
    frame["time"] = scene.frame_times[f];
    frame["quaternion_xyzw"] = {q.x(), q.y(), q.z(), q.w()};
    frame["translation"] = {pose.translation.x(), pose.translation.y(),
                            pose.translation.z()};
    sidecar["frames"].push_back(frame);
  }
  std::ofstream sidecar_out(dir / "gt_sidecar.json");
  sidecar_out << sidecar.dump(2) << '\n';

  return manifest_path;
}

}  // namespace mapfuse
