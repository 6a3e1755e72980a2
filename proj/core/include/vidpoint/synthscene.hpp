#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidpoint/geometry.hpp"
#include "vidpoint/preprocess.hpp"
#include "vidpoint/rng.hpp"

namespace vidpoint::synthscene {

using geometry::CameraModel;
using geometry::DepthImage;
using geometry::PointCloud;

enum class PrimitiveKind : std::uint8_t { kSphere = 0, kBox = 1, kCylinder = 2 };

/// Analytic solid: sphere (size.x = radius), box (size = half extents) or
/// z-axis cylinder (size.x = radius, size.z = half height). Pose is rigid.
struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  Eigen::Vector3d size = Eigen::Vector3d(0.05, 0.05, 0.05);
  std::string id;

  /// Signed distance to the surface in world coordinates (negative inside).
  double surface_distance(const Eigen::Vector3d& world_point) const;
};

void validate(const Primitive& primitive);

/// Square tabletop patch of the plane n.x = offset; half_extent <= 0 makes
/// the plane unbounded.
struct TablePlane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  double half_extent = 0.6;
};

struct Scene {
  TablePlane table;
  std::vector<Primitive> objects;
  Primitive effector;
  bool has_effector = false;
};

void validate(const Scene& scene);

/// Orbit sampling ranges around a reference look-at camera.
struct CameraSamplingRange {
  double yaw_deg = 70.0;
  double pitch_deg = 7.5;
  std::array<double, 2> distance_scale = {0.9, 1.1};
  CameraModel reference;
  Eigen::Vector3d target = Eigen::Vector3d::Zero();  // look-at point
  Eigen::Vector3d up = Eigen::Vector3d::UnitZ();
};

void validate(const CameraSamplingRange& range);

/// The yaw/pitch/distance draw actually taken for one sample.
struct CameraSample {
  CameraModel camera;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double distance_scale = 1.0;
};

/// Orbits the reference camera about the target: yaw about the up axis,
/// pitch toward/away from it, distance rescaled, then re-aimed at the
/// target. Draw order is yaw, pitch, scale.
CameraSample sample_camera(const CameraSamplingRange& range, Rng& rng);

/// Pixel-center ray casting against the analytic primitive set; depth is
/// the camera-frame z of the nearest hit, kNoHit where nothing intersects.
DepthImage render_depth(const Scene& scene, const CameraModel& cam);

/// render_depth plus the per-pixel hit index: -1 none, -2 table,
/// otherwise an index into scene.objects (effector = objects.size()).
struct RenderWithIds {
  DepthImage depth;
  std::vector<int> hit_ids;  // row-major, height * width
};
RenderWithIds render_depth_with_ids(const Scene& scene, const CameraModel& cam);

struct RenderJob {
  Scene scene;
  CameraModel camera;
};

/// Throughput accounting in the K-environments x M-cameras style:
/// total_fps = jobs / seconds, fps_env = total_fps / env_count, and the
/// identity total_fps = env_count * fps_env holds by construction.
struct ThroughputReport {
  std::size_t workers = 1;
  std::size_t jobs = 0;
  int width = 0;
  int height = 0;
  std::size_t env_count = 1;
  std::size_t cameras_per_env = 1;
  double seconds = 0.0;
  double total_fps = 0.0;
  double fps_env = 0.0;
};

struct RenderBatchResult {
  std::vector<DepthImage> images;
  ThroughputReport report;
};

/// Renders jobs over a worker pool; output order matches input order and
/// images are bitwise identical to a serial render.
RenderBatchResult render_batch(const std::vector<RenderJob>& jobs, std::size_t workers,
                               std::size_t env_count = 0);

struct EpisodeFrame {
  int timestep = 0;
  Scene scene;  // snapshot with the effector at its pose for this step
  PointCloud ref_cloud;   // camera frame
  PointCloud rand_cloud;  // camera frame
  CameraModel rand_camera;
  double rand_yaw_deg = 0.0;
  double rand_pitch_deg = 0.0;
  double rand_distance_scale = 1.0;
};

struct Episode {
  std::vector<EpisodeFrame> frames;
  CameraModel ref_camera;
  std::string target_object_id;  // the object the effector approaches
  std::uint64_t seed = 0;
};

void validate(const Episode& episode);

/// Moves the effector along a seeded smooth path toward a (seeded) target
/// object; renders the reference camera plus a fresh random camera at each
/// timestep and unprojects both to camera-frame clouds.
Episode scripted_episode(const Scene& scene, const CameraSamplingRange& range, int length,
                         std::uint64_t seed);

/// ViewNet supervision triplet. p_org and p_world are index-aligned.
struct Triplet {
  PointCloud p_org;    // random camera frame
  PointCloud p_world;  // same points, world frame
  PointCloud p_ref;    // reference camera's cloud in world frame
};

/// Renders both cameras and assembles the raw (meters, unnormalized)
/// triplet: p_org camera-frame, p_world = extrinsics(p_org), p_ref world.
Triplet make_triplet(const Scene& scene, const CameraModel& ref_cam,
                     const CameraModel& rand_cam);

/// Uniform scene randomization used by data generation: object positions
/// jittered on the table, effector placed uniformly in a box.
struct SceneRandomization {
  double object_jitter = 0.03;  // +- meters in x/y
  Eigen::AlignedBox3d effector_region{Eigen::Vector3d(-0.25, -0.25, 0.05),
                                      Eigen::Vector3d(0.25, 0.25, 0.45)};
};

Scene randomize_scene(const Scene& base, const SceneRandomization& params, Rng& rng);

/// Tabletop default: table patch at z=0 with a box, a sphere and a
/// cylinder near the origin plus a small spherical effector.
Scene default_scene();

/// Reference camera ~1m from the workspace center, 240x240.
CameraSamplingRange default_camera_range();

}  // namespace vidpoint::synthscene
