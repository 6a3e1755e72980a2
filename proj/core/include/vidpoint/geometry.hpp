#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "vidpoint/error.hpp"

namespace vidpoint::geometry {

enum class FrameTag : std::uint8_t { kCamera = 0, kWorld = 1, kNormalized = 2 };

/// Unordered set of 3D points in meters with optional per-point feature
/// channels (K x C, e.g. RGB in [0,1]) and a coordinate-frame tag.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  Eigen::MatrixXd channels;  // K x C; 0 x 0 when absent
  FrameTag frame_tag = FrameTag::kCamera;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_channels() const { return channels.size() > 0; }
  std::size_t channel_count() const {
    return has_channels() ? static_cast<std::size_t>(channels.cols()) : 0;
  }
};

/// Throws unless every coordinate is finite and channels, when present,
/// have exactly one row per point.
void validate(const PointCloud& cloud);

/// Similarity transform p' = scale * R(p) + translation.
struct Sim3Transform {
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  double scale = 1.0;

  static Sim3Transform identity() { return {}; }

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const {
    return scale * (rotation * p) + translation;
  }
};

/// Throws unless |q| = 1 within 1e-9 and scale > 0.
void validate(const Sim3Transform& t);

Sim3Transform sim3_inverse(const Sim3Transform& t);

/// compose(a, b) applies b first: apply(compose(a,b), x) = apply(a, apply(b, x)).
Sim3Transform sim3_compose(const Sim3Transform& a, const Sim3Transform& b);

/// Warps all points; channels and K pass through unchanged. The output
/// keeps the input frame tag (callers re-tag when the warp changes frames).
PointCloud sim3_apply(const Sim3Transform& t, const PointCloud& cloud);

/// Pinhole camera: intrinsics in pixels plus a rigid world<-camera pose.
struct CameraModel {
  double fx = 1.0, fy = 1.0;
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();  // world <- camera
  Eigen::Vector3d position = Eigen::Vector3d::Zero();            // origin in world

  Eigen::Vector3d world_from_camera(const Eigen::Vector3d& p) const {
    return rotation * p + position;
  }
  Eigen::Vector3d camera_from_world(const Eigen::Vector3d& p) const {
    return rotation.conjugate() * (p - position);
  }
  /// (u, v, z) of a camera-frame point; z may be <= 0 for points behind.
  Eigen::Vector3d project_camera_point(const Eigen::Vector3d& p) const {
    return {fx * p.x() / p.z() + cx, fy * p.y() / p.z() + cy, p.z()};
  }
};

void validate(const CameraModel& cam);

/// Places the camera at `position` aiming +z at `target`, x right, y down,
/// up-vector as close to `up` as the aim allows.
CameraModel look_at_camera(const Eigen::Vector3d& position,
                           const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up, double fx, double fy,
                           double cx, double cy, int width, int height);

/// Depth map in meters; pixels that hit nothing carry kNoHit.
struct DepthImage {
  int width = 0, height = 0;
  std::vector<double> values;  // row-major, height * width

  static constexpr double kNoHit = 0.0;
  static bool is_valid(double d) { return d > 0.0 && std::isfinite(d); }

  double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
  double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }

  static DepthImage empty_image(int width, int height) {
    DepthImage d;
    d.width = width;
    d.height = height;
    d.values.assign(static_cast<std::size_t>(width) * height, kNoHit);
    return d;
  }
};

/// Back-projects every valid pixel (u, v) to ((u-cx)z/fx, (v-cy)z/fy, z) in
/// the camera frame. Invalid pixels are skipped, so K <= width*height.
PointCloud unproject_depth(const DepthImage& depth, const CameraModel& cam);

/// Eq-style symmetric squared chamfer:
///   (1/|A|) sum_a min_b |a-b|^2 + (1/|B|) sum_b min_a |a-b|^2.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

/// Chamfer plus the nearest-neighbor index maps used for envelope-style
/// gradients (nn_ab[i] = argmin over b for a_i, ties to lowest index).
struct ChamferResult {
  double value = 0.0;
  std::vector<std::size_t> nn_ab;
  std::vector<std::size_t> nn_ba;
};
ChamferResult chamfer_with_correspondences(const PointCloud& a,
                                           const PointCloud& b);

/// Greedy max-min subset selection. The first index is a seeded uniform
/// draw; each later pick maximizes the distance to the selected set with
/// ties broken toward the lowest index.
struct FpsResult {
  PointCloud cloud;
  std::vector<std::size_t> indices;
};
FpsResult farthest_point_sampling(const PointCloud& cloud, std::size_t m,
                                  std::uint64_t seed);

/// Gram-Schmidt on the two 3-vectors of `r6`; third column is the cross
/// product, so the result is right-handed. Throws on near-degenerate input.
Eigen::Matrix3d rotation_from_6d(const Eigen::Matrix<double, 6, 1>& r6);

/// Identity 6D encoding (1,0,0, 0,1,0); used to bias regression heads.
Eigen::Matrix<double, 6, 1> identity_6d();

}  // namespace vidpoint::geometry
