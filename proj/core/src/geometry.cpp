#include "vidpoint/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vidpoint/rng.hpp"

namespace vidpoint::geometry {

void validate(const PointCloud& cloud) {
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) {
      throw Error(ErrorCode::kInvalidArgument, "point cloud contains a non-finite coordinate");
    }
  }
  if (cloud.has_channels() &&
      static_cast<std::size_t>(cloud.channels.rows()) != cloud.points.size()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "channel rows (" + std::to_string(cloud.channels.rows()) +
                    ") do not match point count (" + std::to_string(cloud.points.size()) + ")");
  }
}

void validate(const Sim3Transform& t) {
  if (std::abs(t.rotation.norm() - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "quaternion is not unit length");
  }
  if (!(t.scale > 0.0) || !std::isfinite(t.scale)) {
    throw Error(ErrorCode::kInvalidArgument, "scale must be positive and finite");
  }
}

Sim3Transform sim3_inverse(const Sim3Transform& t) {
  Sim3Transform inv;
  inv.scale = 1.0 / t.scale;
  inv.rotation = t.rotation.conjugate();
  inv.translation = -(inv.rotation * t.translation) / t.scale;
  return inv;
}

Sim3Transform sim3_compose(const Sim3Transform& a, const Sim3Transform& b) {
  Sim3Transform out;
  out.scale = a.scale * b.scale;
  out.rotation = (a.rotation * b.rotation).normalized();
  out.translation = a.scale * (a.rotation * b.translation) + a.translation;
  return out;
}

PointCloud sim3_apply(const Sim3Transform& t, const PointCloud& cloud) {
  PointCloud out;
  out.points.reserve(cloud.points.size());
  const Eigen::Matrix3d rot = t.rotation.toRotationMatrix();
  for (const auto& p : cloud.points) {
    out.points.emplace_back(t.scale * (rot * p) + t.translation);
  }
  out.channels = cloud.channels;
  out.frame_tag = cloud.frame_tag;
  return out;
}

void validate(const CameraModel& cam) {
  if (!(cam.fx > 0.0) || !(cam.fy > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  }
  if (cam.width <= 0 || cam.height <= 0) {
    throw Error(ErrorCode::kInvalidArgument, "image dimensions must be positive");
  }
  if (cam.cx < 0.0 || cam.cx >= cam.width || cam.cy < 0.0 || cam.cy >= cam.height) {
    throw Error(ErrorCode::kInvalidArgument, "principal point outside the image");
  }
}

CameraModel look_at_camera(const Eigen::Vector3d& position,
                           const Eigen::Vector3d& target,
                           const Eigen::Vector3d& up, double fx, double fy,
                           double cx, double cy, int width, int height) {
  const Eigen::Vector3d forward = (target - position).normalized();
  Eigen::Vector3d right = forward.cross(up);
  if (right.norm() < 1e-9) {
    // Aim parallel to up; fall back to an arbitrary horizontal axis.
    right = forward.cross(Eigen::Vector3d::UnitX());
    if (right.norm() < 1e-9) right = forward.cross(Eigen::Vector3d::UnitY());
  }
  right.normalize();
  const Eigen::Vector3d down = forward.cross(right).normalized();

  Eigen::Matrix3d rot;  // columns: camera axes (x right, y down, z forward) in world
  rot.col(0) = right;
  rot.col(1) = down;
  rot.col(2) = forward;

  CameraModel cam;
  cam.fx = fx;
  cam.fy = fy;
  cam.cx = cx;
  cam.cy = cy;
  cam.width = width;
  cam.height = height;
  cam.rotation = Eigen::Quaterniond(rot).normalized();
  cam.position = position;
  return cam;
}

PointCloud unproject_depth(const DepthImage& depth, const CameraModel& cam) {
  if (depth.width != cam.width || depth.height != cam.height) {
    throw Error(ErrorCode::kDimensionMismatch,
                "depth image " + std::to_string(depth.width) + "x" + std::to_string(depth.height) +
                    " does not match camera " + std::to_string(cam.width) + "x" +
                    std::to_string(cam.height));
  }
  PointCloud cloud;
  cloud.frame_tag = FrameTag::kCamera;
  cloud.points.reserve(depth.values.size());
  for (int v = 0; v < depth.height; ++v) {
    for (int u = 0; u < depth.width; ++u) {
      const double z = depth.at(v, u);
      if (!DepthImage::is_valid(z)) continue;
      cloud.points.emplace_back((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    }
  }
  return cloud;
}

namespace {

// Nearest squared distance from each point of `from` into `to`; ties keep
// the lowest index.
void nearest_sq(const std::vector<Eigen::Vector3d>& from,
                const std::vector<Eigen::Vector3d>& to,
                std::vector<std::size_t>* indices, double* mean_sq) {
  double sum = 0.0;
  indices->resize(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_j = 0;
    for (std::size_t j = 0; j < to.size(); ++j) {
      const double d = (from[i] - to[j]).squaredNorm();
      if (d < best) {
        best = d;
        best_j = j;
      }
    }
    (*indices)[i] = best_j;
    sum += best;
  }
  *mean_sq = sum / static_cast<double>(from.size());
}

}  // namespace

ChamferResult chamfer_with_correspondences(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) {
    throw Error(ErrorCode::kEmptyInput, "chamfer distance requires non-empty clouds");
  }
  ChamferResult res;
  double mean_ab = 0.0, mean_ba = 0.0;
  nearest_sq(a.points, b.points, &res.nn_ab, &mean_ab);
  nearest_sq(b.points, a.points, &res.nn_ba, &mean_ba);
  res.value = mean_ab + mean_ba;
  return res;
}

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  return chamfer_with_correspondences(a, b).value;
}

FpsResult farthest_point_sampling(const PointCloud& cloud, std::size_t m,
                                  std::uint64_t seed) {
  const std::size_t k = cloud.size();
  if (m < 1 || m > k) {
    throw Error(ErrorCode::kInvalidArgument,
                "farthest point sampling needs 1 <= m <= K, got m=" + std::to_string(m) +
                    " K=" + std::to_string(k));
  }
  FpsResult res;
  res.indices.reserve(m);

  Rng rng(seed);
  std::size_t current = rng.uniform_index(k);
  res.indices.push_back(current);

  std::vector<double> min_sq(k, std::numeric_limits<double>::infinity());
  std::vector<char> selected(k, 0);
  selected[current] = 1;
  for (std::size_t step = 1; step < m; ++step) {
    double best = -1.0;
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < k; ++i) {
      const double d = (cloud.points[i] - cloud.points[current]).squaredNorm();
      if (d < min_sq[i]) min_sq[i] = d;
      if (!selected[i] && min_sq[i] > best) {  // strict: ties keep the lowest index
        best = min_sq[i];
        best_i = i;
      }
    }
    current = best_i;
    selected[current] = 1;
    res.indices.push_back(current);
  }

  res.cloud.frame_tag = cloud.frame_tag;
  res.cloud.points.reserve(m);
  if (cloud.has_channels()) {
    res.cloud.channels.resize(static_cast<Eigen::Index>(m), cloud.channels.cols());
  }
  for (std::size_t i = 0; i < res.indices.size(); ++i) {
    res.cloud.points.push_back(cloud.points[res.indices[i]]);
    if (cloud.has_channels()) {
      res.cloud.channels.row(static_cast<Eigen::Index>(i)) =
          cloud.channels.row(static_cast<Eigen::Index>(res.indices[i]));
    }
  }
  return res;
}

Eigen::Matrix3d rotation_from_6d(const Eigen::Matrix<double, 6, 1>& r6) {
  const Eigen::Vector3d a1 = r6.head<3>();
  const Eigen::Vector3d a2 = r6.tail<3>();
  const double n1 = a1.norm();
  if (n1 <= 1e-8) {
    throw Error(ErrorCode::kDegenerateInput, "6d rotation: first vector is near zero");
  }
  const Eigen::Vector3d b1 = a1 / n1;
  const Eigen::Vector3d u2 = a2 - b1.dot(a2) * b1;
  const double n2 = u2.norm();
  if (n2 <= 1e-8) {
    throw Error(ErrorCode::kDegenerateInput, "6d rotation: vectors are near parallel");
  }
  const Eigen::Vector3d b2 = u2 / n2;
  Eigen::Matrix3d rot;
  rot.col(0) = b1;
  rot.col(1) = b2;
  rot.col(2) = b1.cross(b2);
  return rot;
}

Eigen::Matrix<double, 6, 1> identity_6d() {
  Eigen::Matrix<double, 6, 1> r;
  r << 1, 0, 0, 0, 1, 0;
  return r;
}

}  // namespace vidpoint::geometry
