#include "vidpoint/synthscene.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include "vidpoint/thread_pool.hpp"

namespace vidpoint::synthscene {

using geometry::FrameTag;

void validate(const Primitive& primitive) {
  switch (primitive.kind) {
    case PrimitiveKind::kSphere:
      if (!(primitive.size.x() > 0)) {
        throw Error(ErrorCode::kInvalidArgument, "sphere radius must be > 0");
      }
      break;
    case PrimitiveKind::kBox:
      if (!(primitive.size.array() > 0).all()) {
        throw Error(ErrorCode::kInvalidArgument, "box half extents must be > 0");
      }
      break;
    case PrimitiveKind::kCylinder:
      if (!(primitive.size.x() > 0) || !(primitive.size.z() > 0)) {
        throw Error(ErrorCode::kInvalidArgument, "cylinder radius and half height must be > 0");
      }
      break;
  }
}

void validate(const Scene& scene) {
  std::set<std::string> ids;
  for (const auto& object : scene.objects) {
    validate(object);
    if (!ids.insert(object.id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate object id " + object.id);
    }
  }
  if (scene.has_effector) validate(scene.effector);
}

void validate(const CameraSamplingRange& range) {
  if (!(range.distance_scale[0] > 0 && range.distance_scale[0] <= range.distance_scale[1])) {
    throw Error(ErrorCode::kInvalidArgument, "distance scale needs 0 < lo <= hi");
  }
  if (range.yaw_deg < 0 || range.pitch_deg < 0) {
    throw Error(ErrorCode::kInvalidArgument, "yaw/pitch ranges must be >= 0");
  }
  geometry::validate(range.reference);
}

void validate(const Episode& episode) {
  for (std::size_t i = 0; i < episode.frames.size(); ++i) {
    if (episode.frames[i].timestep != static_cast<int>(i)) {
      throw Error(ErrorCode::kInvalidArgument,
                  "episode timesteps must increase from 0 without gaps");
    }
  }
}

double Primitive::surface_distance(const Eigen::Vector3d& world_point) const {
  const Eigen::Vector3d q = rotation.conjugate() * (world_point - position);
  switch (kind) {
    case PrimitiveKind::kSphere:
      return q.norm() - size.x();
    case PrimitiveKind::kBox: {
      const Eigen::Vector3d d = q.cwiseAbs() - size;
      const double outside = d.cwiseMax(0.0).norm();
      const double inside = std::min(d.maxCoeff(), 0.0);
      return outside + inside;
    }
    case PrimitiveKind::kCylinder: {
      const double dr = std::hypot(q.x(), q.y()) - size.x();
      const double dz = std::abs(q.z()) - size.z();
      const double outside = std::hypot(std::max(dr, 0.0), std::max(dz, 0.0));
      const double inside = std::min(std::max(dr, dz), 0.0);
      return outside + inside;
    }
  }
  return std::numeric_limits<double>::infinity();
}

namespace {

constexpr double kRayEps = 1e-9;

// Smallest intersection parameter > kRayEps, or +inf. Rays are given in the
// primitive's local frame.
double intersect_sphere(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius) {
  const double a = d.squaredNorm();
  const double b = 2.0 * o.dot(d);
  const double c = o.squaredNorm() - radius * radius;
  const double disc = b * b - 4 * a * c;
  if (disc < 0) return std::numeric_limits<double>::infinity();
  const double sq = std::sqrt(disc);
  const double t0 = (-b - sq) / (2 * a);
  if (t0 > kRayEps) return t0;
  const double t1 = (-b + sq) / (2 * a);
  if (t1 > kRayEps) return t1;
  return std::numeric_limits<double>::infinity();
}

double intersect_box(const Eigen::Vector3d& o, const Eigen::Vector3d& d,
                     const Eigen::Vector3d& half) {
  double tmin = -std::numeric_limits<double>::infinity();
  double tmax = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return std::numeric_limits<double>::infinity();
      continue;
    }
    double t0 = (-half[a] - o[a]) / d[a];
    double t1 = (half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    tmin = std::max(tmin, t0);
    tmax = std::min(tmax, t1);
    if (tmin > tmax) return std::numeric_limits<double>::infinity();
  }
  if (tmin > kRayEps) return tmin;
  if (tmax > kRayEps) return tmax;
  return std::numeric_limits<double>::infinity();
}

double intersect_cylinder(const Eigen::Vector3d& o, const Eigen::Vector3d& d, double radius,
                          double half_height) {
  double best = std::numeric_limits<double>::infinity();
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = 2.0 * (o.x() * d.x() + o.y() * d.y());
    const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
    const double disc = b * b - 4 * a * c;
    if (disc >= 0) {
      const double sq = std::sqrt(disc);
      for (const double t : {(-b - sq) / (2 * a), (-b + sq) / (2 * a)}) {
        if (t > kRayEps && t < best && std::abs(o.z() + t * d.z()) <= half_height) {
          best = t;
        }
      }
    }
  }
  if (std::abs(d.z()) > 1e-15) {
    for (const double cap : {-half_height, half_height}) {
      const double t = (cap - o.z()) / d.z();
      if (t > kRayEps && t < best) {
        const double x = o.x() + t * d.x();
        const double y = o.y() + t * d.y();
        if (x * x + y * y <= radius * radius) best = t;
      }
    }
  }
  return best;
}

double intersect_primitive(const Primitive& primitive, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& dir) {
  const Eigen::Quaterniond inv = primitive.rotation.conjugate();
  const Eigen::Vector3d o = inv * (origin - primitive.position);
  const Eigen::Vector3d d = inv * dir;
  switch (primitive.kind) {
    case PrimitiveKind::kSphere:
      return intersect_sphere(o, d, primitive.size.x());
    case PrimitiveKind::kBox:
      return intersect_box(o, d, primitive.size);
    case PrimitiveKind::kCylinder:
      return intersect_cylinder(o, d, primitive.size.x(), primitive.size.z());
  }
  return std::numeric_limits<double>::infinity();
}

double intersect_table(const TablePlane& table, const Eigen::Vector3d& origin,
                       const Eigen::Vector3d& dir) {
  const double denom = table.normal.dot(dir);
  if (std::abs(denom) < 1e-15) return std::numeric_limits<double>::infinity();
  const double t = (table.offset - table.normal.dot(origin)) / denom;
  if (t <= kRayEps) return std::numeric_limits<double>::infinity();
  if (table.half_extent > 0) {
    const Eigen::Vector3d p = origin + t * dir;
    const Eigen::Vector3d center = table.offset * table.normal;
    const Eigen::Vector3d u = table.normal.unitOrthogonal();
    const Eigen::Vector3d v = table.normal.cross(u).normalized();
    if (std::abs(u.dot(p - center)) > table.half_extent ||
        std::abs(v.dot(p - center)) > table.half_extent) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return t;
}

}  // namespace

RenderWithIds render_depth_with_ids(const Scene& scene, const CameraModel& cam) {
  geometry::validate(cam);
  validate(scene);

  RenderWithIds out;
  out.depth = DepthImage::empty_image(cam.width, cam.height);
  out.hit_ids.assign(static_cast<std::size_t>(cam.width) * cam.height, -1);

  const Eigen::Matrix3d rot = cam.rotation.toRotationMatrix();
  const int effector_id = static_cast<int>(scene.objects.size());

  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      const Eigen::Vector3d dir_cam((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0);
      const Eigen::Vector3d dir = rot * dir_cam;

      double best = intersect_table(scene.table, cam.position, dir);
      int best_id = std::isfinite(best) ? -2 : -1;
      for (std::size_t i = 0; i < scene.objects.size(); ++i) {
        const double t = intersect_primitive(scene.objects[i], cam.position, dir);
        if (t < best) {
          best = t;
          best_id = static_cast<int>(i);
        }
      }
      if (scene.has_effector) {
        const double t = intersect_primitive(scene.effector, cam.position, dir);
        if (t < best) {
          best = t;
          best_id = effector_id;
        }
      }
      if (std::isfinite(best)) {
        // dir has camera-frame z of 1, so the parameter is the depth.
        out.depth.at(v, u) = best;
        out.hit_ids[static_cast<std::size_t>(v) * cam.width + u] = best_id;
      }
    }
  }
  return out;
}

DepthImage render_depth(const Scene& scene, const CameraModel& cam) {
  return render_depth_with_ids(scene, cam).depth;
}

CameraSample sample_camera(const CameraSamplingRange& range, Rng& rng) {
  validate(range);
  CameraSample sample;
  sample.yaw_deg = rng.uniform(-range.yaw_deg, range.yaw_deg);
  sample.pitch_deg = rng.uniform(-range.pitch_deg, range.pitch_deg);
  sample.distance_scale = rng.uniform(range.distance_scale[0], range.distance_scale[1]);

  const Eigen::Vector3d up = range.up.normalized();
  Eigen::Vector3d offset = range.reference.position - range.target;

  offset = Eigen::AngleAxisd(sample.yaw_deg * M_PI / 180.0, up) * offset;
  Eigen::Vector3d pitch_axis = offset.cross(up);
  if (pitch_axis.norm() < 1e-12) pitch_axis = up.unitOrthogonal();
  pitch_axis.normalize();
  offset = Eigen::AngleAxisd(sample.pitch_deg * M_PI / 180.0, pitch_axis) * offset;
  offset *= sample.distance_scale;

  sample.camera = geometry::look_at_camera(
      range.target + offset, range.target, up, range.reference.fx, range.reference.fy,
      range.reference.cx, range.reference.cy, range.reference.width, range.reference.height);
  return sample;
}

RenderBatchResult render_batch(const std::vector<RenderJob>& jobs, std::size_t workers,
                               std::size_t env_count) {
  if (workers < 1) {
    throw Error(ErrorCode::kInvalidArgument, "render_batch needs workers >= 1");
  }
  RenderBatchResult result;
  result.images.resize(jobs.size());

  const auto start = std::chrono::steady_clock::now();
  parallel_for(jobs.size(), workers, [&](std::size_t i) {
    result.images[i] = render_depth(jobs[i].scene, jobs[i].camera);
  });
  const auto stop = std::chrono::steady_clock::now();

  ThroughputReport& report = result.report;
  report.workers = workers;
  report.jobs = jobs.size();
  if (!jobs.empty()) {
    report.width = jobs.front().camera.width;
    report.height = jobs.front().camera.height;
  }
  report.env_count = env_count > 0 ? env_count : std::max<std::size_t>(1, jobs.size());
  report.cameras_per_env = jobs.empty() ? 0 : jobs.size() / report.env_count;
  report.seconds = std::chrono::duration<double>(stop - start).count();
  report.total_fps = report.seconds > 0 ? static_cast<double>(jobs.size()) / report.seconds : 0.0;
  report.fps_env = report.total_fps / static_cast<double>(report.env_count);
  return result;
}

namespace {

double smoothstep(double x) { return x * x * (3.0 - 2.0 * x); }

}  // namespace

Episode scripted_episode(const Scene& scene, const CameraSamplingRange& range, int length,
                         std::uint64_t seed) {
  if (length < 2) {
    throw Error(ErrorCode::kInvalidArgument, "episode length must be >= 2");
  }
  validate(scene);
  if (!scene.has_effector) {
    throw Error(ErrorCode::kInvalidArgument, "scripted episode needs a scene effector");
  }
  if (scene.objects.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "scripted episode needs at least one object");
  }

  Rng rng(derive_seed(seed, 0x65706973ULL));
  const Primitive& target_object = scene.objects[rng.uniform_index(scene.objects.size())];
  const Eigen::Vector3d target = target_object.position;
  const Eigen::Vector3d start = scene.effector.position;

  // Approach point hovers above the target; keep the endpoint strictly
  // closer than the start for any spawn position.
  const double initial_distance = std::max(1e-6, (start - target).norm());
  const double hover =
      std::min(target_object.size.maxCoeff() + scene.effector.size.maxCoeff() + 0.01,
               0.45 * initial_distance);
  const Eigen::Vector3d approach = target + hover * Eigen::Vector3d::UnitZ();

  Eigen::Vector3d travel = approach - start;
  Eigen::Vector3d perp1 = travel.norm() > 1e-9 ? Eigen::Vector3d(travel.normalized().unitOrthogonal())
                                               : Eigen::Vector3d::UnitX();
  Eigen::Vector3d perp2 = travel.norm() > 1e-9 ? travel.normalized().cross(perp1) : Eigen::Vector3d::UnitY();
  const double amp1 = rng.uniform(0.04, 0.10);
  const double amp2 = rng.uniform(0.04, 0.10);
  const double freq = 1.0 + static_cast<double>(rng.uniform_index(3));

  Episode episode;
  episode.seed = seed;
  episode.ref_camera = range.reference;
  episode.target_object_id = target_object.id;
  episode.frames.reserve(static_cast<std::size_t>(length));

  for (int t = 0; t < length; ++t) {
    const double tau = static_cast<double>(t) / static_cast<double>(length - 1);
    const Eigen::Vector3d wobble =
        std::sin(M_PI * tau) * (amp1 * std::sin(M_PI * freq * tau) * perp1 +
                                amp2 * std::cos(M_PI * freq * tau) * perp2);
    Scene snapshot = scene;
    snapshot.effector.position = start + smoothstep(tau) * travel + wobble;

    EpisodeFrame frame;
    frame.timestep = t;
    const CameraSample rand = sample_camera(range, rng);
    frame.rand_camera = rand.camera;
    frame.rand_yaw_deg = rand.yaw_deg;
    frame.rand_pitch_deg = rand.pitch_deg;
    frame.rand_distance_scale = rand.distance_scale;
    frame.ref_cloud = geometry::unproject_depth(render_depth(snapshot, range.reference),
                                                range.reference);
    frame.rand_cloud = geometry::unproject_depth(render_depth(snapshot, rand.camera), rand.camera);
    frame.scene = std::move(snapshot);
    episode.frames.push_back(std::move(frame));
  }
  return episode;
}

Triplet make_triplet(const Scene& scene, const CameraModel& ref_cam,
                     const CameraModel& rand_cam) {
  Triplet triplet;
  triplet.p_org = geometry::unproject_depth(render_depth(scene, rand_cam), rand_cam);

  triplet.p_world.points.reserve(triplet.p_org.size());
  for (const auto& p : triplet.p_org.points) {
    triplet.p_world.points.push_back(rand_cam.world_from_camera(p));
  }
  triplet.p_world.frame_tag = FrameTag::kWorld;

  PointCloud ref_camera_frame = geometry::unproject_depth(render_depth(scene, ref_cam), ref_cam);
  triplet.p_ref.points.reserve(ref_camera_frame.size());
  for (const auto& p : ref_camera_frame.points) {
    triplet.p_ref.points.push_back(ref_cam.world_from_camera(p));
  }
  triplet.p_ref.frame_tag = FrameTag::kWorld;
  return triplet;
}

Scene randomize_scene(const Scene& base, const SceneRandomization& params, Rng& rng) {
  Scene scene = base;
  for (auto& object : scene.objects) {
    object.position.x() += rng.uniform(-params.object_jitter, params.object_jitter);
    object.position.y() += rng.uniform(-params.object_jitter, params.object_jitter);
  }
  if (scene.has_effector) {
    const auto& box = params.effector_region;
    scene.effector.position =
        Eigen::Vector3d(rng.uniform(box.min().x(), box.max().x()),
                        rng.uniform(box.min().y(), box.max().y()),
                        rng.uniform(box.min().z(), box.max().z()));
  }
  return scene;
}

Scene default_scene() {
  Scene scene;
  scene.table.normal = Eigen::Vector3d::UnitZ();
  scene.table.offset = 0.0;
  scene.table.half_extent = 0.6;

  Primitive cube;
  cube.kind = PrimitiveKind::kBox;
  cube.size = Eigen::Vector3d(0.03, 0.03, 0.03);
  cube.position = Eigen::Vector3d(0.10, 0.06, 0.03);
  cube.id = "cube";
  scene.objects.push_back(cube);

  Primitive ball;
  ball.kind = PrimitiveKind::kSphere;
  ball.size = Eigen::Vector3d(0.04, 0.04, 0.04);
  ball.position = Eigen::Vector3d(-0.09, 0.10, 0.04);
  ball.id = "ball";
  scene.objects.push_back(ball);

  Primitive can;
  can.kind = PrimitiveKind::kCylinder;
  can.size = Eigen::Vector3d(0.03, 0.03, 0.05);
  can.position = Eigen::Vector3d(0.02, -0.11, 0.05);
  can.id = "can";
  scene.objects.push_back(can);

  scene.effector.kind = PrimitiveKind::kSphere;
  scene.effector.size = Eigen::Vector3d(0.06, 0.06, 0.06);
  scene.effector.position = Eigen::Vector3d(0.0, 0.0, 0.3);
  scene.effector.id = "effector";
  scene.has_effector = true;
  return scene;
}

CameraSamplingRange default_camera_range() {
  CameraSamplingRange range;
  range.yaw_deg = 70.0;
  range.pitch_deg = 7.5;
  range.distance_scale = {0.9, 1.1};
  range.target = Eigen::Vector3d(0.0, 0.0, 0.08);
  range.up = Eigen::Vector3d::UnitZ();
  range.reference = geometry::look_at_camera(Eigen::Vector3d(1.0, 0.0, 0.6), range.target,
                                             range.up, 180.0, 180.0, 119.5, 119.5, 240, 240);
  return range;
}

}  // namespace vidpoint::synthscene
