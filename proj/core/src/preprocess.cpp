#include "vidpoint/preprocess.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "vidpoint/rng.hpp"

namespace vidpoint::preprocess {

using geometry::FrameTag;

void validate(const PipelineConfig& config) {
  if (!(config.normalize.lo_percentile >= 0.0 &&
        config.normalize.lo_percentile < config.normalize.hi_percentile &&
        config.normalize.hi_percentile <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentiles must satisfy 0 <= lo < hi <= 100");
  }
  if (config.target_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "target_points must be >= 1");
  }
  if (!(config.ransac.distance_threshold > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "ransac distance_threshold must be > 0");
  }
  if ((config.crop_bounds.min().array() >= config.crop_bounds.max().array()).any()) {
    throw Error(ErrorCode::kInvalidArgument, "crop bounds need min < max per axis");
  }
  if (config.outlier.k_neighbors < 1) {
    throw Error(ErrorCode::kInvalidArgument, "k_neighbors must be >= 1");
  }
  if (config.plane_removal_passes < 0) {
    throw Error(ErrorCode::kInvalidArgument, "plane_removal_passes must be >= 0");
  }
}

void validate(const AugmentConfig& config) {
  if (!(config.dropout_rate >= 0.0 && config.dropout_rate < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "dropout_rate must be in [0, 1)");
  }
  if (!(config.scale_range[0] > 0.0 && config.scale_range[0] <= config.scale_range[1])) {
    throw Error(ErrorCode::kInvalidArgument, "scale range needs 0 < lo <= hi");
  }
  if (config.noise_sigma < 0.0) {
    throw Error(ErrorCode::kInvalidArgument, "noise_sigma must be >= 0");
  }
}

namespace {

PointCloud select_rows(const PointCloud& cloud, const std::vector<std::size_t>& keep) {
  PointCloud out;
  out.frame_tag = cloud.frame_tag;
  out.points.reserve(keep.size());
  if (cloud.has_channels()) {
    out.channels.resize(static_cast<Eigen::Index>(keep.size()), cloud.channels.cols());
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.points.push_back(cloud.points[keep[i]]);
    if (cloud.has_channels()) {
      out.channels.row(static_cast<Eigen::Index>(i)) =
          cloud.channels.row(static_cast<Eigen::Index>(keep[i]));
    }
  }
  return out;
}

// Uniform hash grid delivering exact k-nearest-neighbor mean distances.
// Cells are visited in expanding Chebyshev rings; the search stops once the
// k-th best squared distance cannot be beaten by any unvisited ring.
class NeighborGrid {
 public:
  NeighborGrid(const std::vector<Eigen::Vector3d>& points, int k)
      : points_(points), k_(k) {
    Eigen::Vector3d lo = points[0], hi = points[0];
    for (const auto& p : points) {
      lo = lo.cwiseMin(p);
      hi = hi.cwiseMax(p);
    }
    origin_ = lo;
    const double diag = (hi - lo).norm();
    cell_ = std::max(1e-9, diag / std::cbrt(static_cast<double>(points.size())));
    Eigen::Vector3i cmin = coord(points[0]), cmax = coord(points[0]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      const Eigen::Vector3i c = coord(points[i]);
      cmin = cmin.cwiseMin(c);
      cmax = cmax.cwiseMax(c);
      cells_[key(c)].push_back(i);
    }
    cheb_diameter_ = (cmax - cmin).cwiseAbs().maxCoeff();
  }

  double mean_knn_distance(std::size_t query) const {
    std::vector<double> heap;  // max-heap of the k best squared distances
    heap.reserve(static_cast<std::size_t>(k_) + 1);
    const Eigen::Vector3d& q = points_[query];
    const Eigen::Vector3i home = coord(q);

    for (int ring = 0; ring <= cheb_diameter_ + 1; ++ring) {
      if (static_cast<int>(heap.size()) == k_ && ring > 0) {
        const double reach = (ring - 1) * cell_;
        if (heap.front() <= reach * reach) break;
      }
      for (int dx = -ring; dx <= ring; ++dx) {
        for (int dy = -ring; dy <= ring; ++dy) {
          for (int dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
            const auto it = cells_.find(key(home + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            for (std::size_t j : it->second) {
              if (j == query) continue;
              const double d = (points_[j] - q).squaredNorm();
              if (static_cast<int>(heap.size()) < k_) {
                heap.push_back(d);
                std::push_heap(heap.begin(), heap.end());
              } else if (d < heap.front()) {
                std::pop_heap(heap.begin(), heap.end());
                heap.back() = d;
                std::push_heap(heap.begin(), heap.end());
              }
            }
          }
        }
      }
    }
    double sum = 0.0;
    for (double d : heap) sum += std::sqrt(d);
    return sum / static_cast<double>(k_);
  }

 private:
  Eigen::Vector3i coord(const Eigen::Vector3d& p) const {
    return ((p - origin_) / cell_).array().floor().cast<int>();
  }
  static std::int64_t key(const Eigen::Vector3i& c) {
    // 21 bits per axis, biased; grids here are far smaller.
    const auto b = [](int v) { return static_cast<std::int64_t>(v + (1 << 20)) & 0x1fffff; };
    return (b(c.x()) << 42) | (b(c.y()) << 21) | b(c.z());
  }

  const std::vector<Eigen::Vector3d>& points_;
  int k_;
  Eigen::Vector3d origin_;
  double cell_ = 1.0;
  int cheb_diameter_ = 0;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

std::vector<std::size_t> outlier_keep_indices(const std::vector<Eigen::Vector3d>& points,
                                              int k_neighbors, double std_ratio) {
  const std::size_t k = points.size();
  NeighborGrid grid(points, k_neighbors);
  std::vector<double> mean_dist(k);
  for (std::size_t i = 0; i < k; ++i) {
    mean_dist[i] = grid.mean_knn_distance(i);
  }
  const double mu =
      std::accumulate(mean_dist.begin(), mean_dist.end(), 0.0) / static_cast<double>(k);
  double var = 0.0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  var /= static_cast<double>(k);
  const double cutoff = mu + std_ratio * std::sqrt(var);

  std::vector<std::size_t> keep;
  keep.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    if (mean_dist[i] <= cutoff) keep.push_back(i);
  }
  return keep;
}

double nearest_rank_percentile(const std::vector<double>& sorted_values, double pct) {
  const std::size_t k = sorted_values.size();
  std::size_t n =
      static_cast<std::size_t>(std::ceil(pct / 100.0 * static_cast<double>(k)));
  n = std::clamp<std::size_t>(n, 1, k);
  return sorted_values[n - 1];
}

}  // namespace

PointCloud crop_workspace(const PointCloud& cloud, const Eigen::AlignedBox3d& bounds) {
  if ((bounds.min().array() >= bounds.max().array()).any()) {
    throw Error(ErrorCode::kInvalidArgument, "crop bounds need min < max per axis");
  }
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (bounds.contains(cloud.points[i])) keep.push_back(i);
  }
  return select_rows(cloud, keep);
}

std::optional<PlaneModel> fit_plane_ransac(const PointCloud& cloud,
                                           const RansacParams& params,
                                           std::uint64_t seed) {
  const std::size_t k = cloud.size();
  if (k < 3) {
    throw Error(ErrorCode::kInvalidArgument,
                "plane fit needs at least 3 points, got " + std::to_string(k));
  }
  Rng rng(seed);
  double best_count = -1.0;
  Eigen::Vector3d best_normal = Eigen::Vector3d::UnitZ();
  double best_offset = 0.0;

  for (int it = 0; it < params.iterations; ++it) {
    const std::size_t i0 = rng.uniform_index(k);
    const std::size_t i1 = rng.uniform_index(k);
    const std::size_t i2 = rng.uniform_index(k);
    if (i0 == i1 || i1 == i2 || i0 == i2) continue;
    const Eigen::Vector3d e1 = cloud.points[i1] - cloud.points[i0];
    const Eigen::Vector3d e2 = cloud.points[i2] - cloud.points[i0];
    Eigen::Vector3d normal = e1.cross(e2);
    const double norm = normal.norm();
    if (norm < 1e-12) continue;  // collinear sample
    normal /= norm;
    const double offset = normal.dot(cloud.points[i0]);

    int count = 0;
    for (const auto& p : cloud.points) {
      if (std::abs(normal.dot(p) - offset) <= params.distance_threshold) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_normal = normal;
      best_offset = offset;
    }
  }

  if (best_count < 0 ||
      best_count / static_cast<double>(k) < params.min_inlier_fraction) {
    return std::nullopt;
  }

  // Least-squares refit (PCA) on the winning candidate's inliers.
  std::vector<std::size_t> inliers;
  for (std::size_t i = 0; i < k; ++i) {
    if (std::abs(best_normal.dot(cloud.points[i]) - best_offset) <=
        params.distance_threshold) {
      inliers.push_back(i);
    }
  }
  Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
  for (std::size_t i : inliers) centroid += cloud.points[i];
  centroid /= static_cast<double>(inliers.size());
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (std::size_t i : inliers) {
    const Eigen::Vector3d d = cloud.points[i] - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Eigen::Vector3d normal = eig.eigenvectors().col(0);  // smallest eigenvalue
  if (normal.dot(best_normal) < 0) normal = -normal;

  PlaneModel model;
  model.normal = normal.normalized();
  model.offset = model.normal.dot(centroid);
  model.inlier_count = 0;
  for (const auto& p : cloud.points) {
    if (model.distance(p) <= params.distance_threshold) ++model.inlier_count;
  }
  return model;
}

PointCloud remove_plane(const PointCloud& cloud, const PlaneModel& plane,
                        double distance_threshold) {
  std::vector<std::size_t> keep;
  keep.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (plane.distance(cloud.points[i]) > distance_threshold) keep.push_back(i);
  }
  return select_rows(cloud, keep);
}

PointCloud statistical_outlier_filter(const PointCloud& cloud, int k_neighbors,
                                      double std_ratio) {
  if (k_neighbors < 1) {
    throw Error(ErrorCode::kInvalidArgument, "k_neighbors must be >= 1");
  }
  if (cloud.size() <= static_cast<std::size_t>(k_neighbors)) {
    throw Error(ErrorCode::kInvalidArgument,
                "outlier filter needs K > k_neighbors (K=" + std::to_string(cloud.size()) +
                    ", k=" + std::to_string(k_neighbors) + ")");
  }
  return select_rows(cloud, outlier_keep_indices(cloud.points, k_neighbors, std_ratio));
}

NormStats NormStats::from_box(const Eigen::Vector3d& min, const Eigen::Vector3d& max) {
  NormStats stats;
  stats.lo = min;
  stats.hi = max;
  for (int a = 0; a < 3; ++a) {
    stats.degenerate[a] = (max[a] - min[a]) < 1e-9;
  }
  return stats;
}

Eigen::Vector3d NormStats::normalize_point(const Eigen::Vector3d& p) const {
  Eigen::Vector3d out;
  for (int a = 0; a < 3; ++a) {
    if (degenerate[a]) {
      out[a] = 0.5;
    } else {
      const double clamped = std::clamp(p[a], lo[a], hi[a]);
      out[a] = (clamped - lo[a]) / (hi[a] - lo[a]);
    }
  }
  return out;
}

Eigen::Vector3d NormStats::denormalize_point(const Eigen::Vector3d& p) const {
  Eigen::Vector3d out;
  for (int a = 0; a < 3; ++a) {
    out[a] = degenerate[a] ? lo[a] : lo[a] + p[a] * (hi[a] - lo[a]);
  }
  return out;
}

std::pair<PointCloud, NormStats> truncated_minmax_normalize(const PointCloud& cloud,
                                                            double lo_percentile,
                                                            double hi_percentile) {
  if (cloud.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument,
                "normalization needs at least 2 points, got " + std::to_string(cloud.size()));
  }
  if (!(lo_percentile >= 0.0 && lo_percentile < hi_percentile && hi_percentile <= 100.0)) {
    throw Error(ErrorCode::kInvalidArgument, "percentiles must satisfy 0 <= lo < hi <= 100");
  }
  NormStats stats;
  std::vector<double> axis_values(cloud.size());
  for (int a = 0; a < 3; ++a) {
    for (std::size_t i = 0; i < cloud.size(); ++i) axis_values[i] = cloud.points[i][a];
    std::sort(axis_values.begin(), axis_values.end());
    stats.lo[a] = nearest_rank_percentile(axis_values, lo_percentile);
    stats.hi[a] = nearest_rank_percentile(axis_values, hi_percentile);
    stats.degenerate[a] = (stats.hi[a] - stats.lo[a]) < 1e-9;
  }
  PointCloud out = apply_normalization(cloud, stats);
  return {std::move(out), stats};
}

PointCloud apply_normalization(const PointCloud& cloud, const NormStats& stats) {
  PointCloud out;
  out.frame_tag = FrameTag::kNormalized;
  out.channels = cloud.channels;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) {
    out.points.push_back(stats.normalize_point(p));
  }
  return out;
}

PointCloud run_pipeline(const PointCloud& cloud, const PipelineConfig& config) {
  return run_pipeline_traced(cloud, config, nullptr);
}

PointCloud run_pipeline_traced(const PointCloud& cloud, const PipelineConfig& config,
                               PipelineTrace* trace) {
  validate(config);
  geometry::validate(cloud);

  std::vector<std::size_t> index_map;  // output row -> original row
  index_map.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (config.crop_bounds.contains(cloud.points[i])) index_map.push_back(i);
  }
  PointCloud current = select_rows(cloud, index_map);
  if (current.empty()) {
    throw Error(ErrorCode::kEmptyInput, "cloud is empty after stage", "crop");
  }
  const std::size_t after_crop = current.size();

  const auto remap = [&index_map](const std::vector<std::size_t>& keep) {
    std::vector<std::size_t> next(keep.size());
    for (std::size_t i = 0; i < keep.size(); ++i) next[i] = index_map[keep[i]];
    index_map = std::move(next);
  };

  int planes_removed = 0;
  for (int pass = 0; pass < config.plane_removal_passes; ++pass) {
    if (current.size() < 3) break;
    const auto plane = fit_plane_ransac(current, config.ransac,
                                        derive_seed(config.seed, 0x706c616eULL, pass));
    if (!plane) break;
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < current.size(); ++i) {
      if (plane->distance(current.points[i]) > config.ransac.distance_threshold) {
        keep.push_back(i);
      }
    }
    current = select_rows(current, keep);
    remap(keep);
    ++planes_removed;
    if (current.empty()) {
      throw Error(ErrorCode::kEmptyInput, "cloud is empty after stage", "plane_removal");
    }
  }
  const std::size_t after_plane = current.size();

  if (current.size() > static_cast<std::size_t>(config.outlier.k_neighbors)) {
    const auto keep =
        outlier_keep_indices(current.points, config.outlier.k_neighbors, config.outlier.std_ratio);
    current = select_rows(current, keep);
    remap(keep);
  }
  if (current.empty()) {
    throw Error(ErrorCode::kEmptyInput, "cloud is empty after stage", "outlier_filter");
  }
  const std::size_t after_outlier = current.size();

  if (current.size() < 2) {
    throw Error(ErrorCode::kEmptyInput, "cloud too small for stage", "normalize");
  }
  NormStats stats;
  {
    auto [normalized, s] = truncated_minmax_normalize(current, config.normalize.lo_percentile,
                                                      config.normalize.hi_percentile);
    current = std::move(normalized);
    stats = s;
  }

  // FPS down or seeded duplicate-pad up to exactly target_points.
  if (current.size() >= config.target_points) {
    auto fps = geometry::farthest_point_sampling(current, config.target_points,
                                                 derive_seed(config.seed, 0x667073ULL));
    remap(fps.indices);
    current = std::move(fps.cloud);
  } else {
    Rng rng(derive_seed(config.seed, 0x706164ULL));
    const std::size_t base = current.size();
    current.points.reserve(config.target_points);
    if (current.has_channels()) {
      Eigen::MatrixXd channels(static_cast<Eigen::Index>(config.target_points),
                               current.channels.cols());
      channels.topRows(current.channels.rows()) = current.channels;
      current.channels = std::move(channels);
    }
    while (current.points.size() < config.target_points) {
      const std::size_t pick = rng.uniform_index(base);
      if (current.has_channels()) {
        current.channels.row(static_cast<Eigen::Index>(current.points.size())) =
            current.channels.row(static_cast<Eigen::Index>(pick));
      }
      const Eigen::Vector3d dup = current.points[pick];
      current.points.push_back(dup);
      index_map.push_back(index_map[pick]);
    }
  }

  if (trace) {
    trace->indices = index_map;
    trace->norm = stats;
    trace->after_crop = after_crop;
    trace->after_plane = after_plane;
    trace->after_outlier = after_outlier;
    trace->planes_removed = planes_removed;
  }
  return current;
}

PointCloud augment(const PointCloud& cloud, const AugmentConfig& config,
                   std::uint64_t seed) {
  validate(config);
  Rng rng(seed);

  geometry::Sim3Transform t;
  const double ax = rng.uniform(-config.rotation_range.x(), config.rotation_range.x());
  const double ay = rng.uniform(-config.rotation_range.y(), config.rotation_range.y());
  const double az = rng.uniform(-config.rotation_range.z(), config.rotation_range.z());
  t.rotation = Eigen::AngleAxisd(az, Eigen::Vector3d::UnitZ()) *
               Eigen::AngleAxisd(ay, Eigen::Vector3d::UnitY()) *
               Eigen::AngleAxisd(ax, Eigen::Vector3d::UnitX());
  t.translation =
      Eigen::Vector3d(rng.uniform(-config.translation_range.x(), config.translation_range.x()),
                      rng.uniform(-config.translation_range.y(), config.translation_range.y()),
                      rng.uniform(-config.translation_range.z(), config.translation_range.z()));
  t.scale = rng.uniform(config.scale_range[0], config.scale_range[1]);

  PointCloud out = geometry::sim3_apply(t, cloud);

  if (config.dropout_rate > 0.0 && !out.empty()) {
    std::vector<char> dropped(out.size(), 0);
    std::vector<std::size_t> survivors;
    survivors.reserve(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      dropped[i] = rng.bernoulli(config.dropout_rate) ? 1 : 0;
      if (!dropped[i]) survivors.push_back(i);
    }
    if (!survivors.empty()) {
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (!dropped[i]) continue;
        const std::size_t src = survivors[rng.uniform_index(survivors.size())];
        out.points[i] = out.points[src];
        if (out.has_channels()) {
          out.channels.row(static_cast<Eigen::Index>(i)) =
              out.channels.row(static_cast<Eigen::Index>(src));
        }
      }
    }
  }

  if (config.noise_sigma > 0.0) {
    for (auto& p : out.points) {
      p.x() += rng.normal(0.0, config.noise_sigma);
      p.y() += rng.normal(0.0, config.noise_sigma);
      p.z() += rng.normal(0.0, config.noise_sigma);
    }
  }
  return out;
}

}  // namespace vidpoint::preprocess
