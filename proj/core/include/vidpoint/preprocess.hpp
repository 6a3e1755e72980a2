#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vidpoint/geometry.hpp"

namespace vidpoint::preprocess {

using geometry::PointCloud;

struct RansacParams {
  double distance_threshold = 0.005;  // meters
  int iterations = 100;
  double min_inlier_fraction = 0.2;
};

struct OutlierParams {
  int k_neighbors = 16;
  double std_ratio = 2.0;
};

struct NormalizeParams {
  double lo_percentile = 1.0;
  double hi_percentile = 99.0;
};

/// Four-stage pipeline configuration: crop -> plane removal -> outlier
/// filter -> percentile normalization, then FPS to a fixed size.
struct PipelineConfig {
  Eigen::AlignedBox3d crop_bounds{Eigen::Vector3d(-1, -1, -1), Eigen::Vector3d(1, 1, 1)};
  RansacParams ransac;
  OutlierParams outlier;
  NormalizeParams normalize;
  int plane_removal_passes = 1;  // best candidate per pass; 0 disables
  std::size_t target_points = 512;
  std::uint64_t seed = 0;
};

void validate(const PipelineConfig& config);

struct AugmentConfig {
  Eigen::Vector3d rotation_range = Eigen::Vector3d::Zero();     // radians per axis
  Eigen::Vector3d translation_range = Eigen::Vector3d::Zero();  // meters per axis
  std::array<double, 2> scale_range = {1.0, 1.0};
  double dropout_rate = 0.0;
  double noise_sigma = 0.0;  // meters
  std::uint64_t seed = 0;
};

void validate(const AugmentConfig& config);

/// Plane n.x = offset with |n| = 1.
struct PlaneModel {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double offset = 0.0;
  std::size_t inlier_count = 0;

  double distance(const Eigen::Vector3d& p) const {
    return std::abs(normal.dot(p) - offset);
  }
};

/// Per-axis truncated min-max statistics; inverts the normalization for
/// non-clamped points. Degenerate axes (hi - lo < 1e-9) map to 0.5.
struct NormStats {
  Eigen::Vector3d lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d hi = Eigen::Vector3d::Ones();
  std::array<bool, 3> degenerate = {false, false, false};

  static NormStats from_box(const Eigen::Vector3d& min, const Eigen::Vector3d& max);

  Eigen::Vector3d normalize_point(const Eigen::Vector3d& p) const;
  Eigen::Vector3d denormalize_point(const Eigen::Vector3d& p) const;
};

/// Keeps exactly the points inside the closed box; order preserved.
PointCloud crop_workspace(const PointCloud& cloud, const Eigen::AlignedBox3d& bounds);

/// Seeded RANSAC plane fit: 3-point candidates scored by inlier count,
/// best model refit by least squares on its inliers. Returns nullopt when
/// the best inlier fraction stays below params.min_inlier_fraction.
std::optional<PlaneModel> fit_plane_ransac(const PointCloud& cloud,
                                           const RansacParams& params,
                                           std::uint64_t seed);

/// Removes points with |n.x - offset| <= distance_threshold.
PointCloud remove_plane(const PointCloud& cloud, const PlaneModel& plane,
                        double distance_threshold);

/// Removes points whose mean k-nearest-neighbor distance exceeds
/// mu + std_ratio * sigma of the population of mean distances.
PointCloud statistical_outlier_filter(const PointCloud& cloud, int k_neighbors,
                                      double std_ratio);

/// Per-axis nearest-rank percentiles [lo, hi], clamp, then affine map to
/// [0, 1]. Degenerate axes land on 0.5 and are flagged in the stats.
std::pair<PointCloud, NormStats> truncated_minmax_normalize(const PointCloud& cloud,
                                                            double lo_percentile,
                                                            double hi_percentile);

/// Applies `stats` to a cloud (same clamp/degenerate rules); tags the
/// result as normalized. Used for fixed-frame normalization of targets.
PointCloud apply_normalization(const PointCloud& cloud, const NormStats& stats);

/// Bookkeeping from a traced pipeline run: per-output-point index into the
/// ORIGINAL cloud (after FPS and padding) plus the normalization stats.
struct PipelineTrace {
  std::vector<std::size_t> indices;
  NormStats norm;
  std::size_t after_crop = 0;
  std::size_t after_plane = 0;
  std::size_t after_outlier = 0;
  int planes_removed = 0;
};

/// crop -> RANSAC plane removal (skipped when no plane qualifies) ->
/// statistical outlier filter (skipped when K <= k_neighbors) ->
/// truncated min-max normalize -> FPS to target_points (padded by seeded
/// resampling with replacement when fewer remain).
PointCloud run_pipeline(const PointCloud& cloud, const PipelineConfig& config);
PointCloud run_pipeline_traced(const PointCloud& cloud, const PipelineConfig& config,
                               PipelineTrace* trace);

/// Random SIM(3) jitter drawn from the config ranges, Bernoulli dropout
/// with duplicate padding (K stays fixed), then i.i.d. Gaussian noise.
PointCloud augment(const PointCloud& cloud, const AugmentConfig& config,
                   std::uint64_t seed);

}  // namespace vidpoint::preprocess
