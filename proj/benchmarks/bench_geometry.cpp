#include <benchmark/benchmark.h>

#include "vidpoint/geometry.hpp"
#include "vidpoint/preprocess.hpp"
#include "vidpoint/rng.hpp"

using namespace vidpoint;
using namespace vidpoint::geometry;

namespace {

PointCloud random_cloud(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  cloud.points.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    cloud.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  }
  return cloud;
}

}  // namespace

static void BM_Chamfer512(benchmark::State& state) {
  const PointCloud a = random_cloud(512, 1);
  const PointCloud b = random_cloud(512, 2);
  for (auto _ : state) {
    benchmark::DoNotOptimize(chamfer_distance(a, b));
  }
}
BENCHMARK(BM_Chamfer512)->Unit(benchmark::kMicrosecond);

static void BM_FpsDownsample(benchmark::State& state) {
  const PointCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(farthest_point_sampling(cloud, 512, 5));
  }
}
BENCHMARK(BM_FpsDownsample)->Arg(2048)->Arg(8192)->Arg(32768)->Unit(benchmark::kMillisecond);

static void BM_OutlierFilter(benchmark::State& state) {
  const PointCloud cloud = random_cloud(static_cast<std::size_t>(state.range(0)), 7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(preprocess::statistical_outlier_filter(cloud, 16, 2.0));
  }
}
BENCHMARK(BM_OutlierFilter)->Arg(2048)->Arg(8192)->Unit(benchmark::kMillisecond);

static void BM_RansacPlane(benchmark::State& state) {
  Rng rng(11);
  PointCloud cloud;
  for (int i = 0; i < 20000; ++i) {
    cloud.points.emplace_back(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5),
                              rng.normal(0.0, 0.001));
  }
  preprocess::RansacParams params;
  for (auto _ : state) {
    benchmark::DoNotOptimize(preprocess::fit_plane_ransac(cloud, params, 3));
  }
}
BENCHMARK(BM_RansacPlane)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
