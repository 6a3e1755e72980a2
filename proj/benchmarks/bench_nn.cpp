#include <benchmark/benchmark.h>

#include "vidpoint/disentangle.hpp"
#include "vidpoint/viewnet.hpp"

using namespace vidpoint;

namespace {

geometry::PointCloud normalized_cloud(std::size_t k, std::uint64_t seed) {
  Rng rng(seed);
  geometry::PointCloud cloud;
  cloud.frame_tag = geometry::FrameTag::kNormalized;
  for (std::size_t i = 0; i < k; ++i) {
    cloud.points.emplace_back(rng.uniform(), rng.uniform(), rng.uniform());
  }
  return cloud;
}

}  // namespace

static void BM_ViewNetForward(benchmark::State& state) {
  viewnet::ViewNetConfig config;
  const auto params_init = viewnet::init_viewnet(config);
  auto params = params_init;
  const auto cloud = normalized_cloud(512, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(viewnet::viewnet_forward(params, cloud));
  }
}
BENCHMARK(BM_ViewNetForward)->Unit(benchmark::kMicrosecond);

static void BM_ViewNetLossGrad(benchmark::State& state) {
  viewnet::ViewNetConfig config;
  auto params = viewnet::init_viewnet(config);
  synthscene::Triplet triplet;
  triplet.p_org = normalized_cloud(512, 1);
  triplet.p_world = normalized_cloud(512, 2);
  triplet.p_ref = normalized_cloud(512, 3);
  for (auto _ : state) {
    benchmark::DoNotOptimize(viewnet::viewnet_loss(params, triplet));
  }
}
BENCHMARK(BM_ViewNetLossGrad)->Unit(benchmark::kMillisecond);

static void BM_EncoderForward(benchmark::State& state) {
  disentangle::DisentangleConfig config;
  auto params = disentangle::init_encoder(config);
  const auto cloud = normalized_cloud(512, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(disentangle::encoder_forward(params, cloud));
  }
}
BENCHMARK(BM_EncoderForward)->Unit(benchmark::kMicrosecond);

static void BM_DisentangleStep(benchmark::State& state) {
  disentangle::DisentangleConfig config;
  config.batch_size = 8;
  auto params = disentangle::init_encoder(config);
  std::vector<disentangle::BatchItem> batch;
  for (int k = 0; k < 8; ++k) {
    disentangle::BatchItem item;
    item.episode_id = static_cast<std::size_t>(k / 2);
    item.timestep = k % 2;
    item.ref = normalized_cloud(512, 10 + k);
    item.rand = normalized_cloud(512, 50 + k);
    batch.push_back(std::move(item));
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(disentangle::loss_total(params, batch, 50, 100, config, 2));
  }
}
BENCHMARK(BM_DisentangleStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
