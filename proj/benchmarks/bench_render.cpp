#include <benchmark/benchmark.h>

#include "vidpoint/synthscene.hpp"
#include "vidpoint/thread_pool.hpp"

using namespace vidpoint;
using namespace vidpoint::synthscene;

namespace {

std::vector<RenderJob> make_jobs(std::size_t count, int resolution) {
  CameraSamplingRange range = default_camera_range();
  range.reference.width = resolution;
  range.reference.height = resolution;
  range.reference.cx = range.reference.cy = (resolution - 1) / 2.0;
  std::vector<RenderJob> jobs;
  Rng rng(7);
  for (std::size_t i = 0; i < count; ++i) {
    RenderJob job;
    job.scene = randomize_scene(default_scene(), SceneRandomization{}, rng);
    job.camera = sample_camera(range, rng).camera;
    jobs.push_back(std::move(job));
  }
  return jobs;
}

}  // namespace

static void BM_RenderDepth240(benchmark::State& state) {
  const auto jobs = make_jobs(1, 240);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_depth(jobs[0].scene, jobs[0].camera));
  }
  state.counters["fps"] = benchmark::Counter(state.iterations(), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RenderDepth240)->Unit(benchmark::kMillisecond);

static void BM_RenderBatchWorkers(benchmark::State& state) {
  const std::size_t workers = static_cast<std::size_t>(state.range(0));
  const auto jobs = make_jobs(32, 240);
  for (auto _ : state) {
    benchmark::DoNotOptimize(render_batch(jobs, workers, 16));
  }
  state.counters["fps"] = benchmark::Counter(
      static_cast<double>(state.iterations() * jobs.size()), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_RenderBatchWorkers)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)
    ->UseRealTime();

static void BM_Unproject240(benchmark::State& state) {
  const auto jobs = make_jobs(1, 240);
  const auto depth = render_depth(jobs[0].scene, jobs[0].camera);
  for (auto _ : state) {
    benchmark::DoNotOptimize(geometry::unproject_depth(depth, jobs[0].camera));
  }
}
BENCHMARK(BM_Unproject240)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
