#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidpoint/disentangle.hpp"
#include "vidpoint/preprocess.hpp"
#include "vidpoint/synthscene.hpp"
#include "vidpoint/viewnet.hpp"

namespace vidpoint::harness {

struct GenDataConfig {
  std::size_t episodes = 64;
  int episode_length = 20;
  std::size_t holdout_episodes = 8;
  std::size_t triplets = 2000;
  std::size_t holdout_triplets = 200;
};

struct BenchConfig {
  std::size_t jobs = 256;
  std::vector<std::size_t> workers = {1, 2, 4, 8};
  int width = 240;
  int height = 240;
  std::size_t env_count = 128;  // K environments; M = jobs / K cameras each
};

struct EvalThresholds {
  double retrieval_top1 = 0.90;
  double probe_gap = 0.30;
  int probe_bins = 8;
  double alignment_ratio = 0.20;
};

/// Everything a run needs, file-reviewable and diffable. Unknown keys in
/// the config file are rejected; every command writes the resolved
/// snapshot next to its outputs.
struct RunConfig {
  std::uint64_t seed = 0;
  synthscene::Scene scene = synthscene::default_scene();
  synthscene::SceneRandomization randomize;
  synthscene::CameraSamplingRange camera = synthscene::default_camera_range();
  preprocess::PipelineConfig pipeline;
  preprocess::AugmentConfig augment;
  bool augment_enabled = false;
  Eigen::AlignedBox3d world_bounds{Eigen::Vector3d(-0.6, -0.6, -0.2),
                                   Eigen::Vector3d(0.6, 0.6, 1.0)};
  GenDataConfig gen_data;
  viewnet::ViewNetConfig viewnet;
  disentangle::DisentangleConfig disentangle;
  BenchConfig bench;
  EvalThresholds eval;
  bool use_viewnet = true;
};

RunConfig default_run_config();

/// Propagates the global seed into the per-module configs and keeps the
/// pipeline/encoder point counts coherent. Idempotent; applied by
/// load_run_config and again by every command.
void finalize_run_config(RunConfig& config);

/// Strict parse: every section and key must be known. Values omitted from
/// the file keep their defaults.
RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& config, const std::string& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace vidpoint::harness
