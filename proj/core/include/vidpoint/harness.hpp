#pragma once

#include <string>
#include <vector>

#include "vidpoint/configio.hpp"
#include "vidpoint/datastore.hpp"
#include "vidpoint/disentangle.hpp"

namespace vidpoint::harness {

/// Stable CLI exit-code contract: 0 success, 1 config error, 2 missing
/// artifact, 3 numerical failure.
int exit_code_for(const Error& error);

enum class Ablation { kNone, kNoViewNet, kNoDepOrth };
Ablation ablation_from_name(const std::string& name);  // "", "no-viewnet", "no-dep-orth"

/// Generates triplets and episodes, runs the preprocessing pipeline, and
/// persists record files plus a manifest with fingerprints under out_dir.
void cmd_gen_data(const RunConfig& config, const std::string& out_dir,
                  std::size_t workers);

/// Trains the alignment module on the generated triplets; writes
/// viewnet.ckpt, viewnet_metrics.csv and a JSON sidecar.
void cmd_train_viewnet(const RunConfig& config, const std::string& out_dir,
                       std::size_t workers);

/// Trains the dual-head encoder on the generated episodes (ViewNet-aligned
/// unless ablated); writes encoder.ckpt, encoder_metrics.csv and a sidecar.
void cmd_train_encoder(const RunConfig& config, const std::string& out_dir,
                       std::size_t workers, Ablation ablation = Ablation::kNone);

struct EvalReport {
  double retrieval_top1 = 0.0;
  double probe_dep = 0.0;
  double probe_inv = 0.0;
  double alignment_ratio = 0.0;
  bool retrieval_pass = false;
  bool probe_pass = false;
  bool alignment_pass = false;
};

/// Evaluates the checkpoints on the held-out data and writes eval.json.
EvalReport cmd_eval(const RunConfig& config, const std::string& out_dir,
                    Ablation ablation = Ablation::kNone);

struct BenchEntry {
  std::size_t workers = 0;
  std::size_t jobs = 0;
  double total_fps = 0.0;
  double fps_env = 0.0;
  double seconds = 0.0;
};

/// Renders the job matrix across the configured worker counts and writes
/// bench.json with the K x FPS_env accounting.
std::vector<BenchEntry> cmd_bench(const RunConfig& config, const std::string& out_dir);

/// The processed-episode loader used by train/eval (exposed for tests).
/// With an aligner: align to world meters, then fixed world-box
/// normalization. Without (ablation): per-cloud truncated min-max.
std::vector<disentangle::ProcessedEpisode> load_processed_episodes(
    const std::string& path, const viewnet::ViewNetParams* align_with,
    const RunConfig& config);

}  // namespace vidpoint::harness
