#include <CLI11.hpp>
#include <cstdio>
#include <optional>
#include <string>

#include "vidpoint/harness.hpp"
#include "vidpoint/thread_pool.hpp"

using vidpoint::Error;
using namespace vidpoint::harness;

namespace {

struct CommonOptions {
  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  std::string ablate;
};

void add_common(CLI::App* cmd, CommonOptions* options, bool with_ablate) {
  cmd->add_option("--config", options->config_path, "Run config JSON (defaults when omitted)");
  cmd->add_option("--out", options->out_dir, "Output directory")->capture_default_str();
  cmd->add_option("--seed", options->seed, "Override the config seed");
  if (with_ablate) {
    cmd->add_option("--ablate", options->ablate, "Ablation: no-viewnet or no-dep-orth");
  }
}

RunConfig resolve_config(const CommonOptions& options) {
  RunConfig config =
      options.config_path.empty() ? default_run_config() : load_run_config(options.config_path);
  if (options.seed) config.seed = *options.seed;
  finalize_run_config(config);
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vidpoint: view-invariant point-cloud representation toolkit"};
  app.require_subcommand(1);

  CommonOptions gen_opts, viewnet_opts, encoder_opts, eval_opts, bench_opts;
  CLI::App* gen = app.add_subcommand("gen-data", "Generate episodes and triplets");
  add_common(gen, &gen_opts, false);
  CLI::App* train_viewnet = app.add_subcommand("train-viewnet", "Train the alignment module");
  add_common(train_viewnet, &viewnet_opts, false);
  CLI::App* train_encoder = app.add_subcommand("train-encoder", "Train the dual-head encoder");
  add_common(train_encoder, &encoder_opts, true);
  CLI::App* eval = app.add_subcommand("eval", "Evaluate checkpoints on held-out data");
  add_common(eval, &eval_opts, true);
  CLI::App* bench = app.add_subcommand("bench", "Batch-renderer throughput sweep");
  add_common(bench, &bench_opts, false);

  CLI11_PARSE(app, argc, argv);

  const std::size_t workers = vidpoint::default_worker_count();
  try {
    if (gen->parsed()) {
      cmd_gen_data(resolve_config(gen_opts), gen_opts.out_dir, workers);
      std::printf("gen-data: wrote %s/manifest.json\n", gen_opts.out_dir.c_str());
    } else if (train_viewnet->parsed()) {
      cmd_train_viewnet(resolve_config(viewnet_opts), viewnet_opts.out_dir, workers);
      std::printf("train-viewnet: wrote %s/viewnet.ckpt\n", viewnet_opts.out_dir.c_str());
    } else if (train_encoder->parsed()) {
      cmd_train_encoder(resolve_config(encoder_opts), encoder_opts.out_dir, workers,
                        ablation_from_name(encoder_opts.ablate));
      std::printf("train-encoder: wrote %s/encoder*.ckpt\n", encoder_opts.out_dir.c_str());
    } else if (eval->parsed()) {
      const EvalReport report = cmd_eval(resolve_config(eval_opts), eval_opts.out_dir,
                                         ablation_from_name(eval_opts.ablate));
      std::printf("retrieval_top1=%.4f probe_dep=%.4f probe_inv=%.4f alignment_ratio=%.4f\n",
                  report.retrieval_top1, report.probe_dep, report.probe_inv,
                  report.alignment_ratio);
    } else if (bench->parsed()) {
      const auto entries = cmd_bench(resolve_config(bench_opts), bench_opts.out_dir);
      for (const auto& entry : entries) {
        std::printf("workers=%zu jobs=%zu total_fps=%.2f fps_env=%.4f\n", entry.workers,
                    entry.jobs, entry.total_fps, entry.fps_env);
      }
    }
  } catch (const Error& e) {
    std::fprintf(stderr, "error [%s]: %s\n", vidpoint::error_code_name(e.code()), e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
