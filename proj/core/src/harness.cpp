#include "vidpoint/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vidpoint/thread_pool.hpp"
#include "vidpoint/viewnet.hpp"

namespace vidpoint::harness {

namespace fs = std::filesystem;
using nlohmann::json;
using geometry::PointCloud;

int exit_code_for(const Error& error) {
  switch (error.code()) {
    case ErrorCode::kMissingArtifact:
      return 2;
    case ErrorCode::kNumerical:
      return 3;
    default:
      return 1;
  }
}

Ablation ablation_from_name(const std::string& name) {
  if (name.empty() || name == "none") return Ablation::kNone;
  if (name == "no-viewnet") return Ablation::kNoViewNet;
  if (name == "no-dep-orth") return Ablation::kNoDepOrth;
  throw Error(ErrorCode::kInvalidArgument,
              "unknown ablation '" + name + "' (use no-viewnet or no-dep-orth)");
}

namespace {

constexpr char kManifestName[] = "manifest.json";

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw Error(ErrorCode::kIoError, "cannot write", path);
  }
  os << text;
}

json read_manifest(const std::string& out_dir) {
  const std::string path = (fs::path(out_dir) / kManifestName).string();
  std::ifstream is(path);
  if (!is) {
    throw Error(ErrorCode::kMissingArtifact,
                "run gen-data first: no manifest at " + path, path);
  }
  json j;
  is >> j;
  return j;
}

std::string dataset_path(const json& manifest, const std::string& key,
                         const std::string& out_dir) {
  if (!manifest.contains(key)) {
    throw Error(ErrorCode::kMissingArtifact, "manifest has no '" + key + "' dataset");
  }
  return (fs::path(out_dir) / manifest[key]["file"].get<std::string>()).string();
}

// One triplet in the training representation: p_org pipeline-normalized in
// its own frame, p_world/p_ref in the fixed normalized world frame.
struct TripletBuild {
  datastore::TripletRecord record;
  bool ok = false;
};

TripletBuild build_triplet(const RunConfig& config, std::uint64_t index,
                           std::uint64_t stream) {
  TripletBuild build;
  Rng rng(derive_seed(config.seed, stream, index));
  const synthscene::Scene scene =
      synthscene::randomize_scene(config.scene, config.randomize, rng);
  const synthscene::CameraSample sample = synthscene::sample_camera(config.camera, rng);
  const geometry::CameraModel& ref_cam = config.camera.reference;

  const synthscene::Triplet raw = synthscene::make_triplet(scene, ref_cam, sample.camera);
  if (raw.p_org.size() < 8 || raw.p_ref.size() < 8) return build;

  // The pipeline's crop/plane/outlier/FPS stages select the point subset;
  // the selected points are kept in meters so the p_org -> p_world map is
  // exactly the rigid extrinsics (representable by the SIM(3) head).
  preprocess::PipelineConfig org_pipeline = config.pipeline;
  org_pipeline.seed = derive_seed(config.seed, stream ^ 0x6f7267ULL, index);
  preprocess::PipelineTrace trace;
  synthscene::Triplet processed;
  try {
    preprocess::run_pipeline_traced(raw.p_org, org_pipeline, &trace);
  } catch (const Error&) {
    return build;  // degenerate view (e.g. everything cropped); caller retries
  }
  processed.p_org.frame_tag = geometry::FrameTag::kCamera;
  processed.p_org.points.reserve(trace.indices.size());
  processed.p_world.frame_tag = geometry::FrameTag::kWorld;
  processed.p_world.points.reserve(trace.indices.size());
  for (std::size_t idx : trace.indices) {
    processed.p_org.points.push_back(raw.p_org.points[idx]);
    processed.p_world.points.push_back(raw.p_world.points[idx]);
  }

  // Reference view: its own index selection, expressed in world meters.
  preprocess::PipelineConfig ref_pipeline = config.pipeline;
  ref_pipeline.seed = derive_seed(config.seed, stream ^ 0x726566ULL, index);
  PointCloud ref_camera_frame;
  ref_camera_frame.frame_tag = geometry::FrameTag::kCamera;
  ref_camera_frame.points.reserve(raw.p_ref.size());
  for (const auto& world_point : raw.p_ref.points) {
    ref_camera_frame.points.push_back(ref_cam.camera_from_world(world_point));
  }
  preprocess::PipelineTrace ref_trace;
  try {
    preprocess::run_pipeline_traced(ref_camera_frame, ref_pipeline, &ref_trace);
  } catch (const Error&) {
    return build;
  }
  processed.p_ref.frame_tag = geometry::FrameTag::kWorld;
  processed.p_ref.points.reserve(ref_trace.indices.size());
  for (std::size_t idx : ref_trace.indices) {
    processed.p_ref.points.push_back(raw.p_ref.points[idx]);
  }

  build.record.triplet = std::move(processed);
  build.record.rand_camera = sample.camera;
  build.record.yaw_deg = sample.yaw_deg;
  build.record.pitch_deg = sample.pitch_deg;
  build.record.distance_scale = sample.distance_scale;
  build.record.org_norm = trace.norm;
  build.ok = true;
  return build;
}

std::vector<datastore::TripletRecord> generate_triplets(const RunConfig& config,
                                                        std::size_t count,
                                                        std::uint64_t stream,
                                                        std::size_t workers) {
  // Deterministic retry: each slot probes indices slot, slot+N, slot+2N...
  // until one renders a usable view; draws depend only on (seed, index).
  std::vector<datastore::TripletRecord> records(count);
  parallel_for(count, workers, [&](std::size_t slot) {
    for (std::uint64_t attempt = 0;; ++attempt) {
      TripletBuild build = build_triplet(config, slot + attempt * count, stream);
      if (build.ok) {
        records[slot] = std::move(build.record);
        return;
      }
      if (attempt > 64) {
        throw Error(ErrorCode::kNumerical,
                    "triplet generation failed 64 times for slot " + std::to_string(slot));
      }
    }
  });
  return records;
}

// Selection stages of the pipeline in camera-frame meters: the stored
// episode clouds are normalized downstream, after ViewNet alignment, with
// the fixed world box (see load_processed_episodes).
PointCloud process_episode_cloud(const PointCloud& raw, const RunConfig& config,
                                 std::uint64_t seed) {
  PointCloud input = raw;
  if (config.augment_enabled) {
    preprocess::AugmentConfig augment = config.augment;
    input = preprocess::augment(input, augment, derive_seed(seed, 0x617567ULL));
  }
  preprocess::PipelineConfig pipeline = config.pipeline;
  pipeline.seed = seed;
  preprocess::PipelineTrace trace;
  preprocess::run_pipeline_traced(input, pipeline, &trace);
  PointCloud out;
  out.frame_tag = geometry::FrameTag::kCamera;
  out.points.reserve(trace.indices.size());
  for (std::size_t idx : trace.indices) out.points.push_back(input.points[idx]);
  return out;
}

std::vector<synthscene::Episode> generate_episodes(const RunConfig& config, std::size_t count,
                                                   std::uint64_t stream,
                                                   std::size_t workers) {
  std::vector<synthscene::Episode> episodes(count);
  parallel_for(count, workers, [&](std::size_t e) {
    const std::uint64_t episode_seed = derive_seed(config.seed, stream, e);
    Rng rng(derive_seed(episode_seed, 0x7363656eULL));
    const synthscene::Scene scene =
        synthscene::randomize_scene(config.scene, config.randomize, rng);
    synthscene::Episode episode = synthscene::scripted_episode(
        scene, config.camera, config.gen_data.episode_length, episode_seed);
    // Persist pipeline-processed clouds; raw unprojections are only an
    // intermediate here.
    for (auto& frame : episode.frames) {
      frame.ref_cloud = process_episode_cloud(
          frame.ref_cloud, config,
          derive_seed(episode_seed, 0x726566ULL, static_cast<std::uint64_t>(frame.timestep)));
      frame.rand_cloud = process_episode_cloud(
          frame.rand_cloud, config,
          derive_seed(episode_seed, 0x726e64ULL, static_cast<std::uint64_t>(frame.timestep)));
    }
    episodes[e] = std::move(episode);
  });
  return episodes;
}

std::vector<synthscene::Triplet> to_triplets(const std::vector<datastore::TripletRecord>& records) {
  std::vector<synthscene::Triplet> triplets;
  triplets.reserve(records.size());
  for (const auto& record : records) triplets.push_back(record.triplet);
  return triplets;
}

}  // namespace

void cmd_gen_data(const RunConfig& raw_config, const std::string& out_dir,
                  std::size_t workers) {
  RunConfig config = raw_config;
  finalize_run_config(config);
  fs::create_directories(out_dir);
  save_run_config(config, (fs::path(out_dir) / "config.resolved.json").string());

  json manifest;
  manifest["seed"] = config.seed;

  if (config.gen_data.triplets > 0) {
    const auto train =
        generate_triplets(config, config.gen_data.triplets, 0x74726970ULL, workers);
    const auto fp =
        datastore::write_triplets(train, (fs::path(out_dir) / "triplets_train.vprf").string());
    manifest["triplets_train"] = {{"file", "triplets_train.vprf"},
                                  {"count", train.size()},
                                  {"fingerprint", fp.hex()}};
  }
  if (config.gen_data.holdout_triplets > 0) {
    const auto holdout =
        generate_triplets(config, config.gen_data.holdout_triplets, 0x74687464ULL, workers);
    const auto fp = datastore::write_triplets(
        holdout, (fs::path(out_dir) / "triplets_holdout.vprf").string());
    manifest["triplets_holdout"] = {{"file", "triplets_holdout.vprf"},
                                    {"count", holdout.size()},
                                    {"fingerprint", fp.hex()}};
  }
  if (config.gen_data.episodes > 0) {
    const auto train =
        generate_episodes(config, config.gen_data.episodes, 0x65707472ULL, workers);
    const auto fp =
        datastore::write_episodes(train, (fs::path(out_dir) / "episodes_train.vprf").string());
    manifest["episodes_train"] = {{"file", "episodes_train.vprf"},
                                  {"count", train.size()},
                                  {"fingerprint", fp.hex()}};
  }
  if (config.gen_data.holdout_episodes > 0) {
    const auto holdout =
        generate_episodes(config, config.gen_data.holdout_episodes, 0x6570686fULL, workers);
    const auto fp = datastore::write_episodes(
        holdout, (fs::path(out_dir) / "episodes_holdout.vprf").string());
    manifest["episodes_holdout"] = {{"file", "episodes_holdout.vprf"},
                                    {"count", holdout.size()},
                                    {"fingerprint", fp.hex()}};
  }
  write_text((fs::path(out_dir) / kManifestName).string(), manifest.dump(2) + "\n");
}

void cmd_train_viewnet(const RunConfig& raw_config, const std::string& out_dir,
                       std::size_t workers) {
  RunConfig config = raw_config;
  finalize_run_config(config);
  const json manifest = read_manifest(out_dir);
  const std::string data_path = dataset_path(manifest, "triplets_train", out_dir);
  const auto records = datastore::read_triplets(data_path);
  const auto dataset = to_triplets(records);

  auto [params, history] = viewnet::train_viewnet(dataset, config.viewnet, workers);

  viewnet::save_viewnet((fs::path(out_dir) / "viewnet.ckpt").string(), params);

  std::string csv = "epoch,mean_loss,mean_mse,mean_chamfer\n";
  for (std::size_t e = 0; e < history.epoch_mean_loss.size(); ++e) {
    csv += std::to_string(e) + "," + fmt_double(history.epoch_mean_loss[e]) + "," +
           fmt_double(history.epoch_mean_mse[e]) + "," +
           fmt_double(history.epoch_mean_chamfer[e]) + "\n";
  }
  write_text((fs::path(out_dir) / "viewnet_metrics.csv").string(), csv);

  json sidecar;
  sidecar["dataset_fingerprint"] = manifest["triplets_train"]["fingerprint"];
  sidecar["final_loss"] = history.epoch_mean_loss.back();
  sidecar["epochs"] = config.viewnet.epochs;
  sidecar["batch_size"] = config.viewnet.batch_size;
  sidecar["learning_rate"] = config.viewnet.learning_rate;
  sidecar["encoder_widths"] = config.viewnet.encoder_widths;
  sidecar["head_widths"] = config.viewnet.head_widths;
  sidecar["input_points"] = config.viewnet.input_points;
  sidecar["seed"] = config.seed;
  write_text((fs::path(out_dir) / "viewnet.json").string(), sidecar.dump(2) + "\n");
}

std::vector<disentangle::ProcessedEpisode> load_processed_episodes(
    const std::string& path, const viewnet::ViewNetParams* align_with,
    const RunConfig& config) {
  const auto episodes = datastore::read_episodes(path);
  const preprocess::NormStats world_norm =
      preprocess::NormStats::from_box(config.world_bounds.min(), config.world_bounds.max());
  const auto process = [&](const PointCloud& cloud) {
    if (align_with) {
      // Aligned into world meters, then the fixed world-box normalization.
      return preprocess::apply_normalization(viewnet::align(*align_with, cloud), world_norm);
    }
    // Ablation path: per-cloud truncated min-max normalization, unaligned.
    return preprocess::truncated_minmax_normalize(cloud, config.pipeline.normalize.lo_percentile,
                                                  config.pipeline.normalize.hi_percentile)
        .first;
  };
  std::vector<disentangle::ProcessedEpisode> processed;
  processed.reserve(episodes.size());
  for (const auto& episode : episodes) {
    disentangle::ProcessedEpisode out;
    out.frames.reserve(episode.frames.size());
    for (const auto& frame : episode.frames) {
      disentangle::ProcessedFrame pf;
      pf.timestep = frame.timestep;
      pf.yaw_deg = frame.rand_yaw_deg;
      pf.ref = process(frame.ref_cloud);
      pf.rand = process(frame.rand_cloud);
      out.frames.push_back(std::move(pf));
    }
    processed.push_back(std::move(out));
  }
  return processed;
}

void cmd_train_encoder(const RunConfig& raw_config, const std::string& out_dir,
                       std::size_t workers, Ablation ablation) {
  RunConfig config = raw_config;
  finalize_run_config(config);
  const json manifest = read_manifest(out_dir);
  const std::string data_path = dataset_path(manifest, "episodes_train", out_dir);

  const bool use_viewnet = config.use_viewnet && ablation != Ablation::kNoViewNet;
  viewnet::ViewNetParams viewnet_params;
  if (use_viewnet) {
    const std::string ckpt = (fs::path(out_dir) / "viewnet.ckpt").string();
    if (!fs::exists(ckpt)) {
      throw Error(ErrorCode::kMissingArtifact, "run train-viewnet first: no checkpoint", ckpt);
    }
    viewnet_params = viewnet::load_viewnet(ckpt);
  }
  const auto dataset =
      load_processed_episodes(data_path, use_viewnet ? &viewnet_params : nullptr, config);

  disentangle::DisentangleConfig encoder_config = config.disentangle;
  if (ablation == Ablation::kNoDepOrth) encoder_config.beta_scale = 0.0;

  auto [params, metrics] = disentangle::train_disentangle(dataset, encoder_config, workers);

  const std::string suffix = ablation == Ablation::kNone         ? ""
                             : ablation == Ablation::kNoViewNet  ? ".no-viewnet"
                                                                 : ".no-dep-orth";
  disentangle::save_encoder((fs::path(out_dir) / ("encoder" + suffix + ".ckpt")).string(),
                            params);

  std::string csv = "step,L_inv,L_dep,L_orth,beta,total\n";
  for (const auto& m : metrics) {
    csv += std::to_string(m.step) + "," + fmt_double(m.l_inv) + "," + fmt_double(m.l_dep) +
           "," + fmt_double(m.l_orth) + "," + fmt_double(m.beta) + "," + fmt_double(m.total) +
           "\n";
  }
  write_text((fs::path(out_dir) / ("encoder_metrics" + suffix + ".csv")).string(), csv);

  json sidecar;
  sidecar["dataset_fingerprint"] = manifest["episodes_train"]["fingerprint"];
  sidecar["final_total"] = metrics.back().total;
  sidecar["final_l_inv"] = metrics.back().l_inv;
  sidecar["steps"] = config.disentangle.steps;
  sidecar["batch_size"] = config.disentangle.batch_size;
  sidecar["embedding_dim"] = config.disentangle.embedding_dim;
  sidecar["temperature"] = config.disentangle.temperature;
  sidecar["orth_weight"] = config.disentangle.orth_weight;
  sidecar["ramp_fraction"] = config.disentangle.ramp_fraction;
  sidecar["use_viewnet"] = use_viewnet;
  sidecar["ablation"] = suffix.empty() ? "none" : suffix.substr(1);
  sidecar["seed"] = config.seed;
  write_text((fs::path(out_dir) / ("encoder" + suffix + ".json")).string(),
             sidecar.dump(2) + "\n");
}

EvalReport cmd_eval(const RunConfig& raw_config, const std::string& out_dir,
                    Ablation ablation) {
  RunConfig config = raw_config;
  finalize_run_config(config);
  const json manifest = read_manifest(out_dir);

  const std::string suffix = ablation == Ablation::kNone         ? ""
                             : ablation == Ablation::kNoViewNet  ? ".no-viewnet"
                                                                 : ".no-dep-orth";
  const std::string encoder_path =
      (fs::path(out_dir) / ("encoder" + suffix + ".ckpt")).string();
  if (!fs::exists(encoder_path)) {
    throw Error(ErrorCode::kMissingArtifact, "run train-encoder first: no checkpoint",
                encoder_path);
  }
  const auto encoder = disentangle::load_encoder(encoder_path);

  const bool use_viewnet = config.use_viewnet && ablation != Ablation::kNoViewNet;
  viewnet::ViewNetParams viewnet_params;
  const std::string viewnet_path = (fs::path(out_dir) / "viewnet.ckpt").string();
  const bool have_viewnet = fs::exists(viewnet_path);
  if (use_viewnet) {
    if (!have_viewnet) {
      throw Error(ErrorCode::kMissingArtifact, "run train-viewnet first: no checkpoint",
                  viewnet_path);
    }
    viewnet_params = viewnet::load_viewnet(viewnet_path);
  }

  EvalReport report;

  const std::string holdout_path = dataset_path(manifest, "episodes_holdout", out_dir);
  const auto episodes =
      load_processed_episodes(holdout_path, use_viewnet ? &viewnet_params : nullptr, config);
  report.retrieval_top1 = disentangle::eval_retrieval(encoder, episodes);
  const auto probe = disentangle::eval_view_probe(encoder, episodes, config.eval.probe_bins,
                                                  config.camera.yaw_deg, config.seed);
  report.probe_dep = probe.acc_dep;
  report.probe_inv = probe.acc_inv;

  // Alignment ratio on held-out triplets, when both pieces exist.
  if (have_viewnet && manifest.contains("triplets_holdout")) {
    if (!use_viewnet) viewnet_params = viewnet::load_viewnet(viewnet_path);
    const auto records =
        datastore::read_triplets(dataset_path(manifest, "triplets_holdout", out_dir));
    std::vector<double> before, after;
    before.reserve(records.size());
    after.reserve(records.size());
    for (const auto& record : records) {
      before.push_back(
          geometry::chamfer_distance(record.triplet.p_org, record.triplet.p_ref));
      const PointCloud aligned = viewnet::align(viewnet_params, record.triplet.p_org);
      after.push_back(geometry::chamfer_distance(aligned, record.triplet.p_ref));
    }
    const auto median = [](std::vector<double> values) {
      std::sort(values.begin(), values.end());
      const std::size_t n = values.size();
      return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
    };
    report.alignment_ratio = median(after) / median(before);
    report.alignment_pass = report.alignment_ratio <= config.eval.alignment_ratio;
  }

  report.retrieval_pass = report.retrieval_top1 >= config.eval.retrieval_top1;
  report.probe_pass = (report.probe_dep - report.probe_inv) >= config.eval.probe_gap;

  json out;
  out["retrieval_top1"] = report.retrieval_top1;
  out["probe_dep"] = report.probe_dep;
  out["probe_inv"] = report.probe_inv;
  out["alignment_ratio"] = report.alignment_ratio;
  out["thresholds"] = {{"retrieval_top1", config.eval.retrieval_top1},
                       {"probe_gap", config.eval.probe_gap},
                       {"probe_bins", config.eval.probe_bins},
                       {"alignment_ratio", config.eval.alignment_ratio}};
  out["pass"] = {{"retrieval", report.retrieval_pass},
                 {"probe_gap", report.probe_pass},
                 {"alignment", report.alignment_pass}};
  out["ablation"] = suffix.empty() ? "none" : suffix.substr(1);
  write_text((fs::path(out_dir) / ("eval" + suffix + ".json")).string(), out.dump(2) + "\n");
  return report;
}

std::vector<BenchEntry> cmd_bench(const RunConfig& raw_config, const std::string& out_dir) {
  RunConfig config = raw_config;
  finalize_run_config(config);
  fs::create_directories(out_dir);

  const std::size_t env_count = std::max<std::size_t>(1, config.bench.env_count);
  const std::size_t cameras_per_env =
      std::max<std::size_t>(1, config.bench.jobs / env_count);

  // Job matrix: K randomized environments, M sampled cameras each.
  std::vector<synthscene::RenderJob> jobs;
  jobs.reserve(env_count * cameras_per_env);
  synthscene::CameraSamplingRange range = config.camera;
  range.reference.width = config.bench.width;
  range.reference.height = config.bench.height;
  range.reference.cx = (config.bench.width - 1) / 2.0;
  range.reference.cy = (config.bench.height - 1) / 2.0;
  for (std::size_t e = 0; e < env_count; ++e) {
    Rng rng(derive_seed(config.seed, 0x62656e63ULL, e));
    synthscene::Scene scene = synthscene::randomize_scene(config.scene, config.randomize, rng);
    for (std::size_t m = 0; m < cameras_per_env; ++m) {
      synthscene::RenderJob job;
      job.scene = scene;
      job.camera = synthscene::sample_camera(range, rng).camera;
      jobs.push_back(std::move(job));
    }
  }

  const std::size_t env_cap = default_worker_count();
  std::vector<BenchEntry> entries;
  json out;
  out["jobs"] = jobs.size();
  out["resolution"] = {config.bench.width, config.bench.height};
  out["env_count"] = env_count;
  out["cameras_per_env"] = cameras_per_env;
  out["hardware_workers"] = env_cap;
  out["runs"] = json::array();
  for (std::size_t workers : config.bench.workers) {
    const auto result = synthscene::render_batch(jobs, workers, env_count);
    BenchEntry entry;
    entry.workers = workers;
    entry.jobs = jobs.size();
    entry.total_fps = result.report.total_fps;
    entry.fps_env = result.report.fps_env;
    entry.seconds = result.report.seconds;
    entries.push_back(entry);

    // T = K x FPS_env must hold exactly by construction.
    const double identity =
        std::abs(result.report.total_fps -
                 static_cast<double>(env_count) * result.report.fps_env);
    json run;
    run["workers"] = workers;
    run["jobs"] = jobs.size();
    run["seconds"] = result.report.seconds;
    run["total_fps"] = result.report.total_fps;
    run["fps_env"] = result.report.fps_env;
    run["identity_ok"] = identity <= 1e-9 * std::max(1.0, result.report.total_fps);
    out["runs"].push_back(run);
  }
  write_text((fs::path(out_dir) / "bench.json").string(), out.dump(2) + "\n");
  return entries;
}

}  // namespace vidpoint::harness
