#include "vidpoint/configio.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace vidpoint::harness {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::string& context,
                std::initializer_list<const char*> allowed) {
  if (!j.is_object()) {
    throw Error(ErrorCode::kInvalidArgument, "expected an object", context);
  }
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [key, value] : j.items()) {
    if (!ok.count(key)) {
      throw Error(ErrorCode::kInvalidArgument, "unknown key '" + key + "'", context);
    }
  }
}

json vec3_to_json(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

Eigen::Vector3d vec3_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorCode::kInvalidArgument, "expected a 3-array", context);
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json quat_to_json(const Eigen::Quaterniond& q) {
  return json::array({q.w(), q.x(), q.y(), q.z()});
}

Eigen::Quaterniond quat_from_json(const json& j, const std::string& context) {
  if (!j.is_array() || j.size() != 4) {
    throw Error(ErrorCode::kInvalidArgument, "expected a wxyz 4-array", context);
  }
  return Eigen::Quaterniond(j[0].get<double>(), j[1].get<double>(), j[2].get<double>(),
                            j[3].get<double>())
      .normalized();
}

const char* kind_name(synthscene::PrimitiveKind kind) {
  switch (kind) {
    case synthscene::PrimitiveKind::kSphere: return "sphere";
    case synthscene::PrimitiveKind::kBox: return "box";
    case synthscene::PrimitiveKind::kCylinder: return "cylinder";
  }
  return "sphere";
}

synthscene::PrimitiveKind kind_from_name(const std::string& name, const std::string& context) {
  if (name == "sphere") return synthscene::PrimitiveKind::kSphere;
  if (name == "box") return synthscene::PrimitiveKind::kBox;
  if (name == "cylinder") return synthscene::PrimitiveKind::kCylinder;
  throw Error(ErrorCode::kInvalidArgument, "unknown primitive kind '" + name + "'", context);
}

json primitive_to_json(const synthscene::Primitive& p) {
  json j;
  j["kind"] = kind_name(p.kind);
  j["id"] = p.id;
  j["position"] = vec3_to_json(p.position);
  j["rotation"] = quat_to_json(p.rotation);
  j["size"] = vec3_to_json(p.size);
  return j;
}

synthscene::Primitive primitive_from_json(const json& j, const std::string& context) {
  check_keys(j, context, {"kind", "id", "position", "rotation", "size"});
  synthscene::Primitive p;
  if (j.contains("kind")) p.kind = kind_from_name(j["kind"].get<std::string>(), context);
  if (j.contains("id")) p.id = j["id"].get<std::string>();
  if (j.contains("position")) p.position = vec3_from_json(j["position"], context);
  if (j.contains("rotation")) p.rotation = quat_from_json(j["rotation"], context);
  if (j.contains("size")) p.size = vec3_from_json(j["size"], context);
  return p;
}

json scene_to_json(const synthscene::Scene& scene) {
  json j;
  j["table"] = {{"normal", vec3_to_json(scene.table.normal)},
                {"offset", scene.table.offset},
                {"half_extent", scene.table.half_extent}};
  j["objects"] = json::array();
  for (const auto& object : scene.objects) j["objects"].push_back(primitive_to_json(object));
  if (scene.has_effector) j["effector"] = primitive_to_json(scene.effector);
  return j;
}

synthscene::Scene scene_from_json(const json& j, synthscene::Scene scene) {
  check_keys(j, "scene", {"table", "objects", "effector"});
  if (j.contains("table")) {
    check_keys(j["table"], "scene.table", {"normal", "offset", "half_extent"});
    if (j["table"].contains("normal")) {
      scene.table.normal = vec3_from_json(j["table"]["normal"], "scene.table.normal").normalized();
    }
    if (j["table"].contains("offset")) scene.table.offset = j["table"]["offset"].get<double>();
    if (j["table"].contains("half_extent")) {
      scene.table.half_extent = j["table"]["half_extent"].get<double>();
    }
  }
  if (j.contains("objects")) {
    scene.objects.clear();
    for (const auto& entry : j["objects"]) {
      scene.objects.push_back(primitive_from_json(entry, "scene.objects"));
    }
  }
  if (j.contains("effector")) {
    scene.effector = primitive_from_json(j["effector"], "scene.effector");
    scene.has_effector = true;
  }
  return scene;
}

json camera_to_json(const synthscene::CameraSamplingRange& range) {
  json j;
  j["reference"] = {{"position", vec3_to_json(range.reference.position)},
                    {"fx", range.reference.fx},
                    {"fy", range.reference.fy},
                    {"cx", range.reference.cx},
                    {"cy", range.reference.cy},
                    {"width", range.reference.width},
                    {"height", range.reference.height}};
  j["target"] = vec3_to_json(range.target);
  j["up"] = vec3_to_json(range.up);
  j["yaw_deg"] = range.yaw_deg;
  j["pitch_deg"] = range.pitch_deg;
  j["distance_scale"] = json::array({range.distance_scale[0], range.distance_scale[1]});
  return j;
}

synthscene::CameraSamplingRange camera_from_json(const json& j,
                                                 synthscene::CameraSamplingRange range) {
  check_keys(j, "camera",
             {"reference", "target", "up", "yaw_deg", "pitch_deg", "distance_scale"});
  Eigen::Vector3d position = range.reference.position;
  double fx = range.reference.fx, fy = range.reference.fy;
  double cx = range.reference.cx, cy = range.reference.cy;
  int width = range.reference.width, height = range.reference.height;
  if (j.contains("reference")) {
    const json& r = j["reference"];
    check_keys(r, "camera.reference", {"position", "fx", "fy", "cx", "cy", "width", "height"});
    if (r.contains("position")) position = vec3_from_json(r["position"], "camera.reference");
    if (r.contains("fx")) fx = r["fx"].get<double>();
    if (r.contains("fy")) fy = r["fy"].get<double>();
    if (r.contains("cx")) cx = r["cx"].get<double>();
    if (r.contains("cy")) cy = r["cy"].get<double>();
    if (r.contains("width")) width = r["width"].get<int>();
    if (r.contains("height")) height = r["height"].get<int>();
  }
  if (j.contains("target")) range.target = vec3_from_json(j["target"], "camera.target");
  if (j.contains("up")) range.up = vec3_from_json(j["up"], "camera.up").normalized();
  if (j.contains("yaw_deg")) range.yaw_deg = j["yaw_deg"].get<double>();
  if (j.contains("pitch_deg")) range.pitch_deg = j["pitch_deg"].get<double>();
  if (j.contains("distance_scale")) {
    const json& s = j["distance_scale"];
    if (!s.is_array() || s.size() != 2) {
      throw Error(ErrorCode::kInvalidArgument, "expected [lo, hi]", "camera.distance_scale");
    }
    range.distance_scale = {s[0].get<double>(), s[1].get<double>()};
  }
  range.reference = geometry::look_at_camera(position, range.target, range.up, fx, fy, cx, cy,
                                             width, height);
  return range;
}

json box_to_json(const Eigen::AlignedBox3d& box) {
  return {{"min", vec3_to_json(box.min())}, {"max", vec3_to_json(box.max())}};
}

Eigen::AlignedBox3d box_from_json(const json& j, const std::string& context) {
  check_keys(j, context, {"min", "max"});
  Eigen::AlignedBox3d box;
  box.min() = vec3_from_json(j.at("min"), context);
  box.max() = vec3_from_json(j.at("max"), context);
  return box;
}

template <typename T>
void maybe(const json& j, const char* key, T& value) {
  if (j.contains(key)) value = j[key].get<T>();
}

}  // namespace

RunConfig default_run_config() {
  RunConfig config;
  // Conservative camera-frame crop for the tabletop scene viewed from ~1m.
  config.pipeline.crop_bounds =
      Eigen::AlignedBox3d(Eigen::Vector3d(-0.8, -0.8, 0.2), Eigen::Vector3d(0.8, 0.8, 2.0));
  return config;
}

std::string run_config_to_json(const RunConfig& config) {
  json j;
  j["seed"] = config.seed;
  j["use_viewnet"] = config.use_viewnet;
  j["scene"] = scene_to_json(config.scene);
  j["randomize"] = {{"object_jitter", config.randomize.object_jitter},
                    {"effector_region", box_to_json(config.randomize.effector_region)}};
  j["camera"] = camera_to_json(config.camera);
  j["pipeline"] = {
      {"crop_bounds", box_to_json(config.pipeline.crop_bounds)},
      {"ransac",
       {{"distance_threshold", config.pipeline.ransac.distance_threshold},
        {"iterations", config.pipeline.ransac.iterations},
        {"min_inlier_fraction", config.pipeline.ransac.min_inlier_fraction}}},
      {"outlier",
       {{"k_neighbors", config.pipeline.outlier.k_neighbors},
        {"std_ratio", config.pipeline.outlier.std_ratio}}},
      {"normalize",
       {{"lo_percentile", config.pipeline.normalize.lo_percentile},
        {"hi_percentile", config.pipeline.normalize.hi_percentile}}},
      {"plane_removal_passes", config.pipeline.plane_removal_passes},
      {"target_points", config.pipeline.target_points}};
  j["augment"] = {{"enabled", config.augment_enabled},
                  {"rotation_range", vec3_to_json(config.augment.rotation_range)},
                  {"translation_range", vec3_to_json(config.augment.translation_range)},
                  {"scale_range",
                   json::array({config.augment.scale_range[0], config.augment.scale_range[1]})},
                  {"dropout_rate", config.augment.dropout_rate},
                  {"noise_sigma", config.augment.noise_sigma}};
  j["world_bounds"] = box_to_json(config.world_bounds);
  j["gen_data"] = {{"episodes", config.gen_data.episodes},
                   {"episode_length", config.gen_data.episode_length},
                   {"holdout_episodes", config.gen_data.holdout_episodes},
                   {"triplets", config.gen_data.triplets},
                   {"holdout_triplets", config.gen_data.holdout_triplets}};
  j["viewnet"] = {{"encoder_widths", config.viewnet.encoder_widths},
                  {"head_widths", config.viewnet.head_widths},
                  {"learning_rate", config.viewnet.learning_rate},
                  {"batch_size", config.viewnet.batch_size},
                  {"epochs", config.viewnet.epochs},
                  {"input_points", config.viewnet.input_points}};
  j["disentangle"] = {{"trunk_widths", config.disentangle.trunk_widths},
                      {"head_widths", config.disentangle.head_widths},
                      {"embedding_dim", config.disentangle.embedding_dim},
                      {"temperature", config.disentangle.temperature},
                      {"orth_weight", config.disentangle.orth_weight},
                      {"ramp_fraction", config.disentangle.ramp_fraction},
                      {"batch_size", config.disentangle.batch_size},
                      {"batch_episode_group", config.disentangle.batch_episode_group},
                      {"learning_rate", config.disentangle.learning_rate},
                      {"steps", config.disentangle.steps},
                      {"input_points", config.disentangle.input_points},
                      {"normalize_embeddings", config.disentangle.normalize_embeddings}};
  j["bench"] = {{"jobs", config.bench.jobs},
                {"workers", config.bench.workers},
                {"width", config.bench.width},
                {"height", config.bench.height},
                {"env_count", config.bench.env_count}};
  j["eval"] = {{"retrieval_top1", config.eval.retrieval_top1},
               {"probe_gap", config.eval.probe_gap},
               {"probe_bins", config.eval.probe_bins},
               {"alignment_ratio", config.eval.alignment_ratio}};
  return j.dump(2) + "\n";
}

void save_run_config(const RunConfig& config, const std::string& path) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) {
    throw Error(ErrorCode::kIoError, "cannot write config", path);
  }
  os << run_config_to_json(config);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open config", path);
  }
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config parse error: ") + e.what(),
                path);
  }

  RunConfig config = default_run_config();
  check_keys(j, "config",
             {"seed", "use_viewnet", "scene", "randomize", "camera", "pipeline", "augment",
              "world_bounds", "gen_data", "viewnet", "disentangle", "bench", "eval"});
  maybe(j, "seed", config.seed);
  maybe(j, "use_viewnet", config.use_viewnet);
  if (j.contains("scene")) config.scene = scene_from_json(j["scene"], config.scene);
  if (j.contains("randomize")) {
    check_keys(j["randomize"], "randomize", {"object_jitter", "effector_region"});
    maybe(j["randomize"], "object_jitter", config.randomize.object_jitter);
    if (j["randomize"].contains("effector_region")) {
      config.randomize.effector_region =
          box_from_json(j["randomize"]["effector_region"], "randomize.effector_region");
    }
  }
  if (j.contains("camera")) config.camera = camera_from_json(j["camera"], config.camera);
  if (j.contains("pipeline")) {
    const json& p = j["pipeline"];
    check_keys(p, "pipeline",
               {"crop_bounds", "ransac", "outlier", "normalize", "plane_removal_passes",
                "target_points"});
    if (p.contains("crop_bounds")) {
      config.pipeline.crop_bounds = box_from_json(p["crop_bounds"], "pipeline.crop_bounds");
    }
    if (p.contains("ransac")) {
      check_keys(p["ransac"], "pipeline.ransac",
                 {"distance_threshold", "iterations", "min_inlier_fraction"});
      maybe(p["ransac"], "distance_threshold", config.pipeline.ransac.distance_threshold);
      maybe(p["ransac"], "iterations", config.pipeline.ransac.iterations);
      maybe(p["ransac"], "min_inlier_fraction", config.pipeline.ransac.min_inlier_fraction);
    }
    if (p.contains("outlier")) {
      check_keys(p["outlier"], "pipeline.outlier", {"k_neighbors", "std_ratio"});
      maybe(p["outlier"], "k_neighbors", config.pipeline.outlier.k_neighbors);
      maybe(p["outlier"], "std_ratio", config.pipeline.outlier.std_ratio);
    }
    if (p.contains("normalize")) {
      check_keys(p["normalize"], "pipeline.normalize", {"lo_percentile", "hi_percentile"});
      maybe(p["normalize"], "lo_percentile", config.pipeline.normalize.lo_percentile);
      maybe(p["normalize"], "hi_percentile", config.pipeline.normalize.hi_percentile);
    }
    maybe(p, "plane_removal_passes", config.pipeline.plane_removal_passes);
    maybe(p, "target_points", config.pipeline.target_points);
  }
  if (j.contains("augment")) {
    const json& a = j["augment"];
    check_keys(a, "augment",
               {"enabled", "rotation_range", "translation_range", "scale_range", "dropout_rate",
                "noise_sigma"});
    maybe(a, "enabled", config.augment_enabled);
    if (a.contains("rotation_range")) {
      config.augment.rotation_range = vec3_from_json(a["rotation_range"], "augment");
    }
    if (a.contains("translation_range")) {
      config.augment.translation_range = vec3_from_json(a["translation_range"], "augment");
    }
    if (a.contains("scale_range")) {
      config.augment.scale_range = {a["scale_range"][0].get<double>(),
                                    a["scale_range"][1].get<double>()};
    }
    maybe(a, "dropout_rate", config.augment.dropout_rate);
    maybe(a, "noise_sigma", config.augment.noise_sigma);
  }
  if (j.contains("world_bounds")) {
    config.world_bounds = box_from_json(j["world_bounds"], "world_bounds");
  }
  if (j.contains("gen_data")) {
    const json& g = j["gen_data"];
    check_keys(g, "gen_data",
               {"episodes", "episode_length", "holdout_episodes", "triplets",
                "holdout_triplets"});
    maybe(g, "episodes", config.gen_data.episodes);
    maybe(g, "episode_length", config.gen_data.episode_length);
    maybe(g, "holdout_episodes", config.gen_data.holdout_episodes);
    maybe(g, "triplets", config.gen_data.triplets);
    maybe(g, "holdout_triplets", config.gen_data.holdout_triplets);
  }
  if (j.contains("viewnet")) {
    const json& v = j["viewnet"];
    check_keys(v, "viewnet",
               {"encoder_widths", "head_widths", "learning_rate", "batch_size", "epochs",
                "input_points"});
    maybe(v, "encoder_widths", config.viewnet.encoder_widths);
    maybe(v, "head_widths", config.viewnet.head_widths);
    maybe(v, "learning_rate", config.viewnet.learning_rate);
    maybe(v, "batch_size", config.viewnet.batch_size);
    maybe(v, "epochs", config.viewnet.epochs);
    maybe(v, "input_points", config.viewnet.input_points);
  }
  if (j.contains("disentangle")) {
    const json& d = j["disentangle"];
    check_keys(d, "disentangle",
               {"trunk_widths", "head_widths", "embedding_dim", "temperature", "orth_weight",
                "ramp_fraction", "batch_size", "batch_episode_group", "learning_rate", "steps",
                "input_points", "normalize_embeddings"});
    maybe(d, "trunk_widths", config.disentangle.trunk_widths);
    maybe(d, "head_widths", config.disentangle.head_widths);
    maybe(d, "embedding_dim", config.disentangle.embedding_dim);
    maybe(d, "temperature", config.disentangle.temperature);
    maybe(d, "orth_weight", config.disentangle.orth_weight);
    maybe(d, "ramp_fraction", config.disentangle.ramp_fraction);
    maybe(d, "batch_size", config.disentangle.batch_size);
    maybe(d, "batch_episode_group", config.disentangle.batch_episode_group);
    maybe(d, "learning_rate", config.disentangle.learning_rate);
    maybe(d, "steps", config.disentangle.steps);
    maybe(d, "input_points", config.disentangle.input_points);
    maybe(d, "normalize_embeddings", config.disentangle.normalize_embeddings);
  }
  if (j.contains("bench")) {
    const json& b = j["bench"];
    check_keys(b, "bench", {"jobs", "workers", "width", "height", "env_count"});
    maybe(b, "jobs", config.bench.jobs);
    maybe(b, "workers", config.bench.workers);
    maybe(b, "width", config.bench.width);
    maybe(b, "height", config.bench.height);
    maybe(b, "env_count", config.bench.env_count);
  }
  if (j.contains("eval")) {
    const json& e = j["eval"];
    check_keys(e, "eval", {"retrieval_top1", "probe_gap", "probe_bins", "alignment_ratio"});
    maybe(e, "retrieval_top1", config.eval.retrieval_top1);
    maybe(e, "probe_gap", config.eval.probe_gap);
    maybe(e, "probe_bins", config.eval.probe_bins);
    maybe(e, "alignment_ratio", config.eval.alignment_ratio);
  }

  finalize_run_config(config);
  return config;
}

void finalize_run_config(RunConfig& config) {
  // The encoder consumes pipeline output; keep the point counts coherent.
  config.viewnet.input_points = static_cast<int>(config.pipeline.target_points);
  config.disentangle.input_points = static_cast<int>(config.pipeline.target_points);
  config.viewnet.seed = config.seed;
  config.disentangle.seed = config.seed;
  config.pipeline.seed = config.seed;
  config.augment.seed = config.seed;
}

}  // namespace vidpoint::harness
