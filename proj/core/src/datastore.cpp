#include "vidpoint/datastore.hpp"

#include <fstream>

#include "binio.hpp"

namespace vidpoint::datastore {

using binio::Reader;
using geometry::CameraModel;
using geometry::PointCloud;
using synthscene::Episode;
using synthscene::EpisodeFrame;
using synthscene::Primitive;
using synthscene::Scene;

namespace {

constexpr char kMagic[4] = {'V', 'P', 'R', 'F'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint32_t kKindEpisodes = 1;
constexpr std::uint32_t kKindTriplets = 2;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 + 8 + 4 + 4 + 8;
constexpr std::size_t kFooterBytes = 8;

void put_cloud(std::vector<std::uint8_t>& out, const PointCloud& cloud) {
  binio::put_u32(out, static_cast<std::uint32_t>(cloud.size()));
  binio::put_u32(out, static_cast<std::uint32_t>(cloud.channel_count()));
  out.push_back(static_cast<std::uint8_t>(cloud.frame_tag));
  for (const auto& p : cloud.points) {
    binio::put_f32(out, static_cast<float>(p.x()));
    binio::put_f32(out, static_cast<float>(p.y()));
    binio::put_f32(out, static_cast<float>(p.z()));
  }
  for (Eigen::Index r = 0; r < cloud.channels.rows(); ++r) {
    for (Eigen::Index c = 0; c < cloud.channels.cols(); ++c) {
      binio::put_f32(out, static_cast<float>(cloud.channels(r, c)));
    }
  }
}

PointCloud get_cloud(Reader& reader, const std::string& path) {
  if (reader.remaining() < 9) {
    throw Error(ErrorCode::kCorruptTruncated, "cloud header truncated", path);
  }
  const std::uint32_t k = reader.get_u32();
  const std::uint32_t c = reader.get_u32();
  const std::uint8_t tag = reader.data[reader.pos++];
  const std::size_t need = static_cast<std::size_t>(k) * (3 + c) * 4;
  if (reader.remaining() < need) {
    throw Error(ErrorCode::kCorruptTruncated,
                "cloud data needs " + std::to_string(need) + " bytes, " +
                    std::to_string(reader.remaining()) + " remain",
                path);
  }
  PointCloud cloud;
  cloud.frame_tag = static_cast<geometry::FrameTag>(tag);
  cloud.points.reserve(k);
  for (std::uint32_t i = 0; i < k; ++i) {
    const double x = reader.get_f32();
    const double y = reader.get_f32();
    const double z = reader.get_f32();
    cloud.points.emplace_back(x, y, z);
  }
  if (c > 0) {
    cloud.channels.resize(k, c);
    for (std::uint32_t r = 0; r < k; ++r) {
      for (std::uint32_t col = 0; col < c; ++col) {
        cloud.channels(r, col) = reader.get_f32();
      }
    }
  }
  return cloud;
}

void put_quat(std::vector<std::uint8_t>& out, const Eigen::Quaterniond& q) {
  binio::put_f32(out, static_cast<float>(q.w()));
  binio::put_f32(out, static_cast<float>(q.x()));
  binio::put_f32(out, static_cast<float>(q.y()));
  binio::put_f32(out, static_cast<float>(q.z()));
}

Eigen::Quaterniond get_quat(Reader& reader) {
  const double w = reader.get_f32();
  const double x = reader.get_f32();
  const double y = reader.get_f32();
  const double z = reader.get_f32();
  return Eigen::Quaterniond(w, x, y, z).normalized();
}

void put_vec3(std::vector<std::uint8_t>& out, const Eigen::Vector3d& v) {
  binio::put_f32(out, static_cast<float>(v.x()));
  binio::put_f32(out, static_cast<float>(v.y()));
  binio::put_f32(out, static_cast<float>(v.z()));
}

Eigen::Vector3d get_vec3(Reader& reader) {
  const double x = reader.get_f32();
  const double y = reader.get_f32();
  const double z = reader.get_f32();
  return {x, y, z};
}

void put_camera(std::vector<std::uint8_t>& out, const CameraModel& cam) {
  binio::put_f32(out, static_cast<float>(cam.fx));
  binio::put_f32(out, static_cast<float>(cam.fy));
  binio::put_f32(out, static_cast<float>(cam.cx));
  binio::put_f32(out, static_cast<float>(cam.cy));
  binio::put_u32(out, static_cast<std::uint32_t>(cam.width));
  binio::put_u32(out, static_cast<std::uint32_t>(cam.height));
  put_quat(out, cam.rotation);
  put_vec3(out, cam.position);
}

CameraModel get_camera(Reader& reader, const std::string& path) {
  if (reader.remaining() < 4 * 4 + 8 + 16 + 12) {
    throw Error(ErrorCode::kCorruptTruncated, "camera record truncated", path);
  }
  CameraModel cam;
  cam.fx = reader.get_f32();
  cam.fy = reader.get_f32();
  cam.cx = reader.get_f32();
  cam.cy = reader.get_f32();
  cam.width = static_cast<int>(reader.get_u32());
  cam.height = static_cast<int>(reader.get_u32());
  cam.rotation = get_quat(reader);
  cam.position = get_vec3(reader);
  return cam;
}

void put_primitive(std::vector<std::uint8_t>& out, const Primitive& primitive) {
  out.push_back(static_cast<std::uint8_t>(primitive.kind));
  binio::put_string(out, primitive.id);
  put_quat(out, primitive.rotation);
  put_vec3(out, primitive.position);
  put_vec3(out, primitive.size);
}

Primitive get_primitive(Reader& reader, const std::string& path) {
  if (reader.remaining() < 5) {
    throw Error(ErrorCode::kCorruptTruncated, "primitive record truncated", path);
  }
  Primitive primitive;
  primitive.kind = static_cast<synthscene::PrimitiveKind>(reader.data[reader.pos++]);
  const std::uint32_t len = reader.get_u32();
  if (reader.remaining() < len + 16 + 12 + 12) {
    throw Error(ErrorCode::kCorruptTruncated, "primitive record truncated", path);
  }
  primitive.id = reader.get_string(len);
  primitive.rotation = get_quat(reader);
  primitive.position = get_vec3(reader);
  primitive.size = get_vec3(reader);
  return primitive;
}

void put_scene(std::vector<std::uint8_t>& out, const Scene& scene) {
  put_vec3(out, scene.table.normal);
  binio::put_f32(out, static_cast<float>(scene.table.offset));
  binio::put_f32(out, static_cast<float>(scene.table.half_extent));
  binio::put_u32(out, static_cast<std::uint32_t>(scene.objects.size()));
  for (const auto& object : scene.objects) put_primitive(out, object);
  out.push_back(scene.has_effector ? 1 : 0);
  if (scene.has_effector) put_primitive(out, scene.effector);
}

Scene get_scene(Reader& reader, const std::string& path) {
  if (reader.remaining() < 12 + 8 + 4) {
    throw Error(ErrorCode::kCorruptTruncated, "scene record truncated", path);
  }
  Scene scene;
  scene.table.normal = get_vec3(reader).normalized();
  scene.table.offset = reader.get_f32();
  scene.table.half_extent = reader.get_f32();
  const std::uint32_t objects = reader.get_u32();
  for (std::uint32_t i = 0; i < objects; ++i) {
    scene.objects.push_back(get_primitive(reader, path));
  }
  if (reader.remaining() < 1) {
    throw Error(ErrorCode::kCorruptTruncated, "scene record truncated", path);
  }
  scene.has_effector = reader.data[reader.pos++] != 0;
  if (scene.has_effector) scene.effector = get_primitive(reader, path);
  return scene;
}

std::vector<std::uint8_t> encode_episode(const Episode& episode) {
  std::vector<std::uint8_t> out;
  binio::put_u64(out, episode.seed);
  binio::put_string(out, episode.target_object_id);
  // The static scene is stored once; per-frame snapshots add only the
  // effector pose, which is the part an episode animates.
  const Scene& base = episode.frames.empty() ? Scene{} : episode.frames.front().scene;
  put_scene(out, base);
  put_camera(out, episode.ref_camera);
  binio::put_u32(out, static_cast<std::uint32_t>(episode.frames.size()));
  for (const auto& frame : episode.frames) {
    binio::put_u32(out, static_cast<std::uint32_t>(frame.timestep));
    put_quat(out, frame.scene.effector.rotation);
    put_vec3(out, frame.scene.effector.position);
    put_camera(out, frame.rand_camera);
    binio::put_f32(out, static_cast<float>(frame.rand_yaw_deg));
    binio::put_f32(out, static_cast<float>(frame.rand_pitch_deg));
    binio::put_f32(out, static_cast<float>(frame.rand_distance_scale));
    put_cloud(out, frame.ref_cloud);
    put_cloud(out, frame.rand_cloud);
  }
  return out;
}

Episode decode_episode(Reader& reader, const std::string& path) {
  if (reader.remaining() < 8) {
    throw Error(ErrorCode::kCorruptTruncated, "episode record truncated", path);
  }
  Episode episode;
  episode.seed = reader.get_u64();
  if (reader.remaining() < 4) {
    throw Error(ErrorCode::kCorruptTruncated, "episode record truncated", path);
  }
  const std::uint32_t target_len = reader.get_u32();
  if (reader.remaining() < target_len) {
    throw Error(ErrorCode::kCorruptTruncated, "episode record truncated", path);
  }
  episode.target_object_id = reader.get_string(target_len);
  const Scene base = get_scene(reader, path);
  episode.ref_camera = get_camera(reader, path);
  if (reader.remaining() < 4) {
    throw Error(ErrorCode::kCorruptTruncated, "episode record truncated", path);
  }
  const std::uint32_t frames = reader.get_u32();
  episode.frames.reserve(frames);
  for (std::uint32_t i = 0; i < frames; ++i) {
    if (reader.remaining() < 4 + 16 + 12) {
      throw Error(ErrorCode::kCorruptTruncated, "episode frame truncated", path);
    }
    EpisodeFrame frame;
    frame.timestep = static_cast<int>(reader.get_u32());
    frame.scene = base;
    frame.scene.effector.rotation = get_quat(reader);
    frame.scene.effector.position = get_vec3(reader);
    frame.rand_camera = get_camera(reader, path);
    if (reader.remaining() < 12) {
      throw Error(ErrorCode::kCorruptTruncated, "episode frame truncated", path);
    }
    frame.rand_yaw_deg = reader.get_f32();
    frame.rand_pitch_deg = reader.get_f32();
    frame.rand_distance_scale = reader.get_f32();
    frame.ref_cloud = get_cloud(reader, path);
    frame.rand_cloud = get_cloud(reader, path);
    episode.frames.push_back(std::move(frame));
  }
  return episode;
}

std::vector<std::uint8_t> encode_triplet(const TripletRecord& record) {
  std::vector<std::uint8_t> out;
  put_camera(out, record.rand_camera);
  binio::put_f32(out, static_cast<float>(record.yaw_deg));
  binio::put_f32(out, static_cast<float>(record.pitch_deg));
  binio::put_f32(out, static_cast<float>(record.distance_scale));
  put_vec3(out, record.org_norm.lo);
  put_vec3(out, record.org_norm.hi);
  std::uint8_t flags = 0;
  for (int a = 0; a < 3; ++a) {
    if (record.org_norm.degenerate[static_cast<std::size_t>(a)]) {
      flags = static_cast<std::uint8_t>(flags | (1u << a));
    }
  }
  out.push_back(flags);
  put_cloud(out, record.triplet.p_org);
  put_cloud(out, record.triplet.p_world);
  put_cloud(out, record.triplet.p_ref);
  return out;
}

TripletRecord decode_triplet(Reader& reader, const std::string& path) {
  TripletRecord record;
  record.rand_camera = get_camera(reader, path);
  if (reader.remaining() < 12 + 24 + 1) {
    throw Error(ErrorCode::kCorruptTruncated, "triplet record truncated", path);
  }
  record.yaw_deg = reader.get_f32();
  record.pitch_deg = reader.get_f32();
  record.distance_scale = reader.get_f32();
  record.org_norm.lo = get_vec3(reader);
  record.org_norm.hi = get_vec3(reader);
  const std::uint8_t flags = reader.data[reader.pos++];
  for (int a = 0; a < 3; ++a) {
    record.org_norm.degenerate[static_cast<std::size_t>(a)] = (flags >> a) & 1u;
  }
  record.triplet.p_org = get_cloud(reader, path);
  record.triplet.p_world = get_cloud(reader, path);
  record.triplet.p_ref = get_cloud(reader, path);
  return record;
}

Fingerprint write_record_file(const std::string& path, std::uint32_t kind,
                              const std::vector<std::vector<std::uint8_t>>& records,
                              std::uint32_t point_count, std::uint32_t channel_count) {
  std::vector<std::uint8_t> body;
  for (const auto& record : records) {
    binio::put_u64(body, record.size());
    body.insert(body.end(), record.begin(), record.end());
  }
  const std::uint64_t hash = binio::fnv1a(body.data(), body.size());

  std::vector<std::uint8_t> file;
  file.reserve(kHeaderBytes + body.size() + kFooterBytes);
  file.insert(file.end(), kMagic, kMagic + 4);
  binio::put_u32(file, kVersion);
  binio::put_u32(file, kind);
  binio::put_u64(file, records.size());
  binio::put_u32(file, point_count);
  binio::put_u32(file, channel_count);
  binio::put_u64(file, body.size());
  file.insert(file.end(), body.begin(), body.end());
  binio::put_u64(file, hash);

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw Error(ErrorCode::kIoError, "cannot open for writing", path);
  }
  os.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!os) {
    throw Error(ErrorCode::kIoError, "write failed", path);
  }
  return Fingerprint{hash};
}

struct ParsedFile {
  std::vector<std::uint8_t> bytes;
  std::uint64_t record_count = 0;
  std::size_t body_begin = 0;
  std::size_t body_size = 0;
};

ParsedFile open_record_file(const std::string& path, std::uint32_t expected_kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open record file", path);
  }
  ParsedFile parsed;
  parsed.bytes.assign((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

  if (parsed.bytes.size() < kHeaderBytes) {
    throw Error(ErrorCode::kCorruptHeader,
                "file has " + std::to_string(parsed.bytes.size()) + " bytes, header needs " +
                    std::to_string(kHeaderBytes),
                path);
  }
  if (std::memcmp(parsed.bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kCorruptHeader, "bad magic", path);
  }
  Reader reader{parsed.bytes.data(), parsed.bytes.size(), 4};
  const std::uint32_t version = reader.get_u32();
  if (version != kVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "record file version " + std::to_string(version) + " unsupported", path);
  }
  const std::uint32_t kind = reader.get_u32();
  if (kind != expected_kind) {
    throw Error(ErrorCode::kInvalidArgument,
                "record kind " + std::to_string(kind) + " does not match expected " +
                    std::to_string(expected_kind),
                path);
  }
  parsed.record_count = reader.get_u64();
  reader.get_u32();  // point_count (informational)
  reader.get_u32();  // channel_count (informational)
  parsed.body_size = reader.get_u64();
  parsed.body_begin = reader.pos;

  const std::size_t expected_total = kHeaderBytes + parsed.body_size + kFooterBytes;
  if (parsed.bytes.size() != expected_total) {
    throw Error(ErrorCode::kCorruptTruncated,
                "expected " + std::to_string(expected_total) + " bytes, file has " +
                    std::to_string(parsed.bytes.size()),
                path);
  }
  const std::uint64_t stored_hash =
      Reader{parsed.bytes.data(), parsed.bytes.size(), parsed.body_begin + parsed.body_size}
          .get_u64();
  const std::uint64_t actual_hash =
      binio::fnv1a(parsed.bytes.data() + parsed.body_begin, parsed.body_size);
  if (stored_hash != actual_hash) {
    throw Error(ErrorCode::kCorruptHash, "body hash mismatch", path);
  }
  return parsed;
}

}  // namespace

std::string Fingerprint::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

Fingerprint write_episodes(const std::vector<Episode>& episodes, const std::string& path) {
  std::vector<std::vector<std::uint8_t>> records;
  records.reserve(episodes.size());
  std::uint32_t point_count = 0, channel_count = 0;
  for (const auto& episode : episodes) {
    synthscene::validate(episode);
    if (!episode.frames.empty()) {
      point_count = static_cast<std::uint32_t>(episode.frames.front().ref_cloud.size());
      channel_count =
          static_cast<std::uint32_t>(episode.frames.front().ref_cloud.channel_count());
    }
    records.push_back(encode_episode(episode));
  }
  return write_record_file(path, kKindEpisodes, records, point_count, channel_count);
}

std::vector<Episode> read_episodes(const std::string& path) {
  ParsedFile parsed = open_record_file(path, kKindEpisodes);
  Reader reader{parsed.bytes.data(), parsed.body_begin + parsed.body_size, parsed.body_begin};
  std::vector<Episode> episodes;
  episodes.reserve(parsed.record_count);
  for (std::uint64_t i = 0; i < parsed.record_count; ++i) {
    if (reader.remaining() < 8) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "record " + std::to_string(i) + " length prefix missing", path);
    }
    const std::uint64_t length = reader.get_u64();
    if (reader.remaining() < length) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "record " + std::to_string(i) + " wants " + std::to_string(length) +
                      " bytes, " + std::to_string(reader.remaining()) + " remain",
                  path);
    }
    Reader record{reader.data, reader.pos + length, reader.pos};
    episodes.push_back(decode_episode(record, path));
    reader.pos += length;
  }
  return episodes;
}

Fingerprint write_triplets(const std::vector<TripletRecord>& triplets,
                           const std::string& path) {
  std::vector<std::vector<std::uint8_t>> records;
  records.reserve(triplets.size());
  std::uint32_t point_count = 0;
  for (const auto& record : triplets) {
    point_count = static_cast<std::uint32_t>(record.triplet.p_org.size());
    records.push_back(encode_triplet(record));
  }
  return write_record_file(path, kKindTriplets, records, point_count, 0);
}

std::vector<TripletRecord> read_triplets(const std::string& path) {
  ParsedFile parsed = open_record_file(path, kKindTriplets);
  Reader reader{parsed.bytes.data(), parsed.body_begin + parsed.body_size, parsed.body_begin};
  std::vector<TripletRecord> triplets;
  triplets.reserve(parsed.record_count);
  for (std::uint64_t i = 0; i < parsed.record_count; ++i) {
    if (reader.remaining() < 8) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "record " + std::to_string(i) + " length prefix missing", path);
    }
    const std::uint64_t length = reader.get_u64();
    if (reader.remaining() < length) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "record " + std::to_string(i) + " wants " + std::to_string(length) +
                      " bytes, " + std::to_string(reader.remaining()) + " remain",
                  path);
    }
    Reader record{reader.data, reader.pos + length, reader.pos};
    triplets.push_back(decode_triplet(record, path));
    reader.pos += length;
  }
  return triplets;
}

}  // namespace vidpoint::datastore
