#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidpoint/preprocess.hpp"
#include "vidpoint/synthscene.hpp"

namespace vidpoint::datastore {

/// FNV-1a 64 content hash of a record file's body; doubles as the dataset
/// fingerprint (fixed endianness and field order keep it platform-stable).
struct Fingerprint {
  std::uint64_t hash = 0;
  std::string hex() const;
};

/// One persisted ViewNet training triplet plus the sampling metadata and
/// the per-cloud normalization of p_org.
struct TripletRecord {
  synthscene::Triplet triplet;
  geometry::CameraModel rand_camera;
  double yaw_deg = 0.0;
  double pitch_deg = 0.0;
  double distance_scale = 1.0;
  preprocess::NormStats org_norm;
};

/// Record files: "VPRF" magic, version, record kind, counts and body size
/// in the header; length-prefixed records; FNV-1a body hash as footer.
/// All floats are little-endian 32-bit. The layout is documented
/// field-by-field in docs/record_format.md.
Fingerprint write_episodes(const std::vector<synthscene::Episode>& episodes,
                           const std::string& path);
std::vector<synthscene::Episode> read_episodes(const std::string& path);

Fingerprint write_triplets(const std::vector<TripletRecord>& triplets,
                           const std::string& path);
std::vector<TripletRecord> read_triplets(const std::string& path);

}  // namespace vidpoint::datastore
