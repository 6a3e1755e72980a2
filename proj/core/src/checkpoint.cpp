#include "vidpoint/checkpoint.hpp"

#include <fstream>

#include "binio.hpp"

namespace vidpoint::nn {

namespace {
constexpr char kMagic[4] = {'V', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::vector<std::uint8_t> buffer;
  buffer.insert(buffer.end(), kMagic, kMagic + 4);
  binio::put_u32(buffer, kVersion);
  binio::put_u32(buffer, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& entry : tensors) {
    binio::put_string(buffer, entry.name);
    binio::put_u32(buffer, static_cast<std::uint32_t>(entry.tensor.rows));
    binio::put_u32(buffer, static_cast<std::uint32_t>(entry.tensor.cols));
  }
  for (const auto& entry : tensors) {
    for (double v : entry.tensor.data) binio::put_f32(buffer, static_cast<float>(v));
  }

  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) {
    throw Error(ErrorCode::kIoError, "cannot open for writing", path);
  }
  os.write(reinterpret_cast<const char*>(buffer.data()),
           static_cast<std::streamsize>(buffer.size()));
  if (!os) {
    throw Error(ErrorCode::kIoError, "write failed", path);
  }
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::kMissingArtifact, "cannot open checkpoint", path);
  }
  std::vector<std::uint8_t> buffer((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  binio::Reader reader{buffer.data(), buffer.size(), 0};

  if (reader.remaining() < 12) {
    throw Error(ErrorCode::kCorruptHeader, "checkpoint shorter than its header", path);
  }
  if (std::memcmp(buffer.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kCorruptHeader, "bad checkpoint magic", path);
  }
  reader.pos = 4;
  const std::uint32_t version = reader.get_u32();
  if (version != kVersion) {
    throw Error(ErrorCode::kUnsupportedVersion,
                "checkpoint version " + std::to_string(version) + " unsupported", path);
  }
  const std::uint32_t count = reader.get_u32();

  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    if (reader.remaining() < 4) {
      throw Error(ErrorCode::kCorruptTruncated, "manifest truncated", path);
    }
    const std::uint32_t name_len = reader.get_u32();
    if (reader.remaining() < name_len + 8) {
      throw Error(ErrorCode::kCorruptTruncated, "manifest truncated", path);
    }
    NamedTensor entry;
    entry.name = reader.get_string(name_len);
    const std::uint32_t rows = reader.get_u32();
    const std::uint32_t cols = reader.get_u32();
    entry.tensor = Tensor2(static_cast<int>(rows), static_cast<int>(cols));
    tensors.push_back(std::move(entry));
  }
  for (auto& entry : tensors) {
    const std::size_t need = entry.tensor.data.size() * 4;
    if (reader.remaining() < need) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "tensor data truncated: need " + std::to_string(need) + " bytes, have " +
                      std::to_string(reader.remaining()),
                  path);
    }
    for (double& v : entry.tensor.data) v = static_cast<double>(reader.get_f32());
  }
  return tensors;
}

}  // namespace vidpoint::nn
