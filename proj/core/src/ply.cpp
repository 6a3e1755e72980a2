#include "vidpoint/ply.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace vidpoint::geometry {

namespace {

void write_f32(std::ostream& os, float v) {
  char buf[4];
  std::memcpy(buf, &v, 4);
  os.write(buf, 4);
}

float read_f32(std::istream& is) {
  char buf[4];
  is.read(buf, 4);
  float v;
  std::memcpy(&v, buf, 4);
  return v;
}

}  // namespace

void export_ply(const PointCloud& cloud, const std::string& path, PlyFormat format) {
  validate(cloud);
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw Error(ErrorCode::kIoError, "cannot open for writing", path);
  }
  const std::size_t channels = cloud.channel_count();
  os << "ply\n";
  os << "format "
     << (format == PlyFormat::kAscii ? "ascii" : "binary_little_endian") << " 1.0\n";
  os << "element vertex " << cloud.size() << "\n";
  os << "property float x\nproperty float y\nproperty float z\n";
  for (std::size_t c = 0; c < channels; ++c) {
    os << "property float c" << c << "\n";
  }
  os << "end_header\n";

  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (format == PlyFormat::kAscii) {
      os << static_cast<float>(p.x()) << " " << static_cast<float>(p.y()) << " "
         << static_cast<float>(p.z());
      for (std::size_t c = 0; c < channels; ++c) {
        os << " " << static_cast<float>(cloud.channels(static_cast<Eigen::Index>(i),
                                                       static_cast<Eigen::Index>(c)));
      }
      os << "\n";
    } else {
      write_f32(os, static_cast<float>(p.x()));
      write_f32(os, static_cast<float>(p.y()));
      write_f32(os, static_cast<float>(p.z()));
      for (std::size_t c = 0; c < channels; ++c) {
        write_f32(os, static_cast<float>(cloud.channels(static_cast<Eigen::Index>(i),
                                                        static_cast<Eigen::Index>(c))));
      }
    }
  }
  if (!os) {
    throw Error(ErrorCode::kIoError, "write failed", path);
  }
}

PointCloud import_ply(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw Error(ErrorCode::kIoError, "cannot open for reading", path);
  }
  std::string line;
  std::getline(is, line);
  if (line != "ply" && line != "ply\r") {
    throw Error(ErrorCode::kCorruptHeader, "missing ply magic", path);
  }
  bool binary = false;
  std::size_t vertex_count = 0;
  std::vector<std::string> properties;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "binary_little_endian") {
        binary = true;
      } else if (fmt != "ascii") {
        throw Error(ErrorCode::kUnsupportedVersion, "unsupported ply format " + fmt, path);
      }
    } else if (tok == "element") {
      std::string name;
      ls >> name >> vertex_count;
      if (name != "vertex") {
        throw Error(ErrorCode::kUnsupportedVersion, "unsupported ply element " + name, path);
      }
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (type != "float") {
        throw Error(ErrorCode::kUnsupportedVersion, "unsupported property type " + type, path);
      }
      properties.push_back(name);
    } else if (tok == "end_header") {
      break;
    }
  }
  if (properties.size() < 3 || properties[0] != "x" || properties[1] != "y" ||
      properties[2] != "z") {
    throw Error(ErrorCode::kCorruptHeader, "expected x y z as leading properties", path);
  }
  const std::size_t channels = properties.size() - 3;

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  if (channels > 0) {
    cloud.channels.resize(static_cast<Eigen::Index>(vertex_count),
                          static_cast<Eigen::Index>(channels));
  }
  for (std::size_t i = 0; i < vertex_count; ++i) {
    float vals[3];
    if (binary) {
      for (float& v : vals) v = read_f32(is);
      for (std::size_t c = 0; c < channels; ++c) {
        cloud.channels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = read_f32(is);
      }
    } else {
      for (float& v : vals) is >> v;
      for (std::size_t c = 0; c < channels; ++c) {
        float v;
        is >> v;
        cloud.channels(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = v;
      }
    }
    if (!is) {
      throw Error(ErrorCode::kCorruptTruncated,
                  "vertex data ends at " + std::to_string(i) + " of " +
                      std::to_string(vertex_count) + " vertices",
                  path);
    }
    cloud.points.emplace_back(vals[0], vals[1], vals[2]);
  }
  return cloud;
}

}  // namespace vidpoint::geometry
