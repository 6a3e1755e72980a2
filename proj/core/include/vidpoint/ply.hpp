#pragma once

#include <string>

#include "vidpoint/geometry.hpp"

namespace vidpoint::geometry {

enum class PlyFormat { kAscii, kBinaryLittleEndian };

/// Writes x/y/z as 32-bit floats plus one float property per channel
/// column (named c0, c1, ...). Debug interchange format.
void export_ply(const PointCloud& cloud, const std::string& path,
                PlyFormat format = PlyFormat::kAscii);

/// Reads the subset of PLY written by export_ply (ascii or
/// binary_little_endian vertices with float x/y/z and optional c* floats).
PointCloud import_ply(const std::string& path);

}  // namespace vidpoint::geometry
