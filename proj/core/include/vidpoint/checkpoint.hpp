#pragma once

#include <string>
#include <vector>

#include "vidpoint/nn.hpp"

namespace vidpoint::nn {

struct NamedTensor {
  std::string name;
  Tensor2 tensor;
};

/// Versioned binary checkpoint: magic "VPCK", a layer manifest (name,
/// rows, cols per tensor) and little-endian 32-bit float payloads in
/// manifest order. Loading a saved file reproduces the float32-rounded
/// values exactly.
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

}  // namespace vidpoint::nn
