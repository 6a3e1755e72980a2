#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vidpoint/error.hpp"
#include "vidpoint/rng.hpp"

namespace vidpoint::nn {

/// Row-major 64-bit dense matrix. Training math stays in doubles; storage
/// formats downcast to 32-bit floats.
struct Tensor2 {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor2() = default;
  Tensor2(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {}

  static Tensor2 zeros(int r, int c) { return Tensor2(r, c); }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
  std::size_t size() const { return data.size(); }

  std::span<double> flat() { return {data.data(), data.size()}; }
  std::span<const double> flat() const { return {data.data(), data.size()}; }
};

enum class Activation : std::uint8_t { kNone = 0, kRelu = 1, kTanh = 2 };

struct DenseLayer {
  Tensor2 weights;            // out x in
  std::vector<double> bias;   // out
  Activation activation = Activation::kNone;

  int in_dim() const { return weights.cols; }
  int out_dim() const { return weights.rows; }
};

DenseLayer make_dense(int in_dim, int out_dim, Activation activation);

/// Seeded uniform fan-in (He-style) weight init; biases start at zero.
void he_initialize(DenseLayer& layer, Rng& rng);

/// activation(x W^T + b) applied row-wise; x is N x in, result N x out.
Tensor2 dense_forward(const DenseLayer& layer, const Tensor2& x);

struct DenseGradients {
  Tensor2 input;             // N x in
  Tensor2 weights;           // out x in
  std::vector<double> bias;  // out
};

/// Exact reverse-mode gradients of dense_forward; `upstream` is dL/dy.
DenseGradients dense_backward(const DenseLayer& layer, const Tensor2& x,
                              const Tensor2& upstream);

/// Column-wise max over point rows with the attaining row per column
/// (lowest row wins ties).
struct MaxPoolResult {
  std::vector<double> values;
  std::vector<int> argmax_rows;
};
MaxPoolResult maxpool_points(const Tensor2& per_point_features);

/// Routes upstream gradients back through the argmax rows only.
Tensor2 maxpool_backward(const MaxPoolResult& pooled, int rows,
                         std::span<const double> upstream);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected adaptive-moment optimizer over an ordered parameter
/// list. Moment buffers are keyed by position, so callers must pass the
/// same parameter order every step.
class AdamState {
 public:
  explicit AdamState(AdamConfig config = {}) : config_(config) {}

  void step(std::span<const std::span<double>> params,
            std::span<const std::span<const double>> grads);

  std::int64_t steps_taken() const { return step_; }
  const AdamConfig& config() const { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }

 private:
  AdamConfig config_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Gradient of one dense layer's parameters.
struct LayerGrad {
  Tensor2 weights;
  std::vector<double> bias;
};

LayerGrad zero_like(const DenseLayer& layer);

/// Activation cache for a dense stack; activations[0] is the input and
/// activations[i+1] the output of layer i.
struct DenseStackTrace {
  std::vector<Tensor2> activations;
};

Tensor2 dense_stack_forward(const std::vector<DenseLayer>& layers, const Tensor2& x,
                            DenseStackTrace* trace);

/// Reverse pass over a stack; accumulates parameter gradients into `grads`
/// (which must be zero_like-shaped) and returns dL/dinput.
Tensor2 dense_stack_backward(const std::vector<DenseLayer>& layers,
                             const DenseStackTrace& trace, const Tensor2& upstream,
                             std::vector<LayerGrad>* grads);

struct FiniteDiffReport {
  double max_rel_err = 0.0;
  std::size_t coords_checked = 0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Central differences on a seeded random subset of coordinates (at least
/// min_coords, or every coordinate when fewer exist) against the supplied
/// analytic gradient. loss must be deterministic in the parameters.
FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   double h, double tolerance, std::uint64_t seed,
                                   std::size_t min_coords = 50);

}  // namespace vidpoint::nn
