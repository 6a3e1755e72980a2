#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vidpoint/checkpoint.hpp"
#include "vidpoint/geometry.hpp"
#include "vidpoint/nn.hpp"
#include "vidpoint/synthscene.hpp"

namespace vidpoint::viewnet {

using geometry::PointCloud;
using geometry::Sim3Transform;
using synthscene::Triplet;

struct ViewNetConfig {
  std::vector<int> encoder_widths = {64, 128, 256};
  std::vector<int> head_widths = {128};
  double learning_rate = 1e-3;
  int batch_size = 32;
  int epochs = 20;
  std::uint64_t seed = 0;
  int input_points = 512;
};

void validate(const ViewNetConfig& config);

/// Shared per-point MLP + maxpool, then a regression head emitting a
/// 10-vector: 6D rotation, translation, log-scale.
struct ViewNetParams {
  std::vector<nn::DenseLayer> encoder;  // relu per-point layers
  std::vector<nn::DenseLayer> head;     // relu stack, final layer linear (out=10)
  int input_points = 512;

  std::vector<std::span<double>> param_spans();
};

/// Seeded He init; the final head layer is zero with an identity-transform
/// bias, so an untrained net predicts the identity warp.
ViewNetParams init_viewnet(const ViewNetConfig& config);

Sim3Transform viewnet_forward(const ViewNetParams& params, const PointCloud& cloud);

/// sim3_apply(viewnet_forward(cloud), cloud), re-tagged to the unified
/// (world) frame.
PointCloud align(const ViewNetParams& params, const PointCloud& cloud);

struct ViewNetGrads {
  std::vector<nn::LayerGrad> encoder;
  std::vector<nn::LayerGrad> head;

  std::vector<std::span<const double>> grad_spans() const;
  void add(const ViewNetGrads& other);
  void scale(double factor);
};

ViewNetGrads zero_grads(const ViewNetParams& params);

struct ViewNetLoss {
  double value = 0.0;
  double mse_term = 0.0;
  double chamfer_term = 0.0;
  ViewNetGrads grads;
};

/// Composite loss (MSE(align(p_org), p_world) + Chamfer(align(p_org),
/// p_ref)) / 2 with analytic gradients through the warp, the 6D rotation
/// and both loss terms. Chamfer correspondences are held fixed per
/// evaluation (envelope gradient).
ViewNetLoss viewnet_loss(const ViewNetParams& params, const Triplet& triplet);

/// Loss terms for an externally supplied transform (oracle evaluation).
struct TransformLoss {
  double value = 0.0;
  double mse_term = 0.0;
  double chamfer_term = 0.0;
};
TransformLoss loss_given_transform(const Sim3Transform& transform, const Triplet& triplet);

struct TrainHistory {
  std::vector<double> epoch_mean_loss;
  std::vector<double> epoch_mean_mse;
  std::vector<double> epoch_mean_chamfer;
};

/// Seeded minibatch descent with Adam; per-sample gradients may be
/// computed in parallel but are reduced in sample order, so results are
/// bitwise reproducible for a given seed.
std::pair<ViewNetParams, TrainHistory> train_viewnet(const std::vector<Triplet>& dataset,
                                                     const ViewNetConfig& config,
                                                     std::size_t workers = 1);

std::vector<nn::NamedTensor> to_tensors(const ViewNetParams& params);
ViewNetParams params_from_tensors(const std::vector<nn::NamedTensor>& tensors);

void save_viewnet(const std::string& path, const ViewNetParams& params);
ViewNetParams load_viewnet(const std::string& path);

}  // namespace vidpoint::viewnet
