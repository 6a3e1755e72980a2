#include "vidpoint/viewnet.hpp"

#include <algorithm>
#include <cmath>

#include "vidpoint/thread_pool.hpp"

namespace vidpoint::viewnet {

using geometry::FrameTag;
using nn::Tensor2;

void validate(const ViewNetConfig& config) {
  if (config.encoder_widths.empty() || config.head_widths.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "viewnet needs encoder and head widths");
  }
  for (int w : config.encoder_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "encoder widths must be positive");
  }
  for (int w : config.head_widths) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "head widths must be positive");
  }
  if (config.batch_size < 1 || config.epochs < 1 || config.input_points < 1) {
    throw Error(ErrorCode::kInvalidArgument, "viewnet sizes must be positive");
  }
  if (!(config.learning_rate > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
}

ViewNetParams init_viewnet(const ViewNetConfig& config) {
  validate(config);
  Rng rng(derive_seed(config.seed, 0x766e6574ULL));
  ViewNetParams params;
  params.input_points = config.input_points;

  int in = 3;
  for (int width : config.encoder_widths) {
    nn::DenseLayer layer = nn::make_dense(in, width, nn::Activation::kRelu);
    nn::he_initialize(layer, rng);
    params.encoder.push_back(std::move(layer));
    in = width;
  }
  for (int width : config.head_widths) {
    nn::DenseLayer layer = nn::make_dense(in, width, nn::Activation::kRelu);
    nn::he_initialize(layer, rng);
    params.head.push_back(std::move(layer));
    in = width;
  }
  // Final regression layer: zero weights, identity-transform bias
  // (6D identity rotation, zero translation, log-scale 0).
  nn::DenseLayer out = nn::make_dense(in, 10, nn::Activation::kNone);
  const auto id6 = geometry::identity_6d();
  for (int i = 0; i < 6; ++i) out.bias[static_cast<std::size_t>(i)] = id6[i];
  params.head.push_back(std::move(out));
  return params;
}

std::vector<std::span<double>> ViewNetParams::param_spans() {
  std::vector<std::span<double>> spans;
  for (auto& layer : encoder) {
    spans.push_back(layer.weights.flat());
    spans.push_back({layer.bias.data(), layer.bias.size()});
  }
  for (auto& layer : head) {
    spans.push_back(layer.weights.flat());
    spans.push_back({layer.bias.data(), layer.bias.size()});
  }
  return spans;
}

ViewNetGrads zero_grads(const ViewNetParams& params) {
  ViewNetGrads grads;
  for (const auto& layer : params.encoder) grads.encoder.push_back(nn::zero_like(layer));
  for (const auto& layer : params.head) grads.head.push_back(nn::zero_like(layer));
  return grads;
}

std::vector<std::span<const double>> ViewNetGrads::grad_spans() const {
  std::vector<std::span<const double>> spans;
  for (const auto& layer : encoder) {
    spans.push_back(layer.weights.flat());
    spans.push_back({layer.bias.data(), layer.bias.size()});
  }
  for (const auto& layer : head) {
    spans.push_back(layer.weights.flat());
    spans.push_back({layer.bias.data(), layer.bias.size()});
  }
  return spans;
}

void ViewNetGrads::add(const ViewNetGrads& other) {
  for (std::size_t i = 0; i < encoder.size(); ++i) {
    for (std::size_t j = 0; j < encoder[i].weights.data.size(); ++j) {
      encoder[i].weights.data[j] += other.encoder[i].weights.data[j];
    }
    for (std::size_t j = 0; j < encoder[i].bias.size(); ++j) {
      encoder[i].bias[j] += other.encoder[i].bias[j];
    }
  }
  for (std::size_t i = 0; i < head.size(); ++i) {
    for (std::size_t j = 0; j < head[i].weights.data.size(); ++j) {
      head[i].weights.data[j] += other.head[i].weights.data[j];
    }
    for (std::size_t j = 0; j < head[i].bias.size(); ++j) {
      head[i].bias[j] += other.head[i].bias[j];
    }
  }
}

void ViewNetGrads::scale(double factor) {
  for (auto& layer : encoder) {
    for (double& v : layer.weights.data) v *= factor;
    for (double& v : layer.bias) v *= factor;
  }
  for (auto& layer : head) {
    for (double& v : layer.weights.data) v *= factor;
    for (double& v : layer.bias) v *= factor;
  }
}

namespace {

Tensor2 cloud_to_tensor(const PointCloud& cloud) {
  Tensor2 x(static_cast<int>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    x.at(static_cast<int>(i), 0) = cloud.points[i].x();
    x.at(static_cast<int>(i), 1) = cloud.points[i].y();
    x.at(static_cast<int>(i), 2) = cloud.points[i].z();
  }
  return x;
}

// Everything the backward pass needs from one forward evaluation.
struct ForwardTrace {
  nn::DenseStackTrace encoder_trace;
  nn::MaxPoolResult pooled;
  nn::DenseStackTrace head_trace;
  Eigen::Matrix<double, 10, 1> out10;
  // Gram-Schmidt intermediates.
  Eigen::Vector3d a1, a2, b1, b2, b3;
  double n1 = 1.0, n2 = 1.0, proj = 0.0;
  Sim3Transform transform;
  Eigen::Matrix3d rot;
};

Sim3Transform forward_impl(const ViewNetParams& params, const PointCloud& cloud,
                           ForwardTrace* trace) {
  if (static_cast<int>(cloud.size()) != params.input_points) {
    throw Error(ErrorCode::kDimensionMismatch,
                "viewnet expects " + std::to_string(params.input_points) + " points, got " +
                    std::to_string(cloud.size()));
  }
  const Tensor2 x = cloud_to_tensor(cloud);

  nn::DenseStackTrace encoder_trace;
  const Tensor2 features =
      nn::dense_stack_forward(params.encoder, x, trace ? &encoder_trace : nullptr);
  const Tensor2& features_ref = trace ? encoder_trace.activations.back() : features;
  nn::MaxPoolResult pooled = nn::maxpool_points(features_ref);

  Tensor2 g(1, static_cast<int>(pooled.values.size()));
  g.data = pooled.values;
  nn::DenseStackTrace head_trace;
  const Tensor2 out = nn::dense_stack_forward(params.head, g, trace ? &head_trace : nullptr);

  Eigen::Matrix<double, 10, 1> out10;
  for (int i = 0; i < 10; ++i) out10[i] = out.at(0, i);

  const Eigen::Vector3d a1 = out10.head<3>();
  const Eigen::Vector3d a2 = out10.segment<3>(3);
  const double n1 = a1.norm();
  if (n1 <= 1e-8) {
    throw Error(ErrorCode::kDegenerateInput, "regressed 6d rotation is degenerate");
  }
  const Eigen::Vector3d b1 = a1 / n1;
  const double proj = b1.dot(a2);
  const Eigen::Vector3d u2 = a2 - proj * b1;
  const double n2 = u2.norm();
  if (n2 <= 1e-8) {
    throw Error(ErrorCode::kDegenerateInput, "regressed 6d rotation is degenerate");
  }
  const Eigen::Vector3d b2 = u2 / n2;
  const Eigen::Vector3d b3 = b1.cross(b2);

  Eigen::Matrix3d rot;
  rot.col(0) = b1;
  rot.col(1) = b2;
  rot.col(2) = b3;

  Sim3Transform transform;
  transform.rotation = Eigen::Quaterniond(rot).normalized();
  transform.translation = out10.segment<3>(6);
  transform.scale = std::exp(out10[9]);

  if (trace) {
    trace->encoder_trace = std::move(encoder_trace);
    trace->pooled = std::move(pooled);
    trace->head_trace = std::move(head_trace);
    trace->out10 = out10;
    trace->a1 = a1;
    trace->a2 = a2;
    trace->b1 = b1;
    trace->b2 = b2;
    trace->b3 = b3;
    trace->n1 = n1;
    trace->n2 = n2;
    trace->proj = proj;
    trace->transform = transform;
    trace->rot = rot;
  }
  return transform;
}

// dL/d(r6) from dL/dR by reversing the Gram-Schmidt construction.
Eigen::Matrix<double, 6, 1> gram_schmidt_backward(const ForwardTrace& trace,
                                                  const Eigen::Matrix3d& grad_rot) {
  const Eigen::Vector3d g1 = grad_rot.col(0);
  const Eigen::Vector3d g2 = grad_rot.col(1);
  const Eigen::Vector3d g3 = grad_rot.col(2);

  // b3 = b1 x b2.
  Eigen::Vector3d gb1 = g1 + trace.b2.cross(g3);
  Eigen::Vector3d gb2 = g2 + g3.cross(trace.b1);

  // b2 = u2 / |u2|.
  const Eigen::Vector3d gu2 = (gb2 - gb2.dot(trace.b2) * trace.b2) / trace.n2;

  // u2 = a2 - (b1 . a2) b1.
  const Eigen::Vector3d ga2 = gu2 - trace.b1.dot(gu2) * trace.b1;
  gb1 += -(gu2.dot(trace.b1)) * trace.a2 - trace.proj * gu2;

  // b1 = a1 / |a1|.
  const Eigen::Vector3d ga1 = (gb1 - gb1.dot(trace.b1) * trace.b1) / trace.n1;

  Eigen::Matrix<double, 6, 1> grad;
  grad.head<3>() = ga1;
  grad.tail<3>() = ga2;
  return grad;
}

// Backward from per-aligned-point gradients into parameter gradients.
void backward_impl(const ViewNetParams& params, const ForwardTrace& trace,
                   const PointCloud& input, const std::vector<Eigen::Vector3d>& grad_aligned,
                   ViewNetGrads* grads) {
  Eigen::Vector3d grad_t = Eigen::Vector3d::Zero();
  double grad_s = 0.0;
  Eigen::Matrix3d grad_rot = Eigen::Matrix3d::Zero();
  const double s = trace.transform.scale;
  for (std::size_t i = 0; i < input.size(); ++i) {
    const Eigen::Vector3d& g = grad_aligned[i];
    const Eigen::Vector3d rp = trace.rot * input.points[i];
    grad_t += g;
    grad_s += g.dot(rp);
    grad_rot += s * g * input.points[i].transpose();
  }

  Eigen::Matrix<double, 10, 1> grad_out10 = Eigen::Matrix<double, 10, 1>::Zero();
  grad_out10.head<6>() = gram_schmidt_backward(trace, grad_rot);
  grad_out10.segment<3>(6) = grad_t;
  grad_out10[9] = grad_s * s;  // scale = exp(log_s)

  Tensor2 up(1, 10);
  for (int i = 0; i < 10; ++i) up.at(0, i) = grad_out10[i];
  const Tensor2 grad_pooled =
      nn::dense_stack_backward(params.head, trace.head_trace, up, &grads->head);

  const int point_rows = trace.encoder_trace.activations.back().rows;
  const Tensor2 grad_features =
      nn::maxpool_backward(trace.pooled, point_rows, grad_pooled.flat());
  nn::dense_stack_backward(params.encoder, trace.encoder_trace, grad_features, &grads->encoder);
}

}  // namespace

Sim3Transform viewnet_forward(const ViewNetParams& params, const PointCloud& cloud) {
  return forward_impl(params, cloud, nullptr);
}

PointCloud align(const ViewNetParams& params, const PointCloud& cloud) {
  PointCloud out = geometry::sim3_apply(viewnet_forward(params, cloud), cloud);
  out.frame_tag = FrameTag::kWorld;
  return out;
}

TransformLoss loss_given_transform(const Sim3Transform& transform, const Triplet& triplet) {
  if (triplet.p_org.size() != triplet.p_world.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "p_org/p_world must be index-aligned");
  }
  const PointCloud aligned = geometry::sim3_apply(transform, triplet.p_org);
  double mse = 0.0;
  for (std::size_t i = 0; i < aligned.size(); ++i) {
    mse += (aligned.points[i] - triplet.p_world.points[i]).squaredNorm();
  }
  mse /= static_cast<double>(aligned.size());

  TransformLoss loss;
  loss.mse_term = mse;
  loss.chamfer_term = geometry::chamfer_distance(aligned, triplet.p_ref);
  loss.value = 0.5 * (loss.mse_term + loss.chamfer_term);
  return loss;
}

ViewNetLoss viewnet_loss(const ViewNetParams& params, const Triplet& triplet) {
  if (triplet.p_org.size() != triplet.p_world.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "p_org/p_world must be index-aligned");
  }
  ForwardTrace trace;
  forward_impl(params, triplet.p_org, &trace);
  // Warp with the Gram-Schmidt matrix itself so the analytic gradients
  // differentiate exactly the computation that produced the loss.
  PointCloud aligned;
  aligned.frame_tag = FrameTag::kWorld;
  aligned.points.reserve(triplet.p_org.size());
  for (const auto& p : triplet.p_org.points) {
    aligned.points.push_back(trace.transform.scale * (trace.rot * p) +
                             trace.transform.translation);
  }

  const std::size_t ka = aligned.size();
  const std::size_t kb = triplet.p_ref.size();
  const geometry::ChamferResult chamfer =
      geometry::chamfer_with_correspondences(aligned, triplet.p_ref);

  double mse = 0.0;
  std::vector<Eigen::Vector3d> grad_aligned(ka, Eigen::Vector3d::Zero());
  for (std::size_t i = 0; i < ka; ++i) {
    const Eigen::Vector3d diff = aligned.points[i] - triplet.p_world.points[i];
    mse += diff.squaredNorm();
    grad_aligned[i] += diff / static_cast<double>(ka);  // d(mse/2)/da
    grad_aligned[i] += (aligned.points[i] - triplet.p_ref.points[chamfer.nn_ab[i]]) /
                       static_cast<double>(ka);  // chamfer A->B term / 2
  }
  for (std::size_t b = 0; b < kb; ++b) {
    const std::size_t i = chamfer.nn_ba[b];
    grad_aligned[i] +=
        (aligned.points[i] - triplet.p_ref.points[b]) / static_cast<double>(kb);
  }
  mse /= static_cast<double>(ka);

  ViewNetLoss loss;
  loss.mse_term = mse;
  loss.chamfer_term = chamfer.value;
  loss.value = 0.5 * (mse + chamfer.value);
  loss.grads = zero_grads(params);
  backward_impl(params, trace, triplet.p_org, grad_aligned, &loss.grads);
  return loss;
}

std::pair<ViewNetParams, TrainHistory> train_viewnet(const std::vector<Triplet>& dataset,
                                                     const ViewNetConfig& config,
                                                     std::size_t workers) {
  validate(config);
  if (dataset.empty()) {
    throw Error(ErrorCode::kEmptyInput, "viewnet training needs a non-empty dataset");
  }
  if (dataset.size() < static_cast<std::size_t>(config.batch_size)) {
    throw Error(ErrorCode::kInvalidArgument, "dataset smaller than one batch");
  }

  ViewNetParams params = init_viewnet(config);
  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  nn::AdamState adam(adam_config);
  const auto param_spans = params.param_spans();

  TrainHistory history;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::int64_t global_step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Step decay keeps late epochs refining rather than bouncing.
    double lr = config.learning_rate;
    if (epoch >= (config.epochs * 17) / 20) {
      lr *= 0.1;
    } else if (epoch >= (config.epochs * 3) / 5) {
      lr *= 0.3;
    }
    adam.set_learning_rate(lr);
    Rng shuffle_rng(derive_seed(config.seed, 0x73687566ULL, epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
    }

    double epoch_loss = 0.0, epoch_mse = 0.0, epoch_chamfer = 0.0;
    std::size_t epoch_samples = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t batch_n =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      std::vector<ViewNetLoss> losses(batch_n);
      parallel_for(batch_n, workers, [&](std::size_t j) {
        losses[j] = viewnet_loss(params, dataset[order[start + j]]);
      });

      ViewNetGrads total = zero_grads(params);
      double batch_loss = 0.0;
      for (std::size_t j = 0; j < batch_n; ++j) {
        total.add(losses[j].grads);
        batch_loss += losses[j].value;
        epoch_loss += losses[j].value;
        epoch_mse += losses[j].mse_term;
        epoch_chamfer += losses[j].chamfer_term;
      }
      epoch_samples += batch_n;
      ++global_step;
      if (!std::isfinite(batch_loss)) {
        throw Error(ErrorCode::kNumerical,
                    "non-finite loss at step " + std::to_string(global_step));
      }
      total.scale(1.0 / static_cast<double>(batch_n));
      adam.step(param_spans, total.grad_spans());
    }

    history.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_samples));
    history.epoch_mean_mse.push_back(epoch_mse / static_cast<double>(epoch_samples));
    history.epoch_mean_chamfer.push_back(epoch_chamfer / static_cast<double>(epoch_samples));
  }
  return {std::move(params), std::move(history)};
}

std::vector<nn::NamedTensor> to_tensors(const ViewNetParams& params) {
  std::vector<nn::NamedTensor> tensors;
  Tensor2 meta(1, 1);
  meta.at(0, 0) = static_cast<double>(params.input_points);
  tensors.push_back({"meta", std::move(meta)});
  const auto push_stack = [&tensors](const std::string& prefix,
                                     const std::vector<nn::DenseLayer>& layers) {
    for (std::size_t i = 0; i < layers.size(); ++i) {
      tensors.push_back({prefix + "." + std::to_string(i) + ".weight", layers[i].weights});
      Tensor2 bias(1, static_cast<int>(layers[i].bias.size()));
      bias.data = layers[i].bias;
      tensors.push_back({prefix + "." + std::to_string(i) + ".bias", std::move(bias)});
    }
  };
  push_stack("encoder", params.encoder);
  push_stack("head", params.head);
  return tensors;
}

ViewNetParams params_from_tensors(const std::vector<nn::NamedTensor>& tensors) {
  ViewNetParams params;
  params.input_points = 0;
  for (const auto& entry : tensors) {
    if (entry.name == "meta") {
      params.input_points = static_cast<int>(entry.tensor.at(0, 0));
    }
  }
  const auto read_stack = [&tensors](const std::string& prefix) {
    std::vector<nn::DenseLayer> layers;
    for (std::size_t i = 0;; ++i) {
      const std::string wname = prefix + "." + std::to_string(i) + ".weight";
      const std::string bname = prefix + "." + std::to_string(i) + ".bias";
      const nn::NamedTensor* w = nullptr;
      const nn::NamedTensor* b = nullptr;
      for (const auto& entry : tensors) {
        if (entry.name == wname) w = &entry;
        if (entry.name == bname) b = &entry;
      }
      if (!w || !b) break;
      nn::DenseLayer layer;
      layer.weights = w->tensor;
      layer.bias = b->tensor.data;
      layer.activation = nn::Activation::kRelu;
      layers.push_back(std::move(layer));
    }
    return layers;
  };
  params.encoder = read_stack("encoder");
  params.head = read_stack("head");
  if (params.encoder.empty() || params.head.empty() || params.input_points < 1) {
    throw Error(ErrorCode::kCorruptHeader, "checkpoint does not describe a viewnet model");
  }
  params.head.back().activation = nn::Activation::kNone;
  if (params.head.back().out_dim() != 10) {
    throw Error(ErrorCode::kCorruptHeader, "viewnet head must emit a 10-vector");
  }
  return params;
}

void save_viewnet(const std::string& path, const ViewNetParams& params) {
  nn::save_checkpoint(path, to_tensors(params));
}

ViewNetParams load_viewnet(const std::string& path) {
  return params_from_tensors(nn::load_checkpoint(path));
}

}  // namespace vidpoint::viewnet
