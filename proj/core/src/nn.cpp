#include "vidpoint/nn.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <set>

namespace vidpoint::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

ConstMapMat map_of(const Tensor2& t) { return {t.data.data(), t.rows, t.cols}; }
MapMat map_of(Tensor2& t) { return {t.data.data(), t.rows, t.cols}; }

double activation_value(Activation act, double z) {
  switch (act) {
    case Activation::kNone: return z;
    case Activation::kRelu: return z > 0.0 ? z : 0.0;
    case Activation::kTanh: return std::tanh(z);
  }
  return z;
}

double activation_slope(Activation act, double z) {
  switch (act) {
    case Activation::kNone: return 1.0;
    case Activation::kRelu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// For none/relu/tanh the slope is recoverable from the activation output,
// with identical arithmetic to the pre-activation form.
double slope_from_output(Activation act, double y) {
  switch (act) {
    case Activation::kNone: return 1.0;
    case Activation::kRelu: return y > 0.0 ? 1.0 : 0.0;
    case Activation::kTanh: return 1.0 - y * y;
  }
  return 1.0;
}

DenseGradients dense_backward_from_output(const DenseLayer& layer, const Tensor2& x,
                                          const Tensor2& y, const Tensor2& upstream) {
  Tensor2 grad_z(upstream.rows, upstream.cols);
  for (std::size_t i = 0; i < grad_z.data.size(); ++i) {
    grad_z.data[i] = upstream.data[i] * slope_from_output(layer.activation, y.data[i]);
  }
  DenseGradients grads;
  grads.input = Tensor2(x.rows, x.cols);
  map_of(grads.input).noalias() = map_of(grad_z) * map_of(layer.weights);
  grads.weights = Tensor2(layer.out_dim(), layer.in_dim());
  map_of(grads.weights).noalias() = map_of(grad_z).transpose() * map_of(x);
  grads.bias.assign(static_cast<std::size_t>(layer.out_dim()), 0.0);
  for (int r = 0; r < grad_z.rows; ++r) {
    for (int c = 0; c < grad_z.cols; ++c) {
      grads.bias[static_cast<std::size_t>(c)] += grad_z.at(r, c);
    }
  }
  return grads;
}

Tensor2 pre_activation(const DenseLayer& layer, const Tensor2& x) {
  Tensor2 z(x.rows, layer.out_dim());
  map_of(z).noalias() = map_of(x) * map_of(layer.weights).transpose();
  for (int r = 0; r < z.rows; ++r) {
    for (int c = 0; c < z.cols; ++c) z.at(r, c) += layer.bias[static_cast<std::size_t>(c)];
  }
  return z;
}

void check_shapes(const DenseLayer& layer, const Tensor2& x) {
  if (x.cols != layer.in_dim()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "dense layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                    std::to_string(x.cols));
  }
  if (static_cast<int>(layer.bias.size()) != layer.out_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "bias size does not match output dim");
  }
}

}  // namespace

DenseLayer make_dense(int in_dim, int out_dim, Activation activation) {
  if (in_dim < 1 || out_dim < 1) {
    throw Error(ErrorCode::kInvalidArgument, "layer dims must be positive");
  }
  DenseLayer layer;
  layer.weights = Tensor2(out_dim, in_dim);
  layer.bias.assign(static_cast<std::size_t>(out_dim), 0.0);
  layer.activation = activation;
  return layer;
}

void he_initialize(DenseLayer& layer, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(layer.in_dim()));
  for (double& w : layer.weights.data) w = rng.uniform(-limit, limit);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
}

Tensor2 dense_forward(const DenseLayer& layer, const Tensor2& x) {
  check_shapes(layer, x);
  Tensor2 y = pre_activation(layer, x);
  if (layer.activation != Activation::kNone) {
    for (double& v : y.data) v = activation_value(layer.activation, v);
  }
  return y;
}

DenseGradients dense_backward(const DenseLayer& layer, const Tensor2& x,
                              const Tensor2& upstream) {
  check_shapes(layer, x);
  if (upstream.rows != x.rows || upstream.cols != layer.out_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "upstream gradient shape mismatch");
  }

  Tensor2 grad_z = pre_activation(layer, x);
  for (std::size_t i = 0; i < grad_z.data.size(); ++i) {
    grad_z.data[i] = upstream.data[i] * activation_slope(layer.activation, grad_z.data[i]);
  }

  DenseGradients grads;
  grads.input = Tensor2(x.rows, x.cols);
  map_of(grads.input).noalias() = map_of(grad_z) * map_of(layer.weights);
  grads.weights = Tensor2(layer.out_dim(), layer.in_dim());
  map_of(grads.weights).noalias() = map_of(grad_z).transpose() * map_of(x);
  grads.bias.assign(static_cast<std::size_t>(layer.out_dim()), 0.0);
  for (int r = 0; r < grad_z.rows; ++r) {
    for (int c = 0; c < grad_z.cols; ++c) grads.bias[static_cast<std::size_t>(c)] += grad_z.at(r, c);
  }
  return grads;
}

MaxPoolResult maxpool_points(const Tensor2& per_point_features) {
  if (per_point_features.rows < 1) {
    throw Error(ErrorCode::kEmptyInput, "maxpool needs at least one row");
  }
  MaxPoolResult result;
  result.values.assign(static_cast<std::size_t>(per_point_features.cols), 0.0);
  result.argmax_rows.assign(static_cast<std::size_t>(per_point_features.cols), 0);
  for (int c = 0; c < per_point_features.cols; ++c) {
    double best = per_point_features.at(0, c);
    int best_row = 0;
    for (int r = 1; r < per_point_features.rows; ++r) {
      const double v = per_point_features.at(r, c);
      if (v > best) {  // strict: ties keep the lowest row
        best = v;
        best_row = r;
      }
    }
    result.values[static_cast<std::size_t>(c)] = best;
    result.argmax_rows[static_cast<std::size_t>(c)] = best_row;
  }
  return result;
}

Tensor2 maxpool_backward(const MaxPoolResult& pooled, int rows,
                         std::span<const double> upstream) {
  if (upstream.size() != pooled.values.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "maxpool upstream size mismatch");
  }
  Tensor2 grad(rows, static_cast<int>(pooled.values.size()));
  for (std::size_t c = 0; c < pooled.values.size(); ++c) {
    grad.at(pooled.argmax_rows[c], static_cast<int>(c)) = upstream[c];
  }
  return grad;
}

void AdamState::step(std::span<const std::span<double>> params,
                     std::span<const std::span<const double>> grads) {
  if (params.size() != grads.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "adam: params/grads count mismatch");
  }
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i].assign(params[i].size(), 0.0);
      v_[i].assign(params[i].size(), 0.0);
    }
  }
  if (m_.size() != params.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "adam: parameter list changed size");
  }
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i];
    auto g = grads[i];
    if (p.size() != g.size() || p.size() != m_[i].size()) {
      throw Error(ErrorCode::kDimensionMismatch, "adam: tensor shape mismatch");
    }
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = config_.beta1 * m_[i][j] + (1.0 - config_.beta1) * g[j];
      v_[i][j] = config_.beta2 * v_[i][j] + (1.0 - config_.beta2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p[j] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
    }
  }
}

LayerGrad zero_like(const DenseLayer& layer) {
  LayerGrad grad;
  grad.weights = Tensor2(layer.weights.rows, layer.weights.cols);
  grad.bias.assign(layer.bias.size(), 0.0);
  return grad;
}

Tensor2 dense_stack_forward(const std::vector<DenseLayer>& layers, const Tensor2& x,
                            DenseStackTrace* trace) {
  if (trace) {
    trace->activations.clear();
    trace->activations.reserve(layers.size() + 1);
    trace->activations.push_back(x);
  }
  Tensor2 current = x;
  for (const auto& layer : layers) {
    current = dense_forward(layer, current);
    if (trace) trace->activations.push_back(current);
  }
  return current;
}

Tensor2 dense_stack_backward(const std::vector<DenseLayer>& layers,
                             const DenseStackTrace& trace, const Tensor2& upstream,
                             std::vector<LayerGrad>* grads) {
  if (trace.activations.size() != layers.size() + 1) {
    throw Error(ErrorCode::kDimensionMismatch, "stack trace/layer count mismatch");
  }
  if (grads && grads->size() != layers.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "stack grads/layer count mismatch");
  }
  Tensor2 current = upstream;
  for (std::size_t i = layers.size(); i-- > 0;) {
    DenseGradients g = dense_backward_from_output(layers[i], trace.activations[i],
                                                  trace.activations[i + 1], current);
    if (grads) {
      auto& slot = (*grads)[i];
      for (std::size_t j = 0; j < slot.weights.data.size(); ++j) {
        slot.weights.data[j] += g.weights.data[j];
      }
      for (std::size_t j = 0; j < slot.bias.size(); ++j) slot.bias[j] += g.bias[j];
    }
    current = std::move(g.input);
  }
  return current;
}

FiniteDiffReport finite_diff_check(const std::function<double()>& loss,
                                   std::span<const std::span<double>> params,
                                   std::span<const std::span<const double>> analytic,
                                   double h, double tolerance, std::uint64_t seed,
                                   std::size_t min_coords) {
  if (params.size() != analytic.size()) {
    throw Error(ErrorCode::kDimensionMismatch, "finite diff: params/grads count mismatch");
  }
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();

  // Pick the probe set: everything when small, else a seeded subset.
  std::set<std::size_t> picks;
  if (total <= min_coords) {
    for (std::size_t i = 0; i < total; ++i) picks.insert(i);
  } else {
    Rng rng(seed);
    while (picks.size() < min_coords) picks.insert(rng.uniform_index(total));
  }

  FiniteDiffReport report;
  report.tolerance = tolerance;
  for (std::size_t flat : picks) {
    std::size_t param_idx = 0, offset = flat;
    while (offset >= params[param_idx].size()) {
      offset -= params[param_idx].size();
      ++param_idx;
    }
    double& coord = params[param_idx][offset];
    const double saved = coord;
    coord = saved + h;
    const double plus = loss();
    coord = saved - h;
    const double minus = loss();
    coord = saved;

    const double fd = (plus - minus) / (2.0 * h);
    const double an = analytic[param_idx][offset];
    const double rel = std::abs(fd - an) / std::max({1.0, std::abs(fd), std::abs(an)});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_param = param_idx;
      report.worst_index = offset;
    }
    ++report.coords_checked;
  }
  report.passed = report.max_rel_err <= tolerance;
  return report;
}

}  // namespace vidpoint::nn
