#include "vidpoint/disentangle.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "vidpoint/thread_pool.hpp"

namespace vidpoint::disentangle {

using nn::Tensor2;

void validate(const DisentangleConfig& config) {
  if (!(config.temperature > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  }
  if (config.orth_weight < 0) {
    throw Error(ErrorCode::kInvalidArgument, "orthogonality weight must be >= 0");
  }
  if (!(config.ramp_fraction > 0 && config.ramp_fraction <= 1)) {
    throw Error(ErrorCode::kInvalidArgument, "ramp fraction must be in (0, 1]");
  }
  if (config.batch_size < 2) {
    throw Error(ErrorCode::kInvalidArgument, "batch size must be >= 2");
  }
  if (config.embedding_dim < 1 || config.input_points < 1 || config.steps < 1) {
    throw Error(ErrorCode::kInvalidArgument, "encoder sizes must be positive");
  }
  if (config.trunk_widths.empty() || config.head_widths.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "trunk and head widths must be non-empty");
  }
  if (!(config.learning_rate > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
}

EncoderParams init_encoder(const DisentangleConfig& config) {
  validate(config);
  EncoderParams params;
  params.input_points = config.input_points;
  params.normalize_embeddings = config.normalize_embeddings;

  Rng trunk_rng(derive_seed(config.seed, 0x7472756eULL));
  int in = 3;
  for (int width : config.trunk_widths) {
    nn::DenseLayer layer = nn::make_dense(in, width, nn::Activation::kRelu);
    nn::he_initialize(layer, trunk_rng);
    params.trunk.push_back(std::move(layer));
    in = width;
  }
  const auto build_head = [&](std::uint64_t stream) {
    Rng rng(derive_seed(config.seed, stream));
    std::vector<nn::DenseLayer> head;
    int dim = in;
    for (int width : config.head_widths) {
      nn::DenseLayer layer = nn::make_dense(dim, width, nn::Activation::kRelu);
      nn::he_initialize(layer, rng);
      head.push_back(std::move(layer));
      dim = width;
    }
    nn::DenseLayer out = nn::make_dense(dim, config.embedding_dim, nn::Activation::kNone);
    nn::he_initialize(out, rng);
    head.push_back(std::move(out));
    return head;
  };
  params.head_inv = build_head(0x696e76ULL);
  params.head_dep = build_head(0x646570ULL);
  return params;
}

std::vector<std::span<double>> EncoderParams::param_spans() {
  std::vector<std::span<double>> spans;
  const auto push = [&spans](std::vector<nn::DenseLayer>& layers) {
    for (auto& layer : layers) {
      spans.push_back(layer.weights.flat());
      spans.push_back({layer.bias.data(), layer.bias.size()});
    }
  };
  push(trunk);
  push(head_inv);
  push(head_dep);
  return spans;
}

EncoderGrads zero_grads(const EncoderParams& params) {
  EncoderGrads grads;
  for (const auto& layer : params.trunk) grads.trunk.push_back(nn::zero_like(layer));
  for (const auto& layer : params.head_inv) grads.head_inv.push_back(nn::zero_like(layer));
  for (const auto& layer : params.head_dep) grads.head_dep.push_back(nn::zero_like(layer));
  return grads;
}

std::vector<std::span<const double>> EncoderGrads::grad_spans() const {
  std::vector<std::span<const double>> spans;
  const auto push = [&spans](const std::vector<nn::LayerGrad>& layers) {
    for (const auto& layer : layers) {
      spans.push_back(layer.weights.flat());
      spans.push_back({layer.bias.data(), layer.bias.size()});
    }
  };
  push(trunk);
  push(head_inv);
  push(head_dep);
  return spans;
}

namespace {

void add_layer_grads(std::vector<nn::LayerGrad>& into, const std::vector<nn::LayerGrad>& from) {
  for (std::size_t i = 0; i < into.size(); ++i) {
    for (std::size_t j = 0; j < into[i].weights.data.size(); ++j) {
      into[i].weights.data[j] += from[i].weights.data[j];
    }
    for (std::size_t j = 0; j < into[i].bias.size(); ++j) into[i].bias[j] += from[i].bias[j];
  }
}

void scale_layer_grads(std::vector<nn::LayerGrad>& grads, double factor) {
  for (auto& layer : grads) {
    for (double& v : layer.weights.data) v *= factor;
    for (double& v : layer.bias) v *= factor;
  }
}

}  // namespace

void EncoderGrads::add(const EncoderGrads& other) {
  add_layer_grads(trunk, other.trunk);
  add_layer_grads(head_inv, other.head_inv);
  add_layer_grads(head_dep, other.head_dep);
}

void EncoderGrads::scale(double factor) {
  scale_layer_grads(trunk, factor);
  scale_layer_grads(head_inv, factor);
  scale_layer_grads(head_dep, factor);
}

namespace {

struct CloudTrace {
  nn::DenseStackTrace trunk_trace;
  nn::MaxPoolResult pooled;
  nn::DenseStackTrace inv_trace;
  nn::DenseStackTrace dep_trace;
  Eigen::VectorXd u_inv, u_dep;  // pre-normalization head outputs
  Eigen::VectorXd z_inv, z_dep;
  double n_inv = 1.0, n_dep = 1.0;
};

Tensor2 cloud_to_tensor(const PointCloud& cloud) {
  Tensor2 x(static_cast<int>(cloud.size()), 3);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    x.at(static_cast<int>(i), 0) = cloud.points[i].x();
    x.at(static_cast<int>(i), 1) = cloud.points[i].y();
    x.at(static_cast<int>(i), 2) = cloud.points[i].z();
  }
  return x;
}

Eigen::VectorXd row_to_vector(const Tensor2& row) {
  Eigen::VectorXd v(row.cols);
  for (int i = 0; i < row.cols; ++i) v[i] = row.at(0, i);
  return v;
}

Embeddings forward_cloud(const EncoderParams& params, const PointCloud& cloud,
                         CloudTrace* trace) {
  if (static_cast<int>(cloud.size()) != params.input_points) {
    throw Error(ErrorCode::kDimensionMismatch,
                "encoder expects " + std::to_string(params.input_points) + " points, got " +
                    std::to_string(cloud.size()));
  }
  const Tensor2 x = cloud_to_tensor(cloud);

  nn::DenseStackTrace trunk_trace;
  const Tensor2 features =
      nn::dense_stack_forward(params.trunk, x, trace ? &trunk_trace : nullptr);
  nn::MaxPoolResult pooled =
      nn::maxpool_points(trace ? trunk_trace.activations.back() : features);

  Tensor2 g(1, static_cast<int>(pooled.values.size()));
  g.data = pooled.values;

  nn::DenseStackTrace inv_trace, dep_trace;
  const Tensor2 out_inv =
      nn::dense_stack_forward(params.head_inv, g, trace ? &inv_trace : nullptr);
  const Tensor2 out_dep =
      nn::dense_stack_forward(params.head_dep, g, trace ? &dep_trace : nullptr);

  Embeddings emb;
  Eigen::VectorXd u_inv = row_to_vector(out_inv);
  Eigen::VectorXd u_dep = row_to_vector(out_dep);
  double n_inv = 1.0, n_dep = 1.0;
  if (params.normalize_embeddings) {
    n_inv = u_inv.norm();
    n_dep = u_dep.norm();
    emb.z_inv = u_inv / n_inv;
    emb.z_dep = u_dep / n_dep;
  } else {
    emb.z_inv = u_inv;
    emb.z_dep = u_dep;
  }

  if (trace) {
    trace->trunk_trace = std::move(trunk_trace);
    trace->pooled = std::move(pooled);
    trace->inv_trace = std::move(inv_trace);
    trace->dep_trace = std::move(dep_trace);
    trace->u_inv = std::move(u_inv);
    trace->u_dep = std::move(u_dep);
    trace->z_inv = emb.z_inv;
    trace->z_dep = emb.z_dep;
    trace->n_inv = n_inv;
    trace->n_dep = n_dep;
  }
  return emb;
}

// Backprop one cloud from embedding gradients into parameter gradients.
void backward_cloud(const EncoderParams& params, const CloudTrace& trace,
                    const Eigen::VectorXd& dz_inv, const Eigen::VectorXd& dz_dep,
                    EncoderGrads* grads) {
  Eigen::VectorXd du_inv = dz_inv;
  Eigen::VectorXd du_dep = dz_dep;
  if (params.normalize_embeddings) {
    du_inv = (dz_inv - dz_inv.dot(trace.z_inv) * trace.z_inv) / trace.n_inv;
    du_dep = (dz_dep - dz_dep.dot(trace.z_dep) * trace.z_dep) / trace.n_dep;
  }

  Tensor2 up_inv(1, static_cast<int>(du_inv.size()));
  for (int i = 0; i < up_inv.cols; ++i) up_inv.at(0, i) = du_inv[i];
  Tensor2 up_dep(1, static_cast<int>(du_dep.size()));
  for (int i = 0; i < up_dep.cols; ++i) up_dep.at(0, i) = du_dep[i];

  const Tensor2 g_inv =
      nn::dense_stack_backward(params.head_inv, trace.inv_trace, up_inv, &grads->head_inv);
  const Tensor2 g_dep =
      nn::dense_stack_backward(params.head_dep, trace.dep_trace, up_dep, &grads->head_dep);

  Tensor2 g_total = g_inv;
  for (std::size_t i = 0; i < g_total.data.size(); ++i) g_total.data[i] += g_dep.data[i];

  const int point_rows = trace.trunk_trace.activations.back().rows;
  const Tensor2 grad_features =
      nn::maxpool_backward(trace.pooled, point_rows, g_total.flat());
  nn::dense_stack_backward(params.trunk, trace.trunk_trace, grad_features, &grads->trunk);
}

struct InfoNceGrads {
  double value = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd pos;
  std::vector<Eigen::VectorXd> negs;
};

InfoNceGrads info_nce_with_grads(const Eigen::VectorXd& q, const Eigen::VectorXd& pos,
                                 const std::vector<const Eigen::VectorXd*>& negs,
                                 double tau) {
  if (negs.empty()) {
    throw Error(ErrorCode::kEmptyInput, "InfoNCE needs at least one negative");
  }
  const double s_pos = q.dot(pos) / tau;
  std::vector<double> s_neg(negs.size());
  double m = s_pos;
  for (std::size_t i = 0; i < negs.size(); ++i) {
    s_neg[i] = q.dot(*negs[i]) / tau;
    m = std::max(m, s_neg[i]);
  }
  const double e_pos = std::exp(s_pos - m);
  double z = e_pos;
  std::vector<double> e_neg(negs.size());
  for (std::size_t i = 0; i < negs.size(); ++i) {
    e_neg[i] = std::exp(s_neg[i] - m);
    z += e_neg[i];
  }

  InfoNceGrads out;
  out.value = -(s_pos - m) + std::log(z);
  const double p_pos = e_pos / z;
  out.q = ((p_pos - 1.0) * pos) / tau;
  out.pos = ((p_pos - 1.0) * q) / tau;
  out.negs.resize(negs.size());
  for (std::size_t i = 0; i < negs.size(); ++i) {
    const double p_i = e_neg[i] / z;
    out.q += (p_i * (*negs[i])) / tau;
    out.negs[i] = (p_i * q) / tau;
  }
  return out;
}

std::vector<std::size_t> dep_eligible(const EmbeddingBatch& batch, std::size_t k) {
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i != k && batch.episode_ids[i] == batch.episode_ids[k] &&
        batch.timesteps[i] != batch.timesteps[k]) {
      eligible.push_back(i);
    }
  }
  return eligible;
}

}  // namespace

Embeddings encoder_forward(const EncoderParams& params, const PointCloud& cloud) {
  return forward_cloud(params, cloud, nullptr);
}

double info_nce(const Eigen::VectorXd& q, const Eigen::VectorXd& pos,
                const std::vector<Eigen::VectorXd>& negs, double tau) {
  return info_nce_with_gradients(q, pos, negs, tau).value;
}

InfoNceGradients info_nce_with_gradients(const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& pos,
                                         const std::vector<Eigen::VectorXd>& negs,
                                         double tau) {
  if (!(tau > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be > 0");
  }
  std::vector<const Eigen::VectorXd*> ptrs;
  ptrs.reserve(negs.size());
  for (const auto& n : negs) ptrs.push_back(&n);
  InfoNceGrads internal = info_nce_with_grads(q, pos, ptrs, tau);
  InfoNceGradients out;
  out.value = internal.value;
  out.q = std::move(internal.q);
  out.pos = std::move(internal.pos);
  out.negs = std::move(internal.negs);
  return out;
}

double loss_inv(const EmbeddingBatch& batch, std::size_t k, double tau) {
  if (batch.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "invariance loss needs batch size >= 2");
  }
  std::vector<const Eigen::VectorXd*> negs;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (i != k) negs.push_back(&batch.inv_rand[i]);
  }
  return info_nce_with_grads(batch.inv_ref[k], batch.inv_rand[k], negs, tau).value;
}

std::optional<double> loss_dep(const EmbeddingBatch& batch, std::size_t k, double tau,
                               Rng& rng) {
  const auto eligible = dep_eligible(batch, k);
  if (eligible.empty()) return std::nullopt;
  const std::size_t t = eligible[rng.uniform_index(eligible.size())];
  std::vector<const Eigen::VectorXd*> negs;
  negs.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) negs.push_back(&batch.dep_rand[i]);
  return info_nce_with_grads(batch.dep_ref[k], batch.dep_ref[t], negs, tau).value;
}

double loss_orth(const Eigen::VectorXd& z_inv_ref, const Eigen::VectorXd& z_dep_ref,
                 const Eigen::VectorXd& z_inv_rand, const Eigen::VectorXd& z_dep_rand) {
  return 0.5 * (std::abs(z_inv_ref.dot(z_dep_ref)) + std::abs(z_inv_rand.dot(z_dep_rand)));
}

double beta_schedule(std::int64_t step, std::int64_t total_steps, double ramp_fraction) {
  if (step < 0 || step > total_steps) {
    throw Error(ErrorCode::kInvalidArgument, "step must lie in [0, total_steps]");
  }
  const double denom = ramp_fraction * static_cast<double>(total_steps);
  if (denom <= 0) return step > 0 ? 1.0 : 0.0;
  return std::min(1.0, static_cast<double>(step) / denom);
}

TotalLoss loss_total(const EncoderParams& params, const std::vector<BatchItem>& batch,
                     std::int64_t step, std::int64_t total_steps,
                     const DisentangleConfig& config, std::size_t workers) {
  const std::size_t b = batch.size();
  if (b < 2) {
    throw Error(ErrorCode::kInvalidArgument, "loss_total needs a batch of >= 2");
  }
  const double beta = config.beta_scale * beta_schedule(step, total_steps, config.ramp_fraction);
  const double tau = config.temperature;

  // Forward every cloud (2B of them) with traces kept for the backward pass.
  std::vector<CloudTrace> ref_traces(b), rand_traces(b);
  parallel_for(2 * b, workers, [&](std::size_t j) {
    if (j < b) {
      forward_cloud(params, batch[j].ref, &ref_traces[j]);
    } else {
      forward_cloud(params, batch[j - b].rand, &rand_traces[j - b]);
    }
  });

  EmbeddingBatch emb;
  emb.inv_ref.resize(b);
  emb.inv_rand.resize(b);
  emb.dep_ref.resize(b);
  emb.dep_rand.resize(b);
  emb.episode_ids.resize(b);
  emb.timesteps.resize(b);
  for (std::size_t k = 0; k < b; ++k) {
    emb.inv_ref[k] = ref_traces[k].z_inv;
    emb.dep_ref[k] = ref_traces[k].z_dep;
    emb.inv_rand[k] = rand_traces[k].z_inv;
    emb.dep_rand[k] = rand_traces[k].z_dep;
    emb.episode_ids[k] = batch[k].episode_id;
    emb.timesteps[k] = batch[k].timestep;
  }

  const int d = static_cast<int>(emb.inv_ref[0].size());
  std::vector<Eigen::VectorXd> d_inv_ref(b, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::VectorXd> d_inv_rand(b, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::VectorXd> d_dep_ref(b, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::VectorXd> d_dep_rand(b, Eigen::VectorXd::Zero(d));

  TotalLoss result;
  result.components.beta = beta;

  // Invariance term, mean over anchors.
  {
    const double w = 1.0 / static_cast<double>(b);
    for (std::size_t k = 0; k < b; ++k) {
      std::vector<const Eigen::VectorXd*> negs;
      std::vector<std::size_t> neg_idx;
      for (std::size_t i = 0; i < b; ++i) {
        if (i != k) {
          negs.push_back(&emb.inv_rand[i]);
          neg_idx.push_back(i);
        }
      }
      InfoNceGrads g = info_nce_with_grads(emb.inv_ref[k], emb.inv_rand[k], negs, tau);
      result.components.inv += g.value * w;
      d_inv_ref[k] += w * g.q;
      d_inv_rand[k] += w * g.pos;
      for (std::size_t i = 0; i < neg_idx.size(); ++i) {
        d_inv_rand[neg_idx[i]] += w * g.negs[i];
      }
    }
  }

  // Divergence term: one seeded positive per eligible anchor, negatives
  // over every random-view embedding in the batch (k included).
  {
    Rng rng(derive_seed(config.seed, 0x6465706fULL, static_cast<std::uint64_t>(step)));
    std::vector<std::pair<std::size_t, std::size_t>> anchors;  // (k, positive t)
    for (std::size_t k = 0; k < b; ++k) {
      const auto eligible = dep_eligible(emb, k);
      if (eligible.empty()) {
        ++result.components.dep_skipped;
        continue;
      }
      anchors.emplace_back(k, eligible[rng.uniform_index(eligible.size())]);
    }
    if (!anchors.empty() && beta > 0.0) {
      const double w = 1.0 / static_cast<double>(anchors.size());
      for (const auto& [k, t] : anchors) {
        std::vector<const Eigen::VectorXd*> negs;
        negs.reserve(b);
        for (std::size_t i = 0; i < b; ++i) negs.push_back(&emb.dep_rand[i]);
        InfoNceGrads g = info_nce_with_grads(emb.dep_ref[k], emb.dep_ref[t], negs, tau);
        result.components.dep += g.value * w;
        d_dep_ref[k] += (beta * w) * g.q;
        d_dep_ref[t] += (beta * w) * g.pos;
        for (std::size_t i = 0; i < b; ++i) d_dep_rand[i] += (beta * w) * g.negs[i];
      }
    } else if (!anchors.empty()) {
      // beta == 0: still report the value, gradients are weighted out.
      const double w = 1.0 / static_cast<double>(anchors.size());
      for (const auto& [k, t] : anchors) {
        std::vector<const Eigen::VectorXd*> negs;
        negs.reserve(b);
        for (std::size_t i = 0; i < b; ++i) negs.push_back(&emb.dep_rand[i]);
        result.components.dep +=
            info_nce_with_grads(emb.dep_ref[k], emb.dep_ref[t], negs, tau).value * w;
      }
    }
  }

  // Orthogonality term.
  {
    const double w = 1.0 / static_cast<double>(b);
    for (std::size_t k = 0; k < b; ++k) {
      const double s_ref = emb.inv_ref[k].dot(emb.dep_ref[k]);
      const double s_rand = emb.inv_rand[k].dot(emb.dep_rand[k]);
      result.components.orth += 0.5 * (std::abs(s_ref) + std::abs(s_rand)) * w;
      if (beta > 0.0 && config.orth_weight > 0.0) {
        const double wo = beta * config.orth_weight * w * 0.5;
        const double sign_ref = s_ref > 0 ? 1.0 : (s_ref < 0 ? -1.0 : 0.0);
        const double sign_rand = s_rand > 0 ? 1.0 : (s_rand < 0 ? -1.0 : 0.0);
        d_inv_ref[k] += wo * sign_ref * emb.dep_ref[k];
        d_dep_ref[k] += wo * sign_ref * emb.inv_ref[k];
        d_inv_rand[k] += wo * sign_rand * emb.dep_rand[k];
        d_dep_rand[k] += wo * sign_rand * emb.inv_rand[k];
      }
    }
  }

  result.components.total =
      result.components.inv +
      beta * (result.components.dep + config.orth_weight * result.components.orth);

  // Backward for each cloud; per-cloud slots are reduced in index order so
  // the result is worker-count invariant.
  std::vector<EncoderGrads> slots(2 * b);
  parallel_for(2 * b, workers, [&](std::size_t j) {
    slots[j] = zero_grads(params);
    if (j < b) {
      backward_cloud(params, ref_traces[j], d_inv_ref[j], d_dep_ref[j], &slots[j]);
    } else {
      backward_cloud(params, rand_traces[j - b], d_inv_rand[j - b], d_dep_rand[j - b],
                     &slots[j]);
    }
  });
  result.grads = zero_grads(params);
  for (auto& slot : slots) result.grads.add(slot);
  return result;
}

namespace {

std::vector<BatchItem> sample_batch(const std::vector<ProcessedEpisode>& dataset,
                                    std::size_t batch_size, std::size_t group_size,
                                    Rng& rng) {
  const std::size_t n_eps = dataset.size();
  group_size = std::clamp<std::size_t>(group_size, 2, batch_size);
  const std::size_t groups =
      std::max<std::size_t>(1, std::min(n_eps, batch_size / group_size));

  // Pick `groups` distinct episodes via partial Fisher-Yates.
  std::vector<std::size_t> episode_order(n_eps);
  for (std::size_t i = 0; i < n_eps; ++i) episode_order[i] = i;
  for (std::size_t i = 0; i < groups; ++i) {
    const std::size_t j = i + rng.uniform_index(n_eps - i);
    std::swap(episode_order[i], episode_order[j]);
  }

  std::vector<BatchItem> batch;
  batch.reserve(batch_size);
  const std::size_t base = batch_size / groups;
  const std::size_t extra = batch_size % groups;
  for (std::size_t gi = 0; gi < groups; ++gi) {
    const std::size_t count = base + (gi < extra ? 1 : 0);
    const std::size_t ep = episode_order[gi];
    const auto& frames = dataset[ep].frames;
    if (frames.size() < count) {
      throw Error(ErrorCode::kInvalidArgument,
                  "episode " + std::to_string(ep) + " has " + std::to_string(frames.size()) +
                      " frames, batch needs " + std::to_string(count) + " distinct timesteps");
    }
    std::vector<std::size_t> frame_order(frames.size());
    for (std::size_t i = 0; i < frame_order.size(); ++i) frame_order[i] = i;
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t j = i + rng.uniform_index(frame_order.size() - i);
      std::swap(frame_order[i], frame_order[j]);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto& frame = frames[frame_order[i]];
      BatchItem item;
      item.episode_id = ep;
      item.timestep = frame.timestep;
      item.yaw_deg = frame.yaw_deg;
      item.ref = frame.ref;
      item.rand = frame.rand;
      batch.push_back(std::move(item));
    }
  }
  return batch;
}

}  // namespace

std::pair<EncoderParams, std::vector<StepMetrics>> train_disentangle(
    const std::vector<ProcessedEpisode>& dataset, const DisentangleConfig& config,
    std::size_t workers) {
  validate(config);
  std::size_t total_timesteps = 0;
  for (const auto& episode : dataset) total_timesteps += episode.frames.size();
  if (total_timesteps < static_cast<std::size_t>(config.batch_size)) {
    throw Error(ErrorCode::kEmptyInput,
                "dataset provides " + std::to_string(total_timesteps) +
                    " timesteps, batch needs " + std::to_string(config.batch_size));
  }

  EncoderParams params = init_encoder(config);
  nn::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  nn::AdamState adam(adam_config);
  const auto param_spans = params.param_spans();

  std::vector<StepMetrics> metrics;
  metrics.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    double lr = config.learning_rate;
    if (step >= (config.steps * 17) / 20) {
      lr *= 0.1;
    } else if (step >= (config.steps * 3) / 5) {
      lr *= 0.3;
    }
    adam.set_learning_rate(lr);
    Rng rng(derive_seed(config.seed, 0x62617463ULL, static_cast<std::uint64_t>(step)));
    const auto batch =
        sample_batch(dataset, static_cast<std::size_t>(config.batch_size),
                     static_cast<std::size_t>(config.batch_episode_group), rng);
    TotalLoss loss = loss_total(params, batch, step, config.steps, config, workers);
    if (!std::isfinite(loss.components.total)) {
      throw Error(ErrorCode::kNumerical, "non-finite loss at step " + std::to_string(step));
    }
    adam.step(param_spans, loss.grads.grad_spans());

    StepMetrics m;
    m.step = step;
    m.l_inv = loss.components.inv;
    m.l_dep = loss.components.dep;
    m.l_orth = loss.components.orth;
    m.beta = loss.components.beta;
    m.total = loss.components.total;
    m.dep_skipped = loss.components.dep_skipped;
    metrics.push_back(m);
  }
  return {std::move(params), std::move(metrics)};
}

double eval_retrieval(const EncoderParams& params,
                      const std::vector<ProcessedEpisode>& episodes) {
  std::size_t correct = 0, total = 0;
  for (const auto& episode : episodes) {
    const std::size_t n = episode.frames.size();
    if (n < 2) continue;
    std::vector<Eigen::VectorXd> gallery(n), queries(n);
    for (std::size_t t = 0; t < n; ++t) {
      queries[t] = encoder_forward(params, episode.frames[t].ref).z_inv;
      gallery[t] = encoder_forward(params, episode.frames[t].rand).z_inv;
    }
    for (std::size_t k = 0; k < n; ++k) {
      double best = -1e18;
      std::size_t best_t = 0;
      for (std::size_t t = 0; t < n; ++t) {
        const double score = queries[k].dot(gallery[t]);
        if (score > best) {  // ties keep the lowest timestep
          best = score;
          best_t = t;
        }
      }
      if (best_t == k) ++correct;
      ++total;
    }
  }
  if (total == 0) {
    throw Error(ErrorCode::kEmptyInput, "retrieval needs episodes with >= 2 frames");
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

double ridge_probe_accuracy(const std::vector<Eigen::VectorXd>& features,
                            const std::vector<int>& labels, int classes,
                            std::uint64_t seed) {
  if (features.size() != labels.size() || features.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "features/labels mismatch");
  }
  std::set<int> present(labels.begin(), labels.end());
  if (present.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "probe needs at least 2 classes present");
  }
  const std::size_t n = features.size();
  const int d = static_cast<int>(features[0].size());

  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x70726f62ULL));
  for (std::size_t i = n; i > 1; --i) {
    std::swap(order[i - 1], order[rng.uniform_index(i)]);
  }
  const std::size_t n_train = std::max<std::size_t>(1, (n * 7) / 10);
  const std::size_t n_test = n - n_train;
  if (n_test == 0) {
    throw Error(ErrorCode::kInvalidArgument, "probe needs at least one held-out sample");
  }

  Eigen::MatrixXd x(n_train, d + 1);
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n_train, classes);
  for (std::size_t i = 0; i < n_train; ++i) {
    x.row(i).head(d) = features[order[i]].transpose();
    x(i, d) = 1.0;
    y(i, labels[order[i]]) = 1.0;
  }
  Eigen::MatrixXd gram = x.transpose() * x;
  gram.diagonal().array() += 1e-3;
  const Eigen::MatrixXd w = gram.ldlt().solve(x.transpose() * y);

  std::size_t correct = 0;
  for (std::size_t i = n_train; i < n; ++i) {
    Eigen::VectorXd row(d + 1);
    row.head(d) = features[order[i]];
    row(d) = 1.0;
    const Eigen::VectorXd scores = w.transpose() * row;
    int best = 0;
    for (int c = 1; c < classes; ++c) {
      if (scores[c] > scores[best]) best = c;
    }
    if (best == labels[order[i]]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n_test);
}

ProbeResult eval_view_probe(const EncoderParams& params,
                            const std::vector<ProcessedEpisode>& episodes, int bins,
                            double yaw_range_deg, std::uint64_t seed) {
  if (bins < 2) {
    throw Error(ErrorCode::kInvalidArgument, "probe needs >= 2 bins");
  }
  std::vector<Eigen::VectorXd> dep_features, inv_features;
  std::vector<int> labels;
  for (const auto& episode : episodes) {
    for (const auto& frame : episode.frames) {
      const Embeddings emb = encoder_forward(params, frame.rand);
      dep_features.push_back(emb.z_dep);
      inv_features.push_back(emb.z_inv);
      const double unit = (frame.yaw_deg + yaw_range_deg) / (2.0 * yaw_range_deg);
      int bin = static_cast<int>(std::floor(unit * bins));
      bin = std::clamp(bin, 0, bins - 1);
      labels.push_back(bin);
    }
  }
  ProbeResult result;
  result.acc_dep = ridge_probe_accuracy(dep_features, labels, bins, seed);
  result.acc_inv = ridge_probe_accuracy(inv_features, labels, bins, seed);
  return result;
}

std::vector<nn::NamedTensor> to_tensors(const EncoderParams& params) {
  std::vector<nn::NamedTensor> tensors;
  Tensor2 meta(1, 2);
  meta.at(0, 0) = static_cast<double>(params.input_points);
  meta.at(0, 1) = params.normalize_embeddings ? 1.0 : 0.0;
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
  push_stack("trunk", params.trunk);
  push_stack("head_inv", params.head_inv);
  push_stack("head_dep", params.head_dep);
  return tensors;
}

EncoderParams params_from_tensors(const std::vector<nn::NamedTensor>& tensors) {
  EncoderParams params;
  params.input_points = 0;
  for (const auto& entry : tensors) {
    if (entry.name == "meta" && entry.tensor.cols >= 2) {
      params.input_points = static_cast<int>(entry.tensor.at(0, 0));
      params.normalize_embeddings = entry.tensor.at(0, 1) > 0.5;
    }
  }
  const auto read_stack = [&tensors](const std::string& prefix) {
    std::vector<nn::DenseLayer> layers;
    for (std::size_t i = 0;; ++i) {
      const nn::NamedTensor* w = nullptr;
      const nn::NamedTensor* b = nullptr;
      for (const auto& entry : tensors) {
        if (entry.name == prefix + "." + std::to_string(i) + ".weight") w = &entry;
        if (entry.name == prefix + "." + std::to_string(i) + ".bias") b = &entry;
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
  params.trunk = read_stack("trunk");
  params.head_inv = read_stack("head_inv");
  params.head_dep = read_stack("head_dep");
  if (params.trunk.empty() || params.head_inv.empty() || params.head_dep.empty() ||
      params.input_points < 1) {
    throw Error(ErrorCode::kCorruptHeader, "checkpoint does not describe an encoder");
  }
  params.head_inv.back().activation = nn::Activation::kNone;
  params.head_dep.back().activation = nn::Activation::kNone;
  return params;
}

void save_encoder(const std::string& path, const EncoderParams& params) {
  nn::save_checkpoint(path, to_tensors(params));
}

EncoderParams load_encoder(const std::string& path) {
  return params_from_tensors(nn::load_checkpoint(path));
}

}  // namespace vidpoint::disentangle
