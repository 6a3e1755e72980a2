#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vidpoint/checkpoint.hpp"
#include "vidpoint/geometry.hpp"
#include "vidpoint/nn.hpp"
#include "vidpoint/rng.hpp"

namespace vidpoint::disentangle {

using geometry::PointCloud;

struct DisentangleConfig {
  std::vector<int> trunk_widths = {64, 128};  // two shared per-point layers
  std::vector<int> head_widths = {128};       // hidden widths before the embedding
  int embedding_dim = 64;                     // d
  double temperature = 0.1;                   // tau
  double orth_weight = 0.1;                   // lambda
  double ramp_fraction = 0.5;                 // rho
  int batch_size = 32;
  int batch_episode_group = 4;  // same-episode timesteps per batch group
  double learning_rate = 1e-3;
  int steps = 2000;
  std::uint64_t seed = 0;
  int input_points = 512;
  bool normalize_embeddings = true;
  double beta_scale = 1.0;  // 0 ablates the dep/orth terms entirely
};

void validate(const DisentangleConfig& config);

/// Shared trunk theta (per-point layers + maxpool) branching into two
/// structurally identical heads: phi (view-invariant) and psi
/// (view-dependent). Emitted embeddings are L2-normalized when enabled.
struct EncoderParams {
  std::vector<nn::DenseLayer> trunk;
  std::vector<nn::DenseLayer> head_inv;
  std::vector<nn::DenseLayer> head_dep;
  int input_points = 512;
  bool normalize_embeddings = true;

  std::vector<std::span<double>> param_spans();
};

EncoderParams init_encoder(const DisentangleConfig& config);

struct Embeddings {
  Eigen::VectorXd z_inv;
  Eigen::VectorXd z_dep;
};
Embeddings encoder_forward(const EncoderParams& params, const PointCloud& cloud);

/// Eq.-1-style InfoNCE with dot-product similarity, stabilized by max
/// subtraction: -log(exp(q.pos/tau) / (exp(q.pos/tau) + sum exp(q.neg/tau))).
double info_nce(const Eigen::VectorXd& q, const Eigen::VectorXd& pos,
                const std::vector<Eigen::VectorXd>& negs, double tau);

/// InfoNCE value plus analytic gradients w.r.t. every input vector.
struct InfoNceGradients {
  double value = 0.0;
  Eigen::VectorXd q;
  Eigen::VectorXd pos;
  std::vector<Eigen::VectorXd> negs;
};
InfoNceGradients info_nce_with_gradients(const Eigen::VectorXd& q,
                                         const Eigen::VectorXd& pos,
                                         const std::vector<Eigen::VectorXd>& negs,
                                         double tau);

/// Embedding-level view of one batch; index k addresses one (ref, rand)
/// pair plus its episode/timestep identity.
struct EmbeddingBatch {
  std::vector<Eigen::VectorXd> inv_ref, inv_rand, dep_ref, dep_rand;
  std::vector<std::size_t> episode_ids;
  std::vector<int> timesteps;

  std::size_t size() const { return inv_ref.size(); }
};

/// Invariance loss for anchor k: query phi(ref_k), positive phi(rand_k),
/// negatives phi(rand_i) for i != k.
double loss_inv(const EmbeddingBatch& batch, std::size_t k, double tau);

/// Divergence loss for anchor k: query psi(ref_k), positive psi(ref_t) for
/// one seeded same-episode t != k, negatives psi(rand_i) over ALL i.
/// Returns nullopt (anchor skipped) when no eligible positive exists.
std::optional<double> loss_dep(const EmbeddingBatch& batch, std::size_t k, double tau,
                               Rng& rng);

/// (|z_inv_ref . z_dep_ref| + |z_inv_rand . z_dep_rand|) / 2.
double loss_orth(const Eigen::VectorXd& z_inv_ref, const Eigen::VectorXd& z_dep_ref,
                 const Eigen::VectorXd& z_inv_rand, const Eigen::VectorXd& z_dep_rand);

/// beta = min(1, step / (rho * total_steps)); beta(0) = 0.
double beta_schedule(std::int64_t step, std::int64_t total_steps, double ramp_fraction);

struct BatchItem {
  std::size_t episode_id = 0;
  int timestep = 0;
  double yaw_deg = 0.0;
  PointCloud ref;
  PointCloud rand;
};

struct EncoderGrads {
  std::vector<nn::LayerGrad> trunk;
  std::vector<nn::LayerGrad> head_inv;
  std::vector<nn::LayerGrad> head_dep;

  std::vector<std::span<const double>> grad_spans() const;
  void add(const EncoderGrads& other);
  void scale(double factor);
};

EncoderGrads zero_grads(const EncoderParams& params);

struct LossComponents {
  double total = 0.0;
  double inv = 0.0;
  double dep = 0.0;
  double orth = 0.0;
  double beta = 0.0;
  std::size_t dep_skipped = 0;
};

struct TotalLoss {
  LossComponents components;
  EncoderGrads grads;
};

/// L_VID = L_inv + beta(step) * (L_dep + lambda * L_orth), each term the
/// mean over its anchors, with full analytic gradients for theta/phi/psi.
TotalLoss loss_total(const EncoderParams& params, const std::vector<BatchItem>& batch,
                     std::int64_t step, std::int64_t total_steps,
                     const DisentangleConfig& config, std::size_t workers = 1);

/// Pipeline-processed (and, when enabled, ViewNet-aligned) episode data.
struct ProcessedFrame {
  int timestep = 0;
  double yaw_deg = 0.0;
  PointCloud ref;
  PointCloud rand;
};
struct ProcessedEpisode {
  std::vector<ProcessedFrame> frames;
};

struct StepMetrics {
  std::int64_t step = 0;
  double l_inv = 0.0;
  double l_dep = 0.0;
  double l_orth = 0.0;
  double beta = 0.0;
  double total = 0.0;
  std::size_t dep_skipped = 0;
};

/// Seeded minibatch loop over episode pairs with Adam updates; metrics are
/// logged every step; bitwise deterministic for a given seed.
std::pair<EncoderParams, std::vector<StepMetrics>> train_disentangle(
    const std::vector<ProcessedEpisode>& dataset, const DisentangleConfig& config,
    std::size_t workers = 1);

/// Cross-view retrieval: per timestep, query z_inv(ref), gallery
/// z_inv(rand) of every timestep in the same episode; top-1 accuracy.
double eval_retrieval(const EncoderParams& params,
                      const std::vector<ProcessedEpisode>& episodes);

/// Closed-form one-vs-rest ridge classifier accuracy on a seeded 70/30
/// split; exposed so oracle features can validate the probe itself.
double ridge_probe_accuracy(const std::vector<Eigen::VectorXd>& features,
                            const std::vector<int>& labels, int classes,
                            std::uint64_t seed);

struct ProbeResult {
  double acc_dep = 0.0;
  double acc_inv = 0.0;
};

/// Yaw-bin linear probes on frozen z_dep and z_inv of the random views.
ProbeResult eval_view_probe(const EncoderParams& params,
                            const std::vector<ProcessedEpisode>& episodes, int bins,
                            double yaw_range_deg, std::uint64_t seed);

std::vector<nn::NamedTensor> to_tensors(const EncoderParams& params);
EncoderParams params_from_tensors(const std::vector<nn::NamedTensor>& tensors);
void save_encoder(const std::string& path, const EncoderParams& params);
EncoderParams load_encoder(const std::string& path);

}  // namespace vidpoint::disentangle
