#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "idlink/augment.hpp"
#include "idlink/autodiff.hpp"
#include "idlink/graph.hpp"

namespace idlink {

using ad::Matrix;
using ad::Parameter;
using ad::Tensor;

enum class NormKind { batch, layer };
enum class ModelKind { gcn_supervised, grace, bgrl, lgrace, lbgrl };
enum class DecoderLoss { log_sig, bce };

std::string_view to_string(NormKind k);
std::string_view to_string(ModelKind k);
std::string_view to_string(DecoderLoss k);
NormKind parse_norm(std::string_view s);
ModelKind parse_model(std::string_view s);
DecoderLoss parse_decoder_loss(std::string_view s);
/// bgrl and lbgrl train against an EMA target encoder.
bool is_asymmetric(ModelKind k);

struct EncoderConfig {
  int n_layers = 2;
  int layer_size = 256;
  NormKind norm = NormKind::batch;
  double batchnorm_momentum = 0.99;
  bool weight_standardization = false;

  void validate() const;
  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Which representation anchors the denominator sums of the link contrastive loss.
enum class LinkAnchor { positive, negative };

struct LinkLossOptions {
  LinkAnchor anchor = LinkAnchor::positive;
  /// Add the positive pair's own term to the denominator, InfoNCE style.
  bool include_positive = false;

  friend bool operator==(const LinkLossOptions&, const LinkLossOptions&) = default;
};

/// Everything a training run needs besides the data and the augmentation.
struct TrainConfig {
  EncoderConfig encoder;
  int ct_epochs = 100;
  int batch_size = 256;
  double gnn_lr = 1e-3;
  double pred_lr = 1e-3;
  int proj_hidden = 128;
  DecoderLoss loss_func = DecoderLoss::bce;
  bool mask_input = false;
  double mask_input_rate = 0.1;
  double weight_decay = 1e-5;
  double tau = 0.5;
  double ema_decay = 0.99;
  int decoder_hidden = 256;
  int decoder_epochs = 100;
  LinkLossOptions link_loss;

  void validate() const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Glorot-uniform initialized weight matrix.
Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng);

/// Two-layer MLP: Linear -> activation -> Linear.
class Mlp {
 public:
  enum class Activation { relu, prelu };

  Mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Activation act, Seed seed, std::string name = "mlp");
  Mlp(Mlp&&) = default;
  Mlp(const Mlp&) = delete;

  Tensor forward(const Tensor& x) const;
  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  Eigen::Index in_dim() const { return w1_.value().rows(); }
  Eigen::Index out_dim() const { return w2_.value().cols(); }

 private:
  Activation act_;
  Parameter w1_, b1_, w2_, b2_;
  std::optional<Parameter> slope_;
};

/// Stack of GCN layers, each PReLU(Norm(A_hat * (H * W))) without bias. With weight
/// standardization every W is replaced by its column-standardized version at forward time.
class GcnEncoder {
 public:
  GcnEncoder(Eigen::Index in_dim, const EncoderConfig& cfg, Seed seed);
  GcnEncoder(GcnEncoder&&) = default;
  GcnEncoder(const GcnEncoder&) = delete;

  /// Forward pass with the encoder's own parameters. Training mode normalizes with
  /// batch statistics and updates the running ones.
  Tensor forward(const Graph& view, bool training);
  /// Forward pass with externally supplied parameter tensors, in parameters() order.
  Tensor forward_with(const Graph& view, std::span<const Tensor> params, std::vector<ad::BatchNormState>& bn,
                      bool training) const;
  /// Evaluation-mode embeddings as a plain matrix.
  Matrix embed(const Graph& g) const;

  std::vector<Parameter*> parameters();
  std::vector<const Parameter*> parameters() const;
  std::vector<ad::BatchNormState>& bn_states() { return bn_; }
  const EncoderConfig& config() const { return cfg_; }
  Eigen::Index in_dim() const { return in_dim_; }
  Eigen::Index out_dim() const { return cfg_.layer_size; }

 private:
  struct Layer {
    Parameter weight, gamma, beta, slope;
  };
  Eigen::Index in_dim_;
  EncoderConfig cfg_;
  std::vector<Layer> layers_;
  std::vector<ad::BatchNormState> bn_;
};

/// First-layer input: X * W for dense features, diag(mask) * W for identity features.
Tensor feature_transform(const FeatureMatrix& x, const Tensor& w);

/// Row per edge: mlp(h_u * h_v), or the bare Hadamard product when mlp is null.
Tensor link_representation(const Tensor& h, std::span<const Edge> edges, const Mlp* mlp);

/// InfoNCE loss on already projected views (rows aligned). Returns -J.
Tensor grace_loss_projected(const Tensor& z1, const Tensor& z2, double tau);
Tensor grace_loss(const Tensor& h1, const Tensor& h2, const Mlp& proj, double tau);

/// Link-level contrastive loss over positive and negative link representations of both views.
Tensor lgrace_loss(const Tensor& z1_pos, const Tensor& z2_pos, const Tensor& z1_neg, const Tensor& z2_neg,
                   double tau, const LinkLossOptions& opts = {});

/// -(2/N) sum_i cos(pred_i, target_i); the target is a constant.
Tensor bgrl_loss(const Tensor& online_pred, const Matrix& target);
/// Mean of both directions: (bgrl(q1, y2) + bgrl(q2, y1)) / 2.
Tensor symmetric_bgrl_loss(const Tensor& q1, const Matrix& y2, const Tensor& q2, const Matrix& y1);
/// Same value on aligned link representation sets; throws on misaligned row counts.
Tensor lbgrl_loss(const Tensor& z1, const Matrix& h2);

struct LinkSets {
  std::vector<Edge> pos;
  std::vector<Edge> neg;
};

/// Positives are the edges present in both views; negatives are as many pairs absent
/// from both. Returns nullopt when the views share no edge.
std::optional<LinkSets> select_link_sets(const Graph& a1, const Graph& a2, Seed seed);

/// Trained encoder plus everything that was trained alongside it.
struct TrainState {
  ModelKind kind = ModelKind::grace;
  std::unique_ptr<GcnEncoder> online;
  std::unique_ptr<Mlp> head;  ///< projector (contrastive) or predictor (asymmetric)
  std::vector<ad::EmaShadow> target;  ///< mirrors online->parameters() for asymmetric models
  std::vector<ad::BatchNormState> target_bn;
  int epoch = 0;
  int skipped_epochs = 0;
  Seed seed = 0;
  std::vector<std::pair<int, double>> loss_history;  ///< (epoch, loss)

  Matrix embed(const Graph& g) const { return online->embed(g); }
  std::vector<Tensor> target_tensors() const;
};

struct TrainHooks {
  /// Called once after initialization, before the first epoch.
  std::function<void(const TrainState&)> on_start;
  /// Called after each completed optimization step.
  std::function<void(const TrainState&)> on_step;
};

/// Self-supervised encoder training on the train graph only.
TrainState train_encoder(const EdgeSplit& split, const AugmentationSpec& spec, const std::optional<BlockState>& blocks,
                         ModelKind model, const TrainConfig& cfg, Seed seed, const TrainHooks& hooks = {});

/// MLP link decoder on Hadamard products; outputs logits.
class Decoder {
 public:
  Decoder(Eigen::Index in_dim, int hidden, Seed seed) : mlp_(in_dim, hidden, 1, Mlp::Activation::relu, seed, "dec") {}

  Tensor logits(const Tensor& h, std::span<const Edge> pairs) const {
    return mlp_.forward(link_representation(h, pairs, nullptr));
  }
  std::vector<Parameter*> parameters() { return mlp_.parameters(); }
  std::vector<const Parameter*> parameters() const { return mlp_.parameters(); }

 private:
  Mlp mlp_;
};

/// Loss on one batch of positive and negative logits.
Tensor decoder_loss(const Tensor& pos_logits, const Tensor& neg_logits, DecoderLoss kind);

/// Embeddings for decoder epoch `epoch` (may change when the input is masked).
using EmbeddingSource = std::function<Matrix(int epoch)>;

Decoder train_decoder(const EmbeddingSource& embeddings, const EdgeSplit& split, const TrainConfig& cfg, Seed seed);
Decoder train_decoder(const TrainState& state, const EdgeSplit& split, const TrainConfig& cfg, Seed seed);

struct SupervisedModel {
  std::unique_ptr<GcnEncoder> encoder;
  std::unique_ptr<Decoder> decoder;
  std::vector<std::pair<int, double>> loss_history;
};

/// Encoder and decoder optimized jointly with the decoder loss.
SupervisedModel train_supervised_gcn(const EdgeSplit& split, const TrainConfig& cfg, Seed seed);

/// Frozen embeddings plus decoder.
struct LinkPredictor {
  Matrix embeddings;
  std::shared_ptr<const Decoder> decoder;

  Eigen::VectorXd logits(std::span<const Edge> pairs) const;
  /// Sigmoid of the logits, clamped to the open interval (0, 1).
  Eigen::VectorXd scores(std::span<const Edge> pairs) const;
};

Eigen::VectorXd predict_scores(const LinkPredictor& p, std::span<const Edge> pairs);

}  // namespace idlink
