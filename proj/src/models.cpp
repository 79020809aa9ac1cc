#include "idlink/models.hpp"

#include <fmt/core.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "idlink/error.hpp"
#include "idlink/log.hpp"

namespace idlink {

namespace {

constexpr std::array<std::pair<NormKind, std::string_view>, 2> kNormNames{{
    {NormKind::batch, "batch"},
    {NormKind::layer, "layer"},
}};
constexpr std::array<std::pair<ModelKind, std::string_view>, 5> kModelNames{{
    {ModelKind::gcn_supervised, "gcn_supervised"},
    {ModelKind::grace, "grace"},
    {ModelKind::bgrl, "bgrl"},
    {ModelKind::lgrace, "lgrace"},
    {ModelKind::lbgrl, "lbgrl"},
}};
constexpr std::array<std::pair<DecoderLoss, std::string_view>, 2> kLossNames{{
    {DecoderLoss::log_sig, "log_sig"},
    {DecoderLoss::bce, "bce"},
}};

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E e) {
  for (const auto& [k, s] : table)
    if (k == e) return s;
  throw std::invalid_argument("unknown enum value");
}

template <typename E, std::size_t N>
E parse_name(const std::array<std::pair<E, std::string_view>, N>& table, std::string_view s, const char* what) {
  for (const auto& [k, name] : table)
    if (name == s) return k;
  throw std::invalid_argument(fmt::format("unknown {} '{}'", what, s));
}

void check_range(double v, double lo, double hi, const char* name) {
  if (!(v >= lo && v <= hi)) throw std::invalid_argument(fmt::format("{} = {} outside [{}, {}]", name, v, lo, hi));
}

std::vector<Edge> sample_subset(std::vector<Edge> edges, std::size_t k, Seed seed) {
  if (edges.size() <= k) return edges;
  Rng rng = make_rng(seed);
  for (std::size_t i = 0; i < k; ++i) std::swap(edges[i], edges[i + uniform_index(rng, edges.size() - i)]);
  edges.resize(k);
  return edges;
}

std::vector<int> sample_rows(int n, int k, Seed seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  for (int i = 0; i < k; ++i) std::swap(idx[i], idx[i + uniform_index(rng, n - i)]);
  idx.resize(k);
  return idx;
}

std::vector<Edge> shared_edges(const Graph& a1, const Graph& a2) {
  if (a1.num_nodes() != a2.num_nodes()) throw std::invalid_argument("views have different node sets");
  std::vector<Edge> out;
  for (const Edge& e : a1.edges())
    if (a2.contains(e.u, e.v)) out.push_back(e);
  return out;
}

void check_finite(double loss, std::string_view what, int epoch) {
  if (!std::isfinite(loss))
    throw TrainingDiverged(fmt::format("{} diverged at epoch {} (loss {})", what, epoch, loss));
}

std::vector<Parameter*> concat(std::vector<Parameter*> a, const std::vector<Parameter*>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

}  // namespace

std::string_view to_string(NormKind k) { return name_of(kNormNames, k); }
std::string_view to_string(ModelKind k) { return name_of(kModelNames, k); }
std::string_view to_string(DecoderLoss k) { return name_of(kLossNames, k); }
NormKind parse_norm(std::string_view s) { return parse_name(kNormNames, s, "norm"); }
ModelKind parse_model(std::string_view s) { return parse_name(kModelNames, s, "model"); }
DecoderLoss parse_decoder_loss(std::string_view s) { return parse_name(kLossNames, s, "loss function"); }

bool is_asymmetric(ModelKind k) { return k == ModelKind::bgrl || k == ModelKind::lbgrl; }

void EncoderConfig::validate() const {
  check_range(n_layers, 1, 4, "n_layers");
  check_range(layer_size, 1, 4096, "layer_size");
  check_range(batchnorm_momentum, 0.0, 1.0, "batchnorm_momentum");
}

void TrainConfig::validate() const {
  encoder.validate();
  if (ct_epochs < 0) throw std::invalid_argument("ct_epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be positive");
  if (gnn_lr <= 0 || pred_lr <= 0) throw std::invalid_argument("learning rates must be positive");
  if (proj_hidden < 1 || decoder_hidden < 1) throw std::invalid_argument("hidden sizes must be positive");
  if (decoder_epochs < 0) throw std::invalid_argument("decoder_epochs must be non-negative");
  if (weight_decay < 0) throw std::invalid_argument("weight_decay must be non-negative");
  if (tau <= 0) throw std::invalid_argument("tau must be positive");
  check_range(ema_decay, 0.0, 1.0, "ema_decay");
  check_range(mask_input_rate, 0.0, 0.9, "mask_input_rate");
}

Matrix glorot(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = (2.0 * uniform01(rng) - 1.0) * a;
  return m;
}

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(Eigen::Index in, Eigen::Index hidden, Eigen::Index out, Activation act, Seed seed, std::string name)
    : act_(act),
      w1_(name + ".w1", Matrix::Zero(in, hidden)),
      b1_(name + ".b1", Matrix::Zero(1, hidden)),
      w2_(name + ".w2", Matrix::Zero(hidden, out)),
      b2_(name + ".b2", Matrix::Zero(1, out)) {
  Rng rng = make_rng(seed);
  w1_.tensor.mutable_value() = glorot(in, hidden, rng);
  w2_.tensor.mutable_value() = glorot(hidden, out, rng);
  if (act_ == Activation::prelu) slope_.emplace(name + ".slope", Matrix::Constant(1, 1, 0.25));
}

Tensor Mlp::forward(const Tensor& x) const {
  if (x.cols() != in_dim())
    throw std::invalid_argument(fmt::format("mlp expects {} input columns, got {}", in_dim(), x.cols()));
  Tensor h = add(ad::matmul(x, w1_.tensor), b1_.tensor);
  h = act_ == Activation::relu ? ad::relu(h) : ad::prelu(h, slope_->tensor);
  return add(ad::matmul(h, w2_.tensor), b2_.tensor);
}

std::vector<Parameter*> Mlp::parameters() {
  std::vector<Parameter*> out{&w1_, &b1_, &w2_, &b2_};
  if (slope_) out.push_back(&*slope_);
  return out;
}

std::vector<const Parameter*> Mlp::parameters() const {
  std::vector<const Parameter*> out{&w1_, &b1_, &w2_, &b2_};
  if (slope_) out.push_back(&*slope_);
  return out;
}

// ---------------------------------------------------------------------------
// Encoder

Tensor feature_transform(const FeatureMatrix& x, const Tensor& w) {
  if (x.cols() != w.rows())
    throw std::invalid_argument(fmt::format("features have {} columns, weight expects {}", x.cols(), w.rows()));
  if (x.is_identity()) return ad::scale_rows(w, x.column_mask());
  return ad::matmul(Tensor::constant(x.values()), w);
}

GcnEncoder::GcnEncoder(Eigen::Index in_dim, const EncoderConfig& cfg, Seed seed) : in_dim_(in_dim), cfg_(cfg) {
  cfg_.validate();
  Rng rng = make_rng(seed);
  Eigen::Index prev = in_dim;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = fmt::format("enc.{}", l);
    const Eigen::Index d = cfg_.layer_size;
    layers_.push_back(Layer{Parameter(p + ".weight", glorot(prev, d, rng)),
                            Parameter(p + ".gamma", Matrix::Ones(1, d)),
                            Parameter(p + ".beta", Matrix::Zero(1, d)),
                            Parameter(p + ".slope", Matrix::Constant(1, 1, 0.25))});
    prev = d;
  }
  bn_.resize(cfg_.n_layers);
}

Tensor GcnEncoder::forward(const Graph& view, bool training) {
  std::vector<Tensor> params;
  for (Parameter* p : parameters()) params.push_back(p->tensor);
  return forward_with(view, params, bn_, training);
}

Tensor GcnEncoder::forward_with(const Graph& view, std::span<const Tensor> params,
                                std::vector<ad::BatchNormState>& bn, bool training) const {
  if (params.size() != layers_.size() * 4) throw std::invalid_argument("encoder parameter count mismatch");
  if (view.features().rows() != view.num_nodes())
    throw std::invalid_argument("feature rows do not match the graph's node count");
  if (bn.size() != layers_.size()) bn.resize(layers_.size());
  auto adj = std::make_shared<const SparseMatrix>(normalized_adjacency(view));
  Tensor h;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const Tensor w = cfg_.weight_standardization ? ad::normalize_columns(params[4 * l]) : params[4 * l];
    const Tensor& gamma = params[4 * l + 1];
    const Tensor& beta = params[4 * l + 2];
    const Tensor& slope = params[4 * l + 3];
    Tensor xw = l == 0 ? feature_transform(view.features(), w) : ad::matmul(h, w);
    Tensor ah = ad::sparse_matmul(adj, xw);
    Tensor normed = cfg_.norm == NormKind::batch
                        ? ad::batch_norm(ah, gamma, beta, bn[l], cfg_.batchnorm_momentum, training)
                        : ad::layer_norm(ah, gamma, beta);
    h = ad::prelu(normed, slope);
  }
  return h;
}

Matrix GcnEncoder::embed(const Graph& g) const {
  std::vector<Tensor> params;
  for (const Parameter* p : parameters()) params.push_back(Tensor::constant(p->value()));
  std::vector<ad::BatchNormState> bn = bn_;
  return forward_with(g, params, bn, false).value();
}

std::vector<Parameter*> GcnEncoder::parameters() {
  std::vector<Parameter*> out;
  for (Layer& l : layers_) out.insert(out.end(), {&l.weight, &l.gamma, &l.beta, &l.slope});
  return out;
}

std::vector<const Parameter*> GcnEncoder::parameters() const {
  std::vector<const Parameter*> out;
  for (const Layer& l : layers_) out.insert(out.end(), {&l.weight, &l.gamma, &l.beta, &l.slope});
  return out;
}

// ---------------------------------------------------------------------------
// Losses

Tensor link_representation(const Tensor& h, std::span<const Edge> edges, const Mlp* mlp) {
  std::vector<int> us(edges.size());
  std::vector<int> vs(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) {
    us[i] = edges[i].u;
    vs[i] = edges[i].v;
  }
  Tensor r = ad::mul(ad::gather_rows(h, us), ad::gather_rows(h, vs));
  return mlp ? mlp->forward(r) : r;
}

Tensor grace_loss_projected(const Tensor& z1, const Tensor& z2, double tau) {
  if (tau <= 0) throw std::invalid_argument("tau must be positive");
  if (z1.rows() != z2.rows() || z1.cols() != z2.cols() || z1.rows() == 0)
    throw std::invalid_argument("grace_loss: views must be non-empty and equally shaped");
  const double inv_tau = 1.0 / tau;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Tensor n1 = ad::row_l2_normalize(z1);
  Tensor n2 = ad::row_l2_normalize(z2);
  auto side = [&](const Tensor& a, const Tensor& b) {
    Tensor inter = ad::scalar_mul(ad::matmul_nt(a, b), inv_tau);
    Tensor intra = ad::fill_diagonal(ad::scalar_mul(ad::matmul_nt(a, a), inv_tau), neg_inf);
    return ad::sum(ad::sub(ad::diagonal(inter), ad::logsumexp_rows(ad::concat_cols(inter, intra))));
  };
  const double n = static_cast<double>(z1.rows());
  return ad::scalar_mul(ad::add(side(n1, n2), side(n2, n1)), -1.0 / (2.0 * n));
}

Tensor grace_loss(const Tensor& h1, const Tensor& h2, const Mlp& proj, double tau) {
  return grace_loss_projected(proj.forward(h1), proj.forward(h2), tau);
}

Tensor lgrace_loss(const Tensor& z1_pos, const Tensor& z2_pos, const Tensor& z1_neg, const Tensor& z2_neg,
                   double tau, const LinkLossOptions& opts) {
  if (tau <= 0) throw std::invalid_argument("tau must be positive");
  if (z1_pos.rows() == 0 || z1_pos.rows() != z2_pos.rows())
    throw std::invalid_argument("lgrace_loss: positive sets must be non-empty and equally sized");
  if (z1_neg.rows() == 0 || z1_neg.rows() != z2_neg.rows())
    throw std::invalid_argument("lgrace_loss: negative sets must be non-empty and equally sized");
  if (z1_pos.cols() != z2_pos.cols() || z1_pos.cols() != z1_neg.cols() || z1_neg.cols() != z2_neg.cols())
    throw std::invalid_argument("lgrace_loss: representation widths differ");
  const Eigen::Index n = z1_pos.rows();
  if (opts.anchor == LinkAnchor::negative && z1_neg.rows() < n)
    throw std::invalid_argument("lgrace_loss: negative anchoring needs at least as many negatives as positives");

  const double inv_tau = 1.0 / tau;
  const double neg_inf = -std::numeric_limits<double>::infinity();
  Tensor p1 = ad::row_l2_normalize(z1_pos);
  Tensor p2 = ad::row_l2_normalize(z2_pos);
  Tensor q1 = ad::row_l2_normalize(z1_neg);
  Tensor q2 = ad::row_l2_normalize(z2_neg);
  std::vector<int> first_n(static_cast<std::size_t>(n));
  std::iota(first_n.begin(), first_n.end(), 0);

  auto side = [&](const Tensor& pa, const Tensor& pb, const Tensor& qa, const Tensor& qb) {
    Tensor anchor = opts.anchor == LinkAnchor::positive ? pa : ad::gather_rows(qa, first_n);
    Tensor pos = ad::scalar_mul(ad::row_dot(pa, pb), inv_tau);
    Tensor inter = ad::scalar_mul(ad::matmul_nt(anchor, qb), inv_tau);
    Tensor intra = ad::fill_diagonal(ad::scalar_mul(ad::matmul_nt(anchor, qa), inv_tau), neg_inf);
    Tensor terms = ad::concat_cols(inter, intra);
    if (opts.include_positive) terms = ad::concat_cols(pos, terms);
    return ad::sum(ad::sub(pos, ad::logsumexp_rows(terms)));
  };
  return ad::scalar_mul(ad::add(side(p1, p2, q1, q2), side(p2, p1, q2, q1)), -1.0 / (2.0 * static_cast<double>(n)));
}

Tensor bgrl_loss(const Tensor& online_pred, const Matrix& target) {
  if (online_pred.rows() != target.rows() || online_pred.cols() != target.cols() || target.rows() == 0)
    throw std::invalid_argument(fmt::format("bgrl_loss: prediction {}x{} and target {}x{} are misaligned",
                                            online_pred.rows(), online_pred.cols(), target.rows(), target.cols()));
  Tensor cos = ad::row_cosine_similarity(online_pred, Tensor::constant(target));
  return ad::scalar_mul(ad::sum(cos), -2.0 / static_cast<double>(target.rows()));
}

Tensor symmetric_bgrl_loss(const Tensor& q1, const Matrix& y2, const Tensor& q2, const Matrix& y1) {
  return ad::scalar_mul(ad::add(bgrl_loss(q1, y2), bgrl_loss(q2, y1)), 0.5);
}

Tensor lbgrl_loss(const Tensor& z1, const Matrix& h2) { return bgrl_loss(z1, h2); }

std::optional<LinkSets> select_link_sets(const Graph& a1, const Graph& a2, Seed seed) {
  std::vector<Edge> pos = shared_edges(a1, a2);
  if (pos.empty()) return std::nullopt;
  LinkSets out;
  out.neg = sample_negative_pairs(a1, pos.size(), a2.edge_set(), seed);
  out.pos = std::move(pos);
  return out;
}

// ---------------------------------------------------------------------------
// Self-supervised training

std::vector<Tensor> TrainState::target_tensors() const {
  std::vector<Tensor> out;
  out.reserve(target.size());
  for (const auto& t : target) out.push_back(Tensor::constant(t.values));
  return out;
}

namespace {

/// One epoch's loss, or an undefined tensor when the epoch has nothing to train on.
Tensor epoch_loss(TrainState& st, const Graph& v1, const Graph& v2, const TrainConfig& cfg, Seed es) {
  GcnEncoder& enc = *st.online;
  const Mlp& head = *st.head;
  const auto cap = static_cast<std::size_t>(cfg.batch_size);

  switch (st.kind) {
    case ModelKind::grace: {
      Tensor h1 = enc.forward(v1, true);
      Tensor h2 = enc.forward(v2, true);
      const auto n = static_cast<int>(h1.rows());
      if (static_cast<std::size_t>(n) > cap) {
        const std::vector<int> idx = sample_rows(n, cfg.batch_size, derive_seed(es, "batch"));
        h1 = ad::gather_rows(h1, idx);
        h2 = ad::gather_rows(h2, idx);
      }
      return grace_loss(h1, h2, head, cfg.tau);
    }
    case ModelKind::lgrace: {
      std::vector<Edge> pos = sample_subset(shared_edges(v1, v2), cap, derive_seed(es, "batch"));
      if (pos.empty()) return {};
      const std::vector<Edge> neg = sample_negative_pairs(v1, pos.size(), v2.edge_set(), derive_seed(es, "negatives"));
      Tensor h1 = enc.forward(v1, true);
      Tensor h2 = enc.forward(v2, true);
      return lgrace_loss(link_representation(h1, pos, &head), link_representation(h2, pos, &head),
                         link_representation(h1, neg, &head), link_representation(h2, neg, &head), cfg.tau,
                         cfg.link_loss);
    }
    case ModelKind::bgrl:
    case ModelKind::lbgrl: {
      std::vector<Edge> pos;
      if (st.kind == ModelKind::lbgrl) {
        pos = sample_subset(shared_edges(v1, v2), cap, derive_seed(es, "batch"));
        if (pos.empty()) return {};
      }
      const std::vector<Tensor> target = st.target_tensors();
      Tensor h1 = enc.forward(v1, true);
      Tensor h2 = enc.forward(v2, true);
      Tensor y1 = enc.forward_with(v1, target, st.target_bn, true);
      Tensor y2 = enc.forward_with(v2, target, st.target_bn, true);
      if (st.kind == ModelKind::bgrl) return symmetric_bgrl_loss(head.forward(h1), y2.value(), head.forward(h2), y1.value());
      Tensor q1 = link_representation(h1, pos, &head);
      Tensor q2 = link_representation(h2, pos, &head);
      const Matrix t1 = link_representation(y1, pos, nullptr).value();
      const Matrix t2 = link_representation(y2, pos, nullptr).value();
      return ad::scalar_mul(ad::add(lbgrl_loss(q1, t2), lbgrl_loss(q2, t1)), 0.5);
    }
    case ModelKind::gcn_supervised:
      break;
  }
  throw std::invalid_argument("train_encoder: the supervised GCN has no self-supervised stage");
}

}  // namespace

TrainState train_encoder(const EdgeSplit& split, const AugmentationSpec& spec, const std::optional<BlockState>& blocks,
                         ModelKind model, const TrainConfig& cfg, Seed seed, const TrainHooks& hooks) {
  if (model == ModelKind::gcn_supervised)
    throw std::invalid_argument("train_encoder: the supervised GCN has no self-supervised stage");
  cfg.validate();
  const Graph& g = split.train_graph;

  TrainState st;
  st.kind = model;
  st.seed = seed;
  st.online = std::make_unique<GcnEncoder>(g.features().cols(), cfg.encoder, derive_seed(seed, "init_encoder"));
  const Eigen::Index d = st.online->out_dim();
  st.head = std::make_unique<Mlp>(d, cfg.proj_hidden, d, Mlp::Activation::prelu, derive_seed(seed, "init_head"),
                                  is_asymmetric(model) ? "pred" : "proj");
  const std::vector<Parameter*> enc_params = st.online->parameters();
  if (is_asymmetric(model)) {
    for (const Parameter* p : enc_params) st.target.emplace_back(*p, cfg.ema_decay);
    st.target_bn.resize(enc_params.size() / 4);
  }
  const std::vector<Parameter*> params = concat(enc_params, st.head->parameters());
  const ad::AdamOptions adam{.lr = cfg.gnn_lr, .weight_decay = cfg.weight_decay};

  ViewGenerator views(g, spec, blocks);
  const Seed epoch_root = derive_seed(seed, "epochs");
  if (hooks.on_start) hooks.on_start(st);
  for (int epoch = 0; epoch < cfg.ct_epochs; ++epoch) {
    const Seed es = derive_seed(epoch_root, static_cast<std::uint64_t>(epoch));
    auto [v1, v2] = views(derive_seed(es, "views"));
    Tensor loss = epoch_loss(st, v1, v2, cfg, es);
    if (!loss.defined()) {
      ++st.skipped_epochs;
      log_warn("{} epoch {}: views share no edge, epoch skipped", to_string(model), epoch);
      continue;
    }
    check_finite(loss.item(), to_string(model), epoch);
    ad::zero_grad(params);
    ad::backward(loss);
    ad::adam_step(params, adam);
    if (is_asymmetric(model))
      for (std::size_t i = 0; i < enc_params.size(); ++i) ad::ema_update(st.target[i], *enc_params[i]);
    st.epoch = epoch + 1;
    st.loss_history.emplace_back(epoch, loss.item());
    if (hooks.on_step) hooks.on_step(st);
  }
  ad::zero_grad(params);
  return st;
}

// ---------------------------------------------------------------------------
// Decoder and supervised baseline

Tensor decoder_loss(const Tensor& pos_logits, const Tensor& neg_logits, DecoderLoss kind) {
  if (pos_logits.rows() == 0 || neg_logits.rows() == 0) throw std::invalid_argument("decoder_loss: empty batch");
  if (kind == DecoderLoss::log_sig) {
    if (pos_logits.rows() != neg_logits.rows())
      throw std::invalid_argument("decoder_loss: log_sig pairs positives with negatives one to one");
    return ad::scalar_mul(ad::mean(ad::log_sigmoid(ad::sub(pos_logits, neg_logits))), -1.0);
  }
  Tensor ll = ad::concat_rows(ad::log_sigmoid(pos_logits), ad::log_sigmoid(ad::scalar_mul(neg_logits, -1.0)));
  return ad::scalar_mul(ad::mean(ll), -1.0);
}

namespace {

std::size_t decoder_batch_size(const EdgeSplit& split, const TrainConfig& cfg) {
  if (split.train_pos.empty()) throw std::invalid_argument("decoder training needs train positives");
  return std::min(static_cast<std::size_t>(cfg.batch_size), split.train_pos.size());
}

Graph masked_input(const Graph& g, const TrainConfig& cfg, Seed seed, int epoch) {
  if (!cfg.mask_input) return g;
  return g.with_features(mask_features_random(g.features(), cfg.mask_input_rate,
                                              derive_seed(derive_seed(seed, "mask_input"), static_cast<std::uint64_t>(epoch))));
}

}  // namespace

Decoder train_decoder(const EmbeddingSource& embeddings, const EdgeSplit& split, const TrainConfig& cfg, Seed seed) {
  cfg.validate();
  const std::size_t bs = decoder_batch_size(split, cfg);
  Matrix h0 = embeddings(0);
  if (h0.rows() != split.num_nodes()) throw std::invalid_argument("embedding rows do not match the split's node count");
  Decoder dec(h0.cols(), cfg.decoder_hidden, derive_seed(seed, "init_decoder"));
  const std::vector<Parameter*> params = dec.parameters();
  const ad::AdamOptions adam{.lr = cfg.pred_lr, .weight_decay = cfg.weight_decay};
  std::vector<Edge> order = split.train_pos;
  const Seed epoch_root = derive_seed(seed, "epochs");
  const EdgeSet none;

  for (int epoch = 0; epoch < cfg.decoder_epochs; ++epoch) {
    const Seed es = derive_seed(epoch_root, static_cast<std::uint64_t>(epoch));
    Tensor h = Tensor::constant(epoch == 0 ? std::move(h0) : embeddings(epoch));
    Rng rng = make_rng(derive_seed(es, "shuffle"));
    shuffle(order.begin(), order.end(), rng);
    std::uint64_t b = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++b) {
      const std::span<const Edge> batch(order.data() + start, std::min(bs, order.size() - start));
      const std::vector<Edge> neg = sample_negative_pairs(split.train_graph, batch.size(), none, derive_seed(es, b));
      Tensor loss = decoder_loss(dec.logits(h, batch), dec.logits(h, neg), cfg.loss_func);
      check_finite(loss.item(), "decoder", epoch);
      ad::zero_grad(params);
      ad::backward(loss);
      ad::adam_step(params, adam);
    }
  }
  ad::zero_grad(params);
  return dec;
}

Decoder train_decoder(const TrainState& state, const EdgeSplit& split, const TrainConfig& cfg, Seed seed) {
  if (!cfg.mask_input) {
    const Matrix h = state.embed(split.train_graph);
    return train_decoder([&h](int) { return h; }, split, cfg, seed);
  }
  return train_decoder(
      [&](int epoch) { return state.embed(masked_input(split.train_graph, cfg, seed, epoch)); }, split, cfg, seed);
}

SupervisedModel train_supervised_gcn(const EdgeSplit& split, const TrainConfig& cfg, Seed seed) {
  cfg.validate();
  const std::size_t bs = decoder_batch_size(split, cfg);
  const Graph& g = split.train_graph;
  SupervisedModel m;
  m.encoder = std::make_unique<GcnEncoder>(g.features().cols(), cfg.encoder, derive_seed(seed, "init_encoder"));
  m.decoder = std::make_unique<Decoder>(m.encoder->out_dim(), cfg.decoder_hidden, derive_seed(seed, "init_decoder"));
  const std::vector<Parameter*> enc_params = m.encoder->parameters();
  const std::vector<Parameter*> dec_params = m.decoder->parameters();
  const ad::AdamOptions enc_adam{.lr = cfg.gnn_lr, .weight_decay = cfg.weight_decay};
  const ad::AdamOptions dec_adam{.lr = cfg.pred_lr, .weight_decay = cfg.weight_decay};
  std::vector<Edge> order = split.train_pos;
  const Seed epoch_root = derive_seed(seed, "epochs");
  const EdgeSet none;

  for (int epoch = 0; epoch < cfg.decoder_epochs; ++epoch) {
    const Seed es = derive_seed(epoch_root, static_cast<std::uint64_t>(epoch));
    const Graph input = masked_input(g, cfg, seed, epoch);
    Rng rng = make_rng(derive_seed(es, "shuffle"));
    shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::uint64_t b = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++b) {
      const std::span<const Edge> batch(order.data() + start, std::min(bs, order.size() - start));
      const std::vector<Edge> neg = sample_negative_pairs(g, batch.size(), none, derive_seed(es, b));
      Tensor h = m.encoder->forward(input, true);
      Tensor loss = decoder_loss(m.decoder->logits(h, batch), m.decoder->logits(h, neg), cfg.loss_func);
      check_finite(loss.item(), "gcn_supervised", epoch);
      ad::zero_grad(enc_params);
      ad::zero_grad(dec_params);
      ad::backward(loss);
      ad::adam_step(enc_params, enc_adam);
      ad::adam_step(dec_params, dec_adam);
      epoch_loss += loss.item();
    }
    m.loss_history.emplace_back(epoch, epoch_loss / static_cast<double>(b));
  }
  ad::zero_grad(enc_params);
  ad::zero_grad(dec_params);
  return m;
}

// ---------------------------------------------------------------------------
// Inference

Eigen::VectorXd LinkPredictor::logits(std::span<const Edge> pairs) const {
  if (pairs.empty()) return Eigen::VectorXd();
  return decoder->logits(Tensor::constant(embeddings), pairs).value().col(0);
}

Eigen::VectorXd LinkPredictor::scores(std::span<const Edge> pairs) const {
  const double lo = std::numeric_limits<double>::min();
  const double hi = std::nextafter(1.0, 0.0);
  return logits(pairs).unaryExpr([lo, hi](double t) {
    const double s = t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t));
    return std::clamp(s, lo, hi);
  });
}

Eigen::VectorXd predict_scores(const LinkPredictor& p, std::span<const Edge> pairs) { return p.scores(pairs); }

}  // namespace idlink
