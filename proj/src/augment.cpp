#include "idlink/augment.hpp"

#include <array>
#include <cmath>

#include "idlink/error.hpp"
#include "idlink/log.hpp"

namespace idlink {

namespace {

constexpr std::array<std::pair<AugmentationKind, std::string_view>, 9> kKindNames{{
    {AugmentationKind::random, "random"},
    {AugmentationKind::deg, "deg"},
    {AugmentationKind::evc, "evc"},
    {AugmentationKind::pr, "pr"},
    {AugmentationKind::scom, "scom"},
    {AugmentationKind::sbm, "sbm"},
    {AugmentationKind::sbm2, "sbm2"},
    {AugmentationKind::sbm_oracle, "sbm_oracle"},
    {AugmentationKind::sbm2_oracle, "sbm2_oracle"},
}};

}  // namespace

std::string_view to_string(AugmentationKind kind) {
  for (auto [k, name] : kKindNames)
    if (k == kind) return name;
  return "?";
}

AugmentationKind parse_augmentation(std::string_view name) {
  for (auto [k, n] : kKindNames)
    if (n == name) return k;
  throw std::invalid_argument(fmt::format("unknown augmentation '{}'", name));
}

bool needs_block_state(AugmentationKind kind) { return kind == AugmentationKind::scom || is_sbm(kind); }

bool is_sbm(AugmentationKind kind) {
  return kind == AugmentationKind::sbm || kind == AugmentationKind::sbm2 || is_oracle(kind);
}

bool is_oracle(AugmentationKind kind) {
  return kind == AugmentationKind::sbm_oracle || kind == AugmentationKind::sbm2_oracle;
}

void AugmentationSpec::validate() const {
  for (double r : {drop_edge_rate_1, drop_edge_rate_2, drop_feature_rate_1, drop_feature_rate_2})
    if (!(r >= 0.0 && r <= 0.9 + 1e-12))
      throw std::invalid_argument(fmt::format("augmentation rate {} outside [0, 0.9]", r));
  if (!(cutoff > 0.0 && cutoff <= 0.95 + 1e-12))
    throw std::invalid_argument(fmt::format("adaptive cutoff {} outside (0, 0.95]", cutoff));
}

// ---------------------------------------------------------------------------
// Centralities

namespace {

Eigen::VectorXd eigenvector_centrality(const Graph& g, const CentralityOptions& opts) {
  const NodeId n = g.num_nodes();
  if (n == 0) return {};
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  Eigen::VectorXd next(n);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    for (NodeId i = 0; i < n; ++i) {
      double acc = opts.shift * x(i);
      for (NodeId j : g.neighbors(i)) acc += x(j);
      next(i) = acc;
    }
    const double norm = next.norm();
    if (norm == 0.0) return Eigen::VectorXd::Zero(n);
    next /= norm;
    const double diff = (next - x).lpNorm<1>();
    x.swap(next);
    if (diff < static_cast<double>(n) * opts.tol) return x.cwiseMax(0.0);
  }
  throw ConvergenceError(fmt::format("eigenvector centrality did not converge in {} iterations", opts.max_iter));
}

Eigen::VectorXd pagerank(const Graph& g, const CentralityOptions& opts) {
  const NodeId n = g.num_nodes();
  if (n == 0) return {};
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::VectorXd x = Eigen::VectorXd::Constant(n, inv_n);
  Eigen::VectorXd next(n);
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    double dangling = 0.0;
    for (NodeId i = 0; i < n; ++i)
      if (g.degree(i) == 0) dangling += x(i);
    const double base = (1.0 - opts.damping) * inv_n + opts.damping * dangling * inv_n;
    for (NodeId i = 0; i < n; ++i) {
      double acc = 0.0;
      for (NodeId j : g.neighbors(i)) acc += x(j) / static_cast<double>(g.degree(j));
      next(i) = base + opts.damping * acc;
    }
    const double diff = (next - x).lpNorm<1>();
    x.swap(next);
    if (diff < static_cast<double>(n) * opts.tol) return x / x.sum();
  }
  throw ConvergenceError(fmt::format("pagerank did not converge in {} iterations", opts.max_iter));
}

}  // namespace

CentralityWeights centrality(const Graph& g, CentralityKind kind, const CentralityOptions& opts) {
  CentralityWeights w;
  w.kind = kind;
  switch (kind) {
    case CentralityKind::degree:
      w.node_scores.resize(g.num_nodes());
      for (NodeId i = 0; i < g.num_nodes(); ++i) w.node_scores(i) = static_cast<double>(g.degree(i));
      break;
    case CentralityKind::eigenvector:
      w.node_scores = eigenvector_centrality(g, opts);
      break;
    case CentralityKind::pagerank:
      w.node_scores = pagerank(g, opts);
      break;
    case CentralityKind::community_strength:
      throw std::invalid_argument("community strength needs a block state; use community_strength()");
  }
  return w;
}

CentralityWeights community_strength(const Graph& g, const BlockState& b) {
  if (static_cast<NodeId>(b.assignment.size()) != g.num_nodes())
    throw std::invalid_argument("block state does not cover the graph's nodes");
  const auto sizes = b.block_sizes();
  std::vector<double> internal(b.num_blocks, 0.0);
  for (const auto& e : g.edges())
    if (b.assignment[e.u] == b.assignment[e.v]) internal[b.assignment[e.u]] += 1.0;
  std::vector<double> strength(b.num_blocks, 0.0);
  for (int c = 0; c < b.num_blocks; ++c) {
    const double pairs = 0.5 * sizes[c] * (sizes[c] - 1.0);
    strength[c] = pairs > 0 ? internal[c] / pairs : 0.0;
  }
  CentralityWeights w;
  w.kind = CentralityKind::community_strength;
  w.node_scores.resize(g.num_nodes());
  for (NodeId i = 0; i < g.num_nodes(); ++i) w.node_scores(i) = strength[b.assignment[i]];
  return w;
}

// ---------------------------------------------------------------------------
// Probability schemes

Eigen::VectorXd drop_probabilities(const Eigen::VectorXd& s, double rate, double cutoff, bool* degenerate) {
  if (degenerate) *degenerate = false;
  if (s.size() == 0) return {};
  const double s_max = s.maxCoeff();
  const double s_mean = s.mean();
  const double spread = s_max - s_mean;
  if (!(spread > 1e-12 * std::max(1.0, std::abs(s_max)))) {
    if (degenerate) *degenerate = true;
    return Eigen::VectorXd::Constant(s.size(), rate);
  }
  return ((s_max - s.array()) / spread * rate).min(cutoff).matrix();
}

Eigen::VectorXd edge_importance(const Graph& g, const CentralityWeights& w) {
  if (w.node_scores.size() != g.num_nodes()) throw std::invalid_argument("centrality length != node count");
  Eigen::VectorXd s(static_cast<Eigen::Index>(g.num_edges()));
  Eigen::Index k = 0;
  for (const auto& e : g.edges())
    s(k++) = 0.5 * (std::log1p(w.node_scores(e.u)) + std::log1p(w.node_scores(e.v)));
  return s;
}

Eigen::VectorXd feature_importance(const FeatureMatrix& x, const CentralityWeights& w) {
  return x.weighted_column_support(w.node_scores);
}

Eigen::VectorXd scom_edge_importance(const Graph& g, const BlockState& b) {
  const auto w = community_strength(g, b);
  const auto sizes = b.block_sizes();
  // Global mean over blocks of block strength.
  std::vector<double> strength(b.num_blocks, 0.0);
  for (NodeId i = 0; i < g.num_nodes(); ++i) strength[b.assignment[i]] = w.node_scores(i);
  double delta = 0.0;
  for (double s : strength) delta += s;
  if (b.num_blocks > 0) delta /= b.num_blocks;

  Eigen::VectorXd s(static_cast<Eigen::Index>(g.num_edges()));
  Eigen::Index k = 0;
  for (const auto& e : g.edges()) {
    double v = 0.5 * (w.node_scores(e.u) + w.node_scores(e.v));
    if (b.assignment[e.u] == b.assignment[e.v]) v += delta;
    s(k++) = v;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Perturbations

Graph drop_edges_with_probabilities(const Graph& g, const Eigen::VectorXd& probs, Seed seed) {
  if (probs.size() != static_cast<Eigen::Index>(g.num_edges()))
    throw std::invalid_argument("probability vector length != edge count");
  Rng rng = make_rng(seed);
  std::vector<Edge> kept;
  kept.reserve(g.num_edges());
  Eigen::Index k = 0;
  for (const auto& e : g.edges())
    if (uniform01(rng) >= probs(k++)) kept.push_back(e);
  return g.with_edges(std::move(kept));
}

FeatureMatrix mask_features_with_probabilities(const FeatureMatrix& x, const Eigen::VectorXd& probs, Seed seed) {
  if (probs.size() != x.cols()) throw std::invalid_argument("probability vector length != feature dimension");
  Rng rng = make_rng(seed);
  std::vector<std::uint8_t> drop(x.cols());
  bool any = false;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    drop[j] = uniform01(rng) < probs(j) ? 1 : 0;
    any = any || drop[j];
  }
  return any ? x.with_masked_columns(drop) : x;
}

Graph drop_edges_random(const Graph& g, double rate, Seed seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("drop rate must lie in [0, 1)");
  return drop_edges_with_probabilities(g, Eigen::VectorXd::Constant(static_cast<Eigen::Index>(g.num_edges()), rate),
                                       seed);
}

FeatureMatrix mask_features_random(const FeatureMatrix& x, double rate, Seed seed) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("mask rate must lie in [0, 1)");
  return mask_features_with_probabilities(x, Eigen::VectorXd::Constant(x.cols(), rate), seed);
}

Graph adaptive_drop_edges(const Graph& g, const CentralityWeights& w, double rate, double cutoff, Seed seed) {
  bool degenerate = false;
  auto probs = drop_probabilities(edge_importance(g, w), rate, cutoff, &degenerate);
  if (degenerate) log_warn("adaptive edge dropping: all edge importances equal, using uniform rate {}", rate);
  return drop_edges_with_probabilities(g, probs, seed);
}

FeatureMatrix adaptive_mask_features(const FeatureMatrix& x, const CentralityWeights& w, double rate, double cutoff,
                                     Seed seed) {
  bool degenerate = false;
  const Eigen::VectorXd importance = feature_importance(x, w).array().log1p().matrix();
  auto probs = drop_probabilities(importance, rate, cutoff, &degenerate);
  if (degenerate) log_warn("adaptive feature masking: all feature importances equal, using uniform rate {}", rate);
  return mask_features_with_probabilities(x, probs, seed);
}

Graph scom_drop_edges(const Graph& g, const BlockState& b, double rate, double cutoff, Seed seed) {
  bool degenerate = false;
  auto probs = drop_probabilities(scom_edge_importance(g, b), rate, cutoff, &degenerate);
  if (degenerate) log_warn("community edge dropping: all edge importances equal, using uniform rate {}", rate);
  return drop_edges_with_probabilities(g, probs, seed);
}

// ---------------------------------------------------------------------------
// Views

ViewGenerator::ViewGenerator(Graph g, AugmentationSpec spec, std::optional<BlockState> blocks, SbmSampler sampler)
    : g_(std::move(g)), spec_(std::move(spec)), sampler_(std::move(sampler)) {
  spec_.validate();
  if (needs_block_state(spec_.kind) && !blocks)
    throw std::invalid_argument(fmt::format("augmentation '{}' needs a block state", to_string(spec_.kind)));
  if (blocks && static_cast<NodeId>(blocks->assignment.size()) != g_.num_nodes())
    throw std::invalid_argument("block state does not cover the graph's nodes");

  const double edge_rates[2] = {spec_.drop_edge_rate_1, spec_.drop_edge_rate_2};
  const double feature_rates[2] = {spec_.drop_feature_rate_1, spec_.drop_feature_rate_2};
  const auto m = static_cast<Eigen::Index>(g_.num_edges());
  const auto d = g_.features().cols();

  auto adaptive = [&](const Eigen::VectorXd& edge_s, const CentralityWeights& w) {
    const Eigen::VectorXd feat_s = feature_importance(g_.features(), w).array().log1p().matrix();
    bool deg_e = false;
    bool deg_f = false;
    for (int v = 0; v < 2; ++v) {
      edge_probs_[v] = drop_probabilities(edge_s, edge_rates[v], spec_.cutoff, &deg_e);
      feature_probs_[v] = drop_probabilities(feat_s, feature_rates[v], spec_.cutoff, &deg_f);
    }
    if (deg_e) log_warn("{}: all edge importances equal, using uniform rates", to_string(spec_.kind));
    if (deg_f) log_warn("{}: all feature importances equal, using uniform rates", to_string(spec_.kind));
  };

  switch (spec_.kind) {
    case AugmentationKind::random:
      for (int v = 0; v < 2; ++v) {
        edge_probs_[v] = Eigen::VectorXd::Constant(m, edge_rates[v]);
        feature_probs_[v] = Eigen::VectorXd::Constant(d, feature_rates[v]);
      }
      break;
    case AugmentationKind::deg:
    case AugmentationKind::evc:
    case AugmentationKind::pr: {
      const CentralityKind ck = spec_.kind == AugmentationKind::deg   ? CentralityKind::degree
                                : spec_.kind == AugmentationKind::evc ? CentralityKind::eigenvector
                                                                      : CentralityKind::pagerank;
      const auto w = centrality(g_, ck);
      adaptive(edge_importance(g_, w), w);
      break;
    }
    case AugmentationKind::scom:
      adaptive(scom_edge_importance(g_, *blocks), community_strength(g_, *blocks));
      break;
    case AugmentationKind::sbm:
    case AugmentationKind::sbm2:
    case AugmentationKind::sbm_oracle:
    case AugmentationKind::sbm2_oracle:
      counts_ = fit_block_counts(g_, *blocks);
      break;
  }
}

Graph ViewGenerator::perturb(Seed seed, const Eigen::VectorXd& edge_probs, const Eigen::VectorXd& feature_probs) const {
  Graph view = drop_edges_with_probabilities(g_, edge_probs, derive_seed(seed, "edges"));
  return view.with_features(mask_features_with_probabilities(g_.features(), feature_probs, derive_seed(seed, "features")));
}

std::pair<Graph, Graph> ViewGenerator::operator()(Seed seed) const {
  const Seed s1 = derive_seed(seed, "view1");
  const Seed s2 = derive_seed(seed, "view2");
  if (counts_) {
    auto sample = [&](Seed s) { return sampler_(*counts_, s).with_features(g_.features()); };
    const bool both = spec_.kind == AugmentationKind::sbm2 || spec_.kind == AugmentationKind::sbm2_oracle;
    if (both) return {sample(s1), sample(s2)};
    return {g_, sample(s2)};
  }
  return {perturb(s1, edge_probs_[0], feature_probs_[0]), perturb(s2, edge_probs_[1], feature_probs_[1])};
}

std::pair<Graph, Graph> make_views(const Graph& g, const AugmentationSpec& spec, const std::optional<BlockState>& blocks,
                                   Seed seed) {
  return ViewGenerator(g, spec, blocks)(seed);
}

}  // namespace idlink
