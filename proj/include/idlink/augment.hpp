#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "idlink/community.hpp"
#include "idlink/graph.hpp"
#include "idlink/sbm.hpp"

namespace idlink {

/// View-generation strategies. The *_oracle kinds behave like sbm / sbm2 but expect a
/// block state detected on the full graph before the link split.
enum class AugmentationKind { random, deg, evc, pr, scom, sbm, sbm2, sbm_oracle, sbm2_oracle };

std::string_view to_string(AugmentationKind kind);
AugmentationKind parse_augmentation(std::string_view name);
bool needs_block_state(AugmentationKind kind);
bool is_sbm(AugmentationKind kind);
bool is_oracle(AugmentationKind kind);

struct AugmentationSpec {
  AugmentationKind kind = AugmentationKind::random;
  double drop_edge_rate_1 = 0.2;
  double drop_edge_rate_2 = 0.2;
  double drop_feature_rate_1 = 0.2;
  double drop_feature_rate_2 = 0.2;
  std::string detector = "louvain";
  double cutoff = 0.9;  ///< cap on adaptive drop probabilities

  /// Throws std::invalid_argument when a rate leaves [0, 0.9] or cutoff leaves (0, 0.95].
  void validate() const;

  friend bool operator==(const AugmentationSpec&, const AugmentationSpec&) = default;
};

enum class CentralityKind { degree, eigenvector, pagerank, community_strength };

struct CentralityWeights {
  Eigen::VectorXd node_scores;
  CentralityKind kind = CentralityKind::degree;
};

struct CentralityOptions {
  double tol = 1e-8;
  int max_iter = 1000;
  double damping = 0.85;
  /// Power iteration runs on A + shift * I so bipartite components do not oscillate.
  double shift = 1.0;
};

/// degree: raw degrees. eigenvector: dominant eigenvector of A, unit L2 norm.
/// pagerank: damping 0.85, sums to 1. Throws ConvergenceError past max_iter.
CentralityWeights centrality(const Graph& g, CentralityKind kind, const CentralityOptions& opts = {});

/// Block density e_c / C(size_c, 2) broadcast to member nodes (singleton blocks get 0).
CentralityWeights community_strength(const Graph& g, const BlockState& b);

/// p_i = min((s_max - s_i) / (s_max - s_mean) * rate, cutoff). When s_max == s_mean every
/// entry falls back to `rate`; `degenerate` (if given) reports that case.
Eigen::VectorXd drop_probabilities(const Eigen::VectorXd& importance, double rate, double cutoff,
                                   bool* degenerate = nullptr);

/// s_e = (log(1 + c_u) + log(1 + c_v)) / 2 in g.edges() order.
Eigen::VectorXd edge_importance(const Graph& g, const CentralityWeights& w);
/// Centrality-weighted count of nonzero entries per feature column.
Eigen::VectorXd feature_importance(const FeatureMatrix& x, const CentralityWeights& w);
/// Mean endpoint community strength plus the global mean strength for intra-block edges.
Eigen::VectorXd scom_edge_importance(const Graph& g, const BlockState& b);

/// Removes edge i (in g.edges() order) with probability probs[i].
Graph drop_edges_with_probabilities(const Graph& g, const Eigen::VectorXd& probs, Seed seed);
/// Zeroes column j with probability probs[j].
FeatureMatrix mask_features_with_probabilities(const FeatureMatrix& x, const Eigen::VectorXd& probs, Seed seed);

Graph drop_edges_random(const Graph& g, double rate, Seed seed);
FeatureMatrix mask_features_random(const FeatureMatrix& x, double rate, Seed seed);

Graph adaptive_drop_edges(const Graph& g, const CentralityWeights& w, double rate, double cutoff, Seed seed);
FeatureMatrix adaptive_mask_features(const FeatureMatrix& x, const CentralityWeights& w, double rate, double cutoff,
                                     Seed seed);

Graph scom_drop_edges(const Graph& g, const BlockState& b, double rate, double cutoff, Seed seed);

/// Precomputes everything that does not change between epochs (centralities, block
/// counts, drop probabilities) and then produces a fresh view pair per seed.
class ViewGenerator {
 public:
  ViewGenerator(Graph g, AugmentationSpec spec, std::optional<BlockState> blocks = std::nullopt,
                SbmSampler sampler = sample_sbm);

  std::pair<Graph, Graph> operator()(Seed seed) const;

  const AugmentationSpec& spec() const { return spec_; }
  const Graph& graph() const { return g_; }
  const std::optional<BlockEdgeCounts>& block_counts() const { return counts_; }

 private:
  Graph perturb(Seed seed, const Eigen::VectorXd& edge_probs, const Eigen::VectorXd& feature_probs) const;

  Graph g_;
  AugmentationSpec spec_;
  std::optional<BlockEdgeCounts> counts_;
  SbmSampler sampler_;
  Eigen::VectorXd edge_probs_[2];
  Eigen::VectorXd feature_probs_[2];
};

/// Pure function of (g, spec, blocks, seed). Kinds scom and sbm* require `blocks`.
std::pair<Graph, Graph> make_views(const Graph& g, const AugmentationSpec& spec,
                                   const std::optional<BlockState>& blocks, Seed seed);

}  // namespace idlink
