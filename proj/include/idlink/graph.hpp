#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <compare>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "idlink/rng.hpp"

namespace idlink {

using NodeId = std::int32_t;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Undirected edge stored canonically with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Canonical (min, max) edge. Throws on a self-loop.
Edge make_edge(NodeId a, NodeId b);

inline std::uint64_t edge_key(NodeId a, NodeId b) {
  const auto lo = static_cast<std::uint32_t>(a < b ? a : b);
  const auto hi = static_cast<std::uint32_t>(a < b ? b : a);
  return (static_cast<std::uint64_t>(lo) << 32) | hi;
}
inline std::uint64_t edge_key(Edge e) { return edge_key(e.u, e.v); }

/// Hash set of undirected pairs.
class EdgeSet {
 public:
  EdgeSet() = default;
  explicit EdgeSet(std::span<const Edge> edges);

  bool insert(NodeId a, NodeId b) { return keys_.insert(edge_key(a, b)).second; }
  void insert(std::span<const Edge> edges);
  bool contains(NodeId a, NodeId b) const { return keys_.contains(edge_key(a, b)); }
  bool contains(Edge e) const { return keys_.contains(edge_key(e)); }
  std::size_t size() const { return keys_.size(); }

 private:
  std::unordered_set<std::uint64_t> keys_;
};

enum class FeatureKind { identity, dense };

/// Node feature matrix. The identity kind never materializes the n x n matrix:
/// it stores a per-column keep mask, so X = I * diag(mask) (mask all ones means X = I).
class FeatureMatrix {
 public:
  static FeatureMatrix identity(Eigen::Index n);
  static FeatureMatrix dense(Eigen::MatrixXd values);

  FeatureKind kind() const { return kind_; }
  bool is_identity() const { return kind_ == FeatureKind::identity; }
  Eigen::Index rows() const { return rows_; }
  Eigen::Index cols() const { return cols_; }

  /// 1 for kept columns, 0 for masked ones.
  const Eigen::VectorXd& column_mask() const { return mask_; }
  /// Dense values with the column mask already applied. Empty for identity kind.
  const Eigen::MatrixXd& values() const { return values_; }

  Eigen::MatrixXd to_dense() const;

  /// Copy with the given columns zeroed (drop[j] != 0 masks column j).
  FeatureMatrix with_masked_columns(std::span<const std::uint8_t> drop) const;

  /// Per-column sum of node weights over nonzero entries: s_j = sum_i w_i [x_ij != 0].
  Eigen::VectorXd weighted_column_support(const Eigen::VectorXd& node_weights) const;

  friend bool operator==(const FeatureMatrix& a, const FeatureMatrix& b);

 private:
  FeatureKind kind_ = FeatureKind::identity;
  Eigen::Index rows_ = 0;
  Eigen::Index cols_ = 0;
  Eigen::VectorXd mask_;
  Eigen::MatrixXd values_;
};

/// Immutable undirected simple graph. Copies share storage.
class Graph {
 public:
  Graph();
  /// Strict constructor: rejects self-loops, duplicates and out-of-range ids.
  Graph(NodeId n, std::vector<Edge> edges, FeatureMatrix features);
  Graph(NodeId n, std::vector<Edge> edges);

  /// Lenient constructor for raw pairs: drops self-loops and duplicates (either orientation).
  static Graph from_pairs(NodeId n, std::span<const std::pair<NodeId, NodeId>> pairs);

  NodeId num_nodes() const { return data_->n; }
  std::size_t num_edges() const { return data_->edges.size(); }
  std::span<const Edge> edges() const { return data_->edges; }
  const FeatureMatrix& features() const { return data_->features; }
  const EdgeSet& edge_set() const { return data_->edge_set; }

  bool contains(NodeId a, NodeId b) const { return data_->edge_set.contains(a, b); }
  std::span<const NodeId> neighbors(NodeId u) const;
  std::size_t degree(NodeId u) const;

  /// Same node set and features, different edges.
  Graph with_edges(std::vector<Edge> edges) const;
  Graph with_features(FeatureMatrix features) const;

 private:
  struct Data {
    NodeId n = 0;
    std::vector<Edge> edges;
    std::vector<std::size_t> offsets;
    std::vector<NodeId> adjacency;
    EdgeSet edge_set;
    FeatureMatrix features;
  };
  explicit Graph(std::shared_ptr<const Data> data) : data_(std::move(data)) {}
  static std::shared_ptr<const Data> build(NodeId n, std::vector<Edge> edges, FeatureMatrix features,
                                           bool strict);

  std::shared_ptr<const Data> data_;
};

/// Train/validation/test partition of a graph's edges. `train_graph` holds only train edges.
struct EdgeSplit {
  Graph train_graph;
  std::vector<Edge> train_pos;
  std::vector<Edge> val_pos;
  std::vector<Edge> test_pos;
  Seed seed = 0;

  NodeId num_nodes() const { return train_graph.num_nodes(); }
  /// train, val and test positives together (the original edge set).
  EdgeSet known_positives() const;
};

struct SplitFractions {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;

  friend bool operator==(const SplitFractions&, const SplitFractions&) = default;
};

/// Reads "u v" lines; '#' comments and blank lines are skipped. Node count is
/// max id + 1 (or n_hint if larger). Identity features are attached.
Graph load_edge_list(const std::filesystem::path& path, std::optional<NodeId> n_hint = std::nullopt);

/// Like load_edge_list but ids may be arbitrary non-negative integers; they are
/// remapped to dense 0-based ids in order of first appearance. When `id_map_out`
/// is set the mapping is written there as "original_id internal_id" lines.
Graph load_edge_list_remapped(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& id_map_out = std::nullopt);

std::unordered_map<std::int64_t, NodeId> read_id_map(const std::filesystem::path& path);

void write_edge_list(const std::filesystem::path& path, std::span<const Edge> edges);

EdgeSplit random_link_split(const Graph& g, SplitFractions fractions, Seed seed);

/// D^-1/2 (A + I) D^-1/2 with D the degree matrix of A + I.
SparseMatrix normalized_adjacency(const Graph& g);

/// `count` distinct non-edges, uniform over pairs absent from both g and `exclude`.
std::vector<Edge> sample_negative_pairs(const Graph& g, std::size_t count, const EdgeSet& exclude,
                                        Seed seed);

/// One entry of the dataset manifest.
struct DatasetInfo {
  std::string name;
  std::string path;  ///< relative to the dataset root unless absolute
  bool directed = false;
  bool remap_ids = false;
  NodeId expected_nodes = 0;
  /// Published edge counts list each undirected edge in both directions.
  std::size_t expected_directed_edges = 0;

  std::size_t expected_undirected_edges() const { return expected_directed_edges / 2; }
};

std::vector<DatasetInfo> load_manifest(const std::filesystem::path& path);
const DatasetInfo& find_dataset(std::span<const DatasetInfo> manifest, const std::string& name);

/// Root directory for dataset files: $IDLINK_DATA_ROOT, else "data".
std::filesystem::path dataset_root();

Graph load_dataset(const DatasetInfo& info, const std::filesystem::path& root);

}  // namespace idlink
