#include "idlink/graph.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "idlink/error.hpp"
#include "idlink/log.hpp"

namespace idlink {

Edge make_edge(NodeId a, NodeId b) {
  if (a == b) throw std::invalid_argument(fmt::format("self-loop ({}, {})", a, b));
  return a < b ? Edge{a, b} : Edge{b, a};
}

EdgeSet::EdgeSet(std::span<const Edge> edges) {
  keys_.reserve(edges.size() * 2);
  insert(edges);
}

void EdgeSet::insert(std::span<const Edge> edges) {
  for (const auto& e : edges) keys_.insert(edge_key(e));
}

// ---------------------------------------------------------------------------
// FeatureMatrix

FeatureMatrix FeatureMatrix::identity(Eigen::Index n) {
  FeatureMatrix x;
  x.kind_ = FeatureKind::identity;
  x.rows_ = n;
  x.cols_ = n;
  x.mask_ = Eigen::VectorXd::Ones(n);
  return x;
}

FeatureMatrix FeatureMatrix::dense(Eigen::MatrixXd values) {
  FeatureMatrix x;
  x.kind_ = FeatureKind::dense;
  x.rows_ = values.rows();
  x.cols_ = values.cols();
  x.mask_ = Eigen::VectorXd::Ones(values.cols());
  x.values_ = std::move(values);
  return x;
}

Eigen::MatrixXd FeatureMatrix::to_dense() const {
  if (kind_ == FeatureKind::dense) return values_;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(rows_, cols_);
  for (Eigen::Index i = 0; i < rows_; ++i) out(i, i) = mask_(i);
  return out;
}

FeatureMatrix FeatureMatrix::with_masked_columns(std::span<const std::uint8_t> drop) const {
  if (static_cast<Eigen::Index>(drop.size()) != cols_)
    throw std::invalid_argument("column mask length differs from feature dimension");
  FeatureMatrix out = *this;
  for (Eigen::Index j = 0; j < cols_; ++j) {
    if (!drop[j]) continue;
    out.mask_(j) = 0.0;
    if (kind_ == FeatureKind::dense) out.values_.col(j).setZero();
  }
  return out;
}

Eigen::VectorXd FeatureMatrix::weighted_column_support(const Eigen::VectorXd& node_weights) const {
  if (node_weights.size() != rows_) throw std::invalid_argument("node weight length differs from row count");
  if (kind_ == FeatureKind::identity) return node_weights.cwiseProduct(mask_);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(cols_);
  for (Eigen::Index j = 0; j < cols_; ++j)
    for (Eigen::Index i = 0; i < rows_; ++i)
      if (values_(i, j) != 0.0) out(j) += node_weights(i);
  return out;
}

bool operator==(const FeatureMatrix& a, const FeatureMatrix& b) {
  return a.kind_ == b.kind_ && a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.mask_ == b.mask_ &&
         a.values_ == b.values_;
}

// ---------------------------------------------------------------------------
// Graph

std::shared_ptr<const Graph::Data> Graph::build(NodeId n, std::vector<Edge> edges, FeatureMatrix features,
                                                bool strict) {
  if (n < 0) throw std::invalid_argument("negative node count");
  if (features.rows() != n)
    throw std::invalid_argument(fmt::format("feature rows {} != node count {}", features.rows(), n));
  for (auto& e : edges) {
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n)
      throw std::invalid_argument(fmt::format("edge ({}, {}) out of range for n={}", e.u, e.v, n));
    if (e.u == e.v) {
      if (strict) throw std::invalid_argument(fmt::format("self-loop at node {}", e.u));
      continue;
    }
    if (e.u > e.v) std::swap(e.u, e.v);
  }
  if (!strict) std::erase_if(edges, [](const Edge& e) { return e.u == e.v; });
  std::sort(edges.begin(), edges.end());
  auto dup = std::adjacent_find(edges.begin(), edges.end());
  if (dup != edges.end()) {
    if (strict) throw std::invalid_argument(fmt::format("duplicate edge ({}, {})", dup->u, dup->v));
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }

  auto data = std::make_shared<Data>();
  data->n = n;
  data->offsets.assign(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& e : edges) {
    ++data->offsets[e.u + 1];
    ++data->offsets[e.v + 1];
  }
  for (NodeId i = 0; i < n; ++i) data->offsets[i + 1] += data->offsets[i];
  data->adjacency.resize(edges.size() * 2);
  std::vector<std::size_t> cursor(data->offsets.begin(), data->offsets.end() - 1);
  for (const auto& e : edges) {
    data->adjacency[cursor[e.u]++] = e.v;
    data->adjacency[cursor[e.v]++] = e.u;
  }
  for (NodeId i = 0; i < n; ++i)
    std::sort(data->adjacency.begin() + data->offsets[i], data->adjacency.begin() + data->offsets[i + 1]);
  data->edge_set = EdgeSet(edges);
  data->edges = std::move(edges);
  data->features = std::move(features);
  return data;
}

Graph::Graph() : Graph(0, {}) {}

Graph::Graph(NodeId n, std::vector<Edge> edges, FeatureMatrix features)
    : data_(build(n, std::move(edges), std::move(features), true)) {}

Graph::Graph(NodeId n, std::vector<Edge> edges) : Graph(n, std::move(edges), FeatureMatrix::identity(n)) {}

Graph Graph::from_pairs(NodeId n, std::span<const std::pair<NodeId, NodeId>> pairs) {
  std::vector<Edge> edges;
  edges.reserve(pairs.size());
  for (auto [a, b] : pairs) edges.push_back(Edge{a, b});
  return Graph(build(n, std::move(edges), FeatureMatrix::identity(n), false));
}

std::span<const NodeId> Graph::neighbors(NodeId u) const {
  const auto& d = *data_;
  return {d.adjacency.data() + d.offsets[u], d.offsets[u + 1] - d.offsets[u]};
}

std::size_t Graph::degree(NodeId u) const { return data_->offsets[u + 1] - data_->offsets[u]; }

Graph Graph::with_edges(std::vector<Edge> edges) const {
  return Graph(build(data_->n, std::move(edges), data_->features, true));
}

Graph Graph::with_features(FeatureMatrix features) const {
  auto data = std::make_shared<Data>(*data_);
  if (features.rows() != data->n) throw std::invalid_argument("feature rows differ from node count");
  data->features = std::move(features);
  return Graph(std::shared_ptr<const Data>(std::move(data)));
}

EdgeSet EdgeSplit::known_positives() const {
  EdgeSet s(train_pos);
  s.insert(val_pos);
  s.insert(test_pos);
  return s;
}

// ---------------------------------------------------------------------------
// I/O

namespace {

struct RawPairs {
  std::vector<std::pair<std::int64_t, std::int64_t>> pairs;
  std::int64_t max_id = -1;
};

RawPairs read_pairs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open edge list '{}'", path.string()));
  RawPairs raw;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#' || line[first] == '%') continue;
    std::istringstream ss(line);
    std::int64_t a = 0;
    std::int64_t b = 0;
    if (!(ss >> a >> b))
      throw ParseError(fmt::format("{}:{}: expected two integer node ids", path.string(), lineno));
    if (a < 0 || b < 0) throw ParseError(fmt::format("{}:{}: negative node id", path.string(), lineno));
    raw.pairs.emplace_back(a, b);
    raw.max_id = std::max({raw.max_id, a, b});
  }
  if (raw.pairs.empty()) throw ParseError(fmt::format("edge list '{}' is empty", path.string()));
  return raw;
}

}  // namespace

Graph load_edge_list(const std::filesystem::path& path, std::optional<NodeId> n_hint) {
  const auto raw = read_pairs(path);
  if (raw.max_id >= std::numeric_limits<NodeId>::max())
    throw ParseError(fmt::format("node id {} too large; use remapped loading", raw.max_id));
  NodeId n = static_cast<NodeId>(raw.max_id + 1);
  if (n_hint && *n_hint > n) n = *n_hint;
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(raw.pairs.size());
  for (auto [a, b] : raw.pairs) pairs.emplace_back(static_cast<NodeId>(a), static_cast<NodeId>(b));
  return Graph::from_pairs(n, pairs);
}

Graph load_edge_list_remapped(const std::filesystem::path& path,
                              const std::optional<std::filesystem::path>& id_map_out) {
  const auto raw = read_pairs(path);
  std::unordered_map<std::int64_t, NodeId> ids;
  std::vector<std::int64_t> order;
  auto intern = [&](std::int64_t id) {
    auto [it, inserted] = ids.try_emplace(id, static_cast<NodeId>(order.size()));
    if (inserted) order.push_back(id);
    return it->second;
  };
  std::vector<std::pair<NodeId, NodeId>> pairs;
  pairs.reserve(raw.pairs.size());
  for (auto [a, b] : raw.pairs) {
    const NodeId ia = intern(a);
    const NodeId ib = intern(b);
    pairs.emplace_back(ia, ib);
  }
  if (id_map_out) {
    std::ofstream out(*id_map_out);
    if (!out) throw std::runtime_error(fmt::format("cannot write id map '{}'", id_map_out->string()));
    for (std::size_t i = 0; i < order.size(); ++i) out << order[i] << ' ' << i << '\n';
  }
  return Graph::from_pairs(static_cast<NodeId>(order.size()), pairs);
}

std::unordered_map<std::int64_t, NodeId> read_id_map(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open id map '{}'", path.string()));
  std::unordered_map<std::int64_t, NodeId> map;
  std::int64_t original = 0;
  std::int64_t internal = 0;
  while (in >> original >> internal) map.emplace(original, static_cast<NodeId>(internal));
  if (!in.eof()) throw ParseError(fmt::format("malformed id map '{}'", path.string()));
  return map;
}

void write_edge_list(const std::filesystem::path& path, std::span<const Edge> edges) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  for (const auto& e : edges) out << e.u << ' ' << e.v << '\n';
}

// ---------------------------------------------------------------------------
// Splitting and sampling

EdgeSplit random_link_split(const Graph& g, SplitFractions f, Seed seed) {
  if (f.train < 0 || f.val < 0 || f.test < 0 || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must be nonnegative and sum to 1");
  const std::size_t m = g.num_edges();
  if (m < 3) throw std::invalid_argument("link split needs at least 3 edges");

  std::vector<Edge> edges(g.edges().begin(), g.edges().end());
  Rng rng = make_rng(seed);
  shuffle(edges.begin(), edges.end(), rng);

  // The epsilon absorbs representation error such as 0.7 * 10 = 7.000000000000001.
  auto part = [m](double frac) { return static_cast<std::size_t>(std::floor(frac * static_cast<double>(m) + 1e-9)); };
  const std::size_t n_val = part(f.val);
  const std::size_t n_test = part(f.test);

  EdgeSplit split;
  split.seed = seed;
  split.val_pos.assign(edges.begin(), edges.begin() + n_val);
  split.test_pos.assign(edges.begin() + n_val, edges.begin() + n_val + n_test);
  split.train_pos.assign(edges.begin() + n_val + n_test, edges.end());
  split.train_graph = g.with_edges(split.train_pos);
  return split;
}

SparseMatrix normalized_adjacency(const Graph& g) {
  const NodeId n = g.num_nodes();
  Eigen::VectorXd inv_sqrt(n);
  for (NodeId i = 0; i < n; ++i) inv_sqrt(i) = 1.0 / std::sqrt(static_cast<double>(g.degree(i) + 1));

  SparseMatrix a(n, n);
  Eigen::VectorXi nnz(n);
  for (NodeId i = 0; i < n; ++i) nnz(i) = static_cast<int>(g.degree(i) + 1);
  a.reserve(nnz);
  for (NodeId i = 0; i < n; ++i) {
    bool self_done = false;
    for (NodeId j : g.neighbors(i)) {
      if (!self_done && j > i) {
        a.insert(i, i) = inv_sqrt(i) * inv_sqrt(i);
        self_done = true;
      }
      a.insert(i, j) = inv_sqrt(i) * inv_sqrt(j);
    }
    if (!self_done) a.insert(i, i) = inv_sqrt(i) * inv_sqrt(i);
  }
  a.makeCompressed();
  return a;
}

std::vector<Edge> sample_negative_pairs(const Graph& g, std::size_t count, const EdgeSet& exclude, Seed seed) {
  if (count == 0) return {};
  const auto n = static_cast<std::uint64_t>(g.num_nodes());
  const std::uint64_t total = n * (n - 1) / 2;

  std::size_t blocked = exclude.size();
  for (const auto& e : g.edges())
    if (!exclude.contains(e)) ++blocked;
  if (blocked > total || count > total - blocked)
    throw InfeasibleError(fmt::format("requested {} negative pairs but only {} non-edges exist", count,
                                      total - std::min<std::uint64_t>(blocked, total)));
  const std::uint64_t admissible = total - blocked;

  auto admissible_pair = [&](NodeId a, NodeId b) { return !g.contains(a, b) && !exclude.contains(a, b); };

  Rng rng = make_rng(seed);
  std::vector<Edge> out;
  out.reserve(count);

  if (2 * count <= admissible) {
    // Rejection sampling: expected O(count) draws when most pairs are free.
    EdgeSet chosen;
    while (out.size() < count) {
      const auto a = static_cast<NodeId>(uniform_index(rng, n));
      const auto b = static_cast<NodeId>(uniform_index(rng, n));
      if (a == b || !admissible_pair(a, b) || !chosen.insert(a, b)) continue;
      out.push_back(make_edge(a, b));
    }
    return out;
  }

  // Dense regime: enumerate admissible pairs and take a partial Fisher-Yates prefix.
  std::vector<Edge> pool;
  pool.reserve(admissible);
  for (NodeId a = 0; a < static_cast<NodeId>(n); ++a)
    for (NodeId b = a + 1; b < static_cast<NodeId>(n); ++b)
      if (admissible_pair(a, b)) pool.push_back(Edge{a, b});
  for (std::size_t i = 0; i < count; ++i) {
    const auto j = i + uniform_index(rng, pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

// ---------------------------------------------------------------------------
// Dataset manifest

std::vector<DatasetInfo> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open dataset manifest '{}'", path.string()));
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("manifest '{}': {}", path.string(), e.what()));
  }
  std::vector<DatasetInfo> out;
  for (const auto& item : doc.at("datasets")) {
    DatasetInfo info;
    info.name = item.at("name").get<std::string>();
    info.path = item.at("path").get<std::string>();
    info.directed = item.value("directed", false);
    info.remap_ids = item.value("remap_ids", false);
    info.expected_nodes = item.value("nodes", 0);
    info.expected_directed_edges = item.value("edges", std::size_t{0});
    out.push_back(std::move(info));
  }
  return out;
}

const DatasetInfo& find_dataset(std::span<const DatasetInfo> manifest, const std::string& name) {
  for (const auto& d : manifest)
    if (d.name == name) return d;
  throw std::invalid_argument(fmt::format("dataset '{}' not in manifest", name));
}

std::filesystem::path dataset_root() {
  if (const char* env = std::getenv("IDLINK_DATA_ROOT"); env && *env) return env;
  return "data";
}

Graph load_dataset(const DatasetInfo& info, const std::filesystem::path& root) {
  std::filesystem::path p = info.path;
  if (p.is_relative()) p = root / p;
  // Directed inputs are symmetrized by the loader's dedupe of reversed pairs.
  Graph g = info.remap_ids ? load_edge_list_remapped(p) : load_edge_list(p, info.expected_nodes);
  if (info.expected_nodes != 0 && g.num_nodes() != info.expected_nodes)
    log_warn("dataset {}: {} nodes, manifest expects {}", info.name, g.num_nodes(), info.expected_nodes);
  if (info.expected_directed_edges != 0 && g.num_edges() != info.expected_undirected_edges())
    log_warn("dataset {}: {} undirected edges, manifest expects {}", info.name, g.num_edges(),
             info.expected_undirected_edges());
  return g;
}

}  // namespace idlink
