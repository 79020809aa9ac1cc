#include "idlink/community.hpp"

#include <algorithm>
#include <cassert>
#include <fstream>
#include <numeric>
#include <sstream>
#include <unordered_map>

#include "idlink/error.hpp"
#include "idlink/log.hpp"

namespace idlink {

std::vector<int> BlockState::block_sizes() const {
  std::vector<int> sizes(num_blocks, 0);
  for (int c : assignment) ++sizes[c];
  return sizes;
}

BlockState BlockState::from_labels(std::span<const int> labels, BlockSource source) {
  BlockState b;
  b.source = source;
  b.assignment.resize(labels.size());
  std::unordered_map<int, int> dense;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, inserted] = dense.try_emplace(labels[i], b.num_blocks);
    if (inserted) ++b.num_blocks;
    b.assignment[i] = it->second;
  }
  return b;
}

BlockState BlockState::singletons(NodeId n, BlockSource source) {
  BlockState b;
  b.source = source;
  b.num_blocks = n;
  b.assignment.resize(n);
  std::iota(b.assignment.begin(), b.assignment.end(), 0);
  return b;
}

double modularity(const Graph& g, const BlockState& b) {
  if (static_cast<NodeId>(b.assignment.size()) != g.num_nodes())
    throw std::invalid_argument("block state does not cover the graph's nodes");
  const double m = static_cast<double>(g.num_edges());
  if (m == 0) return 0.0;
  std::vector<double> internal(b.num_blocks, 0.0);
  std::vector<double> degree(b.num_blocks, 0.0);
  for (const auto& e : g.edges())
    if (b.assignment[e.u] == b.assignment[e.v]) internal[b.assignment[e.u]] += 1.0;
  for (NodeId i = 0; i < g.num_nodes(); ++i) degree[b.assignment[i]] += static_cast<double>(g.degree(i));
  double q = 0.0;
  for (int c = 0; c < b.num_blocks; ++c) {
    const double frac = degree[c] / (2.0 * m);
    q += internal[c] / m - frac * frac;
  }
  return q;
}

namespace {

// Weighted graph used between Louvain levels. Self-loop weight is stored once
// per node and counts twice towards the node's strength.
struct WeightedGraph {
  int n = 0;
  std::vector<std::vector<std::pair<int, double>>> adj;  // excludes self-loops
  std::vector<double> self_loop;
  double total_weight = 0.0;  // m

  double strength(int i) const {
    double s = 2.0 * self_loop[i];
    for (const auto& [j, w] : adj[i]) s += w;
    return s;
  }
};

WeightedGraph from_graph(const Graph& g) {
  WeightedGraph wg;
  wg.n = g.num_nodes();
  wg.adj.resize(wg.n);
  wg.self_loop.assign(wg.n, 0.0);
  for (const auto& e : g.edges()) {
    wg.adj[e.u].emplace_back(e.v, 1.0);
    wg.adj[e.v].emplace_back(e.u, 1.0);
  }
  wg.total_weight = static_cast<double>(g.num_edges());
  return wg;
}

double weighted_modularity(const WeightedGraph& wg, std::span<const int> comm) {
  const double m2 = 2.0 * wg.total_weight;
  std::unordered_map<int, double> in;
  std::unordered_map<int, double> tot;
  for (int i = 0; i < wg.n; ++i) {
    tot[comm[i]] += wg.strength(i);
    in[comm[i]] += 2.0 * wg.self_loop[i];
    for (const auto& [j, w] : wg.adj[i])
      if (comm[j] == comm[i]) in[comm[i]] += w;
  }
  double q = 0.0;
  for (const auto& [c, t] : tot) q += in[c] / m2 - (t / m2) * (t / m2);
  return q;
}

// One level of local moving. Returns true if any node changed community.
bool local_moving(const WeightedGraph& wg, std::vector<int>& comm, Rng& rng) {
  const int n = wg.n;
  const double m2 = 2.0 * wg.total_weight;
  std::vector<double> strength(n);
  std::vector<double> tot(n, 0.0);
  for (int i = 0; i < n; ++i) {
    strength[i] = wg.strength(i);
    tot[comm[i]] += strength[i];
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);

  std::vector<double> link_to(n, 0.0);
  std::vector<int> touched;
  bool any_move = false;
  double q = weighted_modularity(wg, comm);
  for (;;) {
    int moves = 0;
    for (int i : order) {
      const int own = comm[i];
      touched.clear();
      for (const auto& [j, w] : wg.adj[i]) {
        const int c = comm[j];
        if (link_to[c] == 0.0) touched.push_back(c);
        link_to[c] += w;
      }
      tot[own] -= strength[i];
      const double k_i = strength[i];
      // Gain of inserting i into c, up to a constant shared by all candidates.
      auto gain = [&](int c) { return link_to[c] - tot[c] * k_i / m2; };
      int best = own;
      double best_gain = gain(own);
      for (int c : touched) {
        const double gc = gain(c);
        if (gc > best_gain + 1e-12) {
          best = c;
          best_gain = gc;
        }
      }
      tot[best] += strength[i];
      if (best != own) {
        comm[i] = best;
        ++moves;
      }
      for (int c : touched) link_to[c] = 0.0;
      link_to[own] = 0.0;
    }
    const double q_next = weighted_modularity(wg, comm);
    assert(q_next >= q - 1e-9 && "local moving pass decreased modularity");
    if (moves > 0) any_move = true;
    const double improvement = q_next - q;
    q = q_next;
    if (moves == 0 || improvement < 1e-7) break;
  }
  return any_move;
}

// Collapses communities into nodes; returns dense relabeling of `comm`.
WeightedGraph aggregate(const WeightedGraph& wg, std::vector<int>& comm) {
  std::vector<int> dense(wg.n, -1);
  int k = 0;
  for (int i = 0; i < wg.n; ++i) {
    if (dense[comm[i]] < 0) dense[comm[i]] = k++;
    comm[i] = dense[comm[i]];
  }
  WeightedGraph out;
  out.n = k;
  out.adj.resize(k);
  out.self_loop.assign(k, 0.0);
  out.total_weight = wg.total_weight;
  std::vector<std::unordered_map<int, double>> acc(k);
  for (int i = 0; i < wg.n; ++i) {
    const int ci = comm[i];
    out.self_loop[ci] += wg.self_loop[i];
    for (const auto& [j, w] : wg.adj[i]) {
      const int cj = comm[j];
      if (ci == cj) {
        out.self_loop[ci] += 0.5 * w;  // each internal edge is seen from both ends
      } else {
        acc[ci][cj] += w;
      }
    }
  }
  for (int c = 0; c < k; ++c) {
    out.adj[c].assign(acc[c].begin(), acc[c].end());
    std::sort(out.adj[c].begin(), out.adj[c].end());
  }
  return out;
}

}  // namespace

BlockState louvain(const Graph& g, Seed seed) {
  const NodeId n = g.num_nodes();
  if (g.num_edges() == 0) {
    log_warn("louvain: graph has no edges; every node is its own block");
    return BlockState::singletons(n);
  }
  Rng rng = make_rng(seed);
  WeightedGraph wg = from_graph(g);
  std::vector<int> node_comm(n);
  std::iota(node_comm.begin(), node_comm.end(), 0);

  for (;;) {
    std::vector<int> comm(wg.n);
    std::iota(comm.begin(), comm.end(), 0);
    const bool moved = local_moving(wg, comm, rng);
    if (!moved) break;
    WeightedGraph next = aggregate(wg, comm);
    for (auto& c : node_comm) c = comm[c];
    if (next.n == wg.n) break;
    wg = std::move(next);
  }
  return BlockState::from_labels(node_comm, BlockSource::louvain);
}

BlockState read_partition(const std::filesystem::path& path, NodeId n) {
  std::ifstream in(path);
  if (!in) throw ParseError(fmt::format("cannot open partition file '{}'", path.string()));
  std::vector<int> labels(n, -1);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    long node = 0;
    long block = 0;
    if (!(ss >> node >> block) || node < 0 || block < 0)
      throw ParseError(fmt::format("{}:{}: expected 'node_id block_id'", path.string(), lineno));
    if (node >= n) throw ParseError(fmt::format("{}:{}: node {} out of range", path.string(), lineno, node));
    if (labels[node] >= 0) throw ParseError(fmt::format("{}:{}: node {} assigned twice", path.string(), lineno, node));
    labels[node] = static_cast<int>(block);
  }
  for (NodeId i = 0; i < n; ++i)
    if (labels[i] < 0) throw ParseError(fmt::format("partition '{}' misses node {}", path.string(), i));
  return BlockState::from_labels(labels, BlockSource::external);
}

void write_partition(const std::filesystem::path& path, const BlockState& b) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  for (std::size_t i = 0; i < b.assignment.size(); ++i) out << i << ' ' << b.assignment[i] << '\n';
}

BlockState PartitionFileDetector::detect(const Graph& g, Seed) const { return read_partition(path_, g.num_nodes()); }

std::unique_ptr<CommunityDetector> make_detector(const std::string& id, const std::filesystem::path& partition_file) {
  if (id == "louvain") return std::make_unique<LouvainDetector>();
  if (id == "leiden" || id == "infomap") {
    if (partition_file.empty())
      throw std::invalid_argument(fmt::format("detector '{}' needs an external partition file", id));
    return std::make_unique<PartitionFileDetector>(id, partition_file);
  }
  throw std::invalid_argument(fmt::format("unknown community detector '{}'", id));
}

}  // namespace idlink
