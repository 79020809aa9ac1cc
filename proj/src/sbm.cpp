#include "idlink/sbm.hpp"

#include <fstream>

#include "idlink/error.hpp"
#include "idlink/log.hpp"

namespace idlink {

BlockEdgeCounts::BlockEdgeCounts(const BlockState& b, std::vector<std::vector<std::int64_t>> matrix)
    : assignment(b.assignment), num_blocks(b.num_blocks) {
  if (static_cast<int>(matrix.size()) != num_blocks) throw std::invalid_argument("count matrix size != block count");
  block_sizes.assign(num_blocks, 0);
  for (int c : assignment) ++block_sizes[c];
  counts.assign(static_cast<std::size_t>(num_blocks) * num_blocks, 0);
  for (int r = 0; r < num_blocks; ++r) {
    if (static_cast<int>(matrix[r].size()) != num_blocks) throw std::invalid_argument("count matrix is not square");
    for (int s = 0; s < num_blocks; ++s) {
      if (matrix[r][s] != matrix[s][r]) throw std::invalid_argument("count matrix is not symmetric");
      if (matrix[r][s] < 0) throw std::invalid_argument("negative block count");
      at(r, s) = matrix[r][s];
    }
  }
  for (int r = 0; r < num_blocks; ++r)
    for (int s = r; s < num_blocks; ++s)
      if (at(r, s) > slots(r, s))
        throw InfeasibleError(fmt::format("block pair ({}, {}) needs {} edges but has {} node pairs", r, s, at(r, s), slots(r, s)));
}

std::int64_t BlockEdgeCounts::slots(int r, int s) const {
  if (r == s) return block_sizes[r] * (block_sizes[r] - 1) / 2;
  return block_sizes[r] * block_sizes[s];
}

std::int64_t BlockEdgeCounts::total_edges() const {
  std::int64_t t = 0;
  for (int r = 0; r < num_blocks; ++r)
    for (int s = r; s < num_blocks; ++s) t += at(r, s);
  return t;
}

BlockEdgeCounts fit_block_counts(const Graph& g, const BlockState& b) {
  if (static_cast<NodeId>(b.assignment.size()) != g.num_nodes())
    throw std::invalid_argument("block state does not cover the graph's nodes");
  BlockEdgeCounts c;
  c.assignment = b.assignment;
  c.num_blocks = b.num_blocks;
  c.block_sizes.assign(b.num_blocks, 0);
  for (int blk : b.assignment) ++c.block_sizes[blk];
  c.counts.assign(static_cast<std::size_t>(b.num_blocks) * b.num_blocks, 0);
  for (const auto& e : g.edges()) {
    const int r = b.assignment[e.u];
    const int s = b.assignment[e.v];
    ++c.at(r, s);
    if (r != s) ++c.at(s, r);
  }
  return c;
}

Graph sample_sbm(const BlockEdgeCounts& c, Seed seed) {
  const NodeId n = c.num_nodes();
  std::vector<std::vector<NodeId>> members(c.num_blocks);
  for (NodeId i = 0; i < n; ++i) members[c.assignment[i]].push_back(i);

  Rng rng = make_rng(seed);
  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(c.total_edges()));

  for (int r = 0; r < c.num_blocks; ++r) {
    for (int s = r; s < c.num_blocks; ++s) {
      const std::int64_t k = c.at(r, s);
      if (k == 0) continue;
      const std::int64_t slots = c.slots(r, s);
      if (k > slots)
        throw InfeasibleError(fmt::format("block pair ({}, {}) wants {} edges but has {} slots", r, s, k, slots));
      const auto& mr = members[r];
      const auto& ms = members[s];

      if (2 * k <= slots) {
        EdgeSet chosen;
        std::int64_t got = 0;
        while (got < k) {
          NodeId a = 0;
          NodeId b = 0;
          if (r == s) {
            a = mr[uniform_index(rng, mr.size())];
            b = mr[uniform_index(rng, mr.size())];
            if (a == b) continue;
          } else {
            a = mr[uniform_index(rng, mr.size())];
            b = ms[uniform_index(rng, ms.size())];
          }
          if (!chosen.insert(a, b)) continue;
          edges.push_back(make_edge(a, b));
          ++got;
        }
        continue;
      }

      std::vector<Edge> pool;
      pool.reserve(static_cast<std::size_t>(slots));
      if (r == s) {
        for (std::size_t i = 0; i < mr.size(); ++i)
          for (std::size_t j = i + 1; j < mr.size(); ++j) pool.push_back(make_edge(mr[i], mr[j]));
      } else {
        for (NodeId a : mr)
          for (NodeId b : ms) pool.push_back(make_edge(a, b));
      }
      for (std::int64_t i = 0; i < k; ++i) {
        const auto j = static_cast<std::size_t>(i) + uniform_index(rng, pool.size() - static_cast<std::size_t>(i));
        std::swap(pool[i], pool[j]);
      }
      edges.insert(edges.end(), pool.begin(), pool.begin() + k);
    }
  }
  return Graph(n, std::move(edges));
}

Graph sbm_augment(const Graph& g, const CommunityDetector& detector, Seed seed, const SbmSampler& sampler) {
  if (g.num_edges() == 0) throw std::invalid_argument("sbm augmentation needs at least one edge");
  const BlockState b = detector.detect(g, derive_seed(seed, "detect"));
  const BlockEdgeCounts counts = fit_block_counts(g, b);
  return sampler(counts, derive_seed(seed, "sample")).with_features(g.features());
}

void write_block_counts(const std::filesystem::path& path, const BlockEdgeCounts& c) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(fmt::format("cannot write '{}'", path.string()));
  out << c.num_blocks << '\n';
  for (int r = 0; r < c.num_blocks; ++r) {
    for (int s = 0; s < c.num_blocks; ++s) out << (s ? " " : "") << c.at(r, s);
    out << '\n';
  }
}

}  // namespace idlink
