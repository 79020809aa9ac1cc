#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "idlink/community.hpp"
#include "idlink/graph.hpp"

namespace idlink {

/// Exact edge counts per block pair for a fixed partition (microcanonical SBM).
/// counts(r, s) == counts(s, r); intra-block edges are counted once on the diagonal.
struct BlockEdgeCounts {
  std::vector<int> assignment;  ///< partition the counts refer to
  int num_blocks = 0;
  std::vector<std::int64_t> block_sizes;
  std::vector<std::int64_t> counts;  ///< row-major num_blocks x num_blocks

  BlockEdgeCounts() = default;
  /// Builds from a partition and a symmetric count matrix; validates feasibility.
  BlockEdgeCounts(const BlockState& b, std::vector<std::vector<std::int64_t>> matrix);

  std::int64_t at(int r, int s) const { return counts[static_cast<std::size_t>(r) * num_blocks + s]; }
  std::int64_t& at(int r, int s) { return counts[static_cast<std::size_t>(r) * num_blocks + s]; }
  /// Number of distinct node pairs available to block pair (r, s).
  std::int64_t slots(int r, int s) const;
  std::int64_t total_edges() const;
  NodeId num_nodes() const { return static_cast<NodeId>(assignment.size()); }

  friend bool operator==(const BlockEdgeCounts&, const BlockEdgeCounts&) = default;
};

BlockEdgeCounts fit_block_counts(const Graph& g, const BlockState& b);

/// Simple graph with exactly counts(r, s) edges between blocks r and s; within each
/// block pair the edge set is uniform over subsets of that size. Nodes get identity features.
Graph sample_sbm(const BlockEdgeCounts& c, Seed seed);

/// Pluggable generator; a degree-corrected sampler can be dropped in here.
using SbmSampler = std::function<Graph(const BlockEdgeCounts&, Seed)>;

/// detect -> fit -> sample, carrying the input's node features over.
Graph sbm_augment(const Graph& g, const CommunityDetector& detector, Seed seed,
                  const SbmSampler& sampler = sample_sbm);

void write_block_counts(const std::filesystem::path& path, const BlockEdgeCounts& c);

}  // namespace idlink
