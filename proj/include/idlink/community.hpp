#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "idlink/graph.hpp"

namespace idlink {

enum class BlockSource { louvain, external };

/// Node -> block partition with dense block ids in [0, num_blocks).
struct BlockState {
  std::vector<int> assignment;
  int num_blocks = 0;
  BlockSource source = BlockSource::louvain;

  std::vector<int> block_sizes() const;

  /// Relabels blocks densely in order of first appearance.
  static BlockState from_labels(std::span<const int> labels, BlockSource source);
  static BlockState singletons(NodeId n, BlockSource source = BlockSource::louvain);
};

/// Q = sum_c [ e_c / m - (d_c / 2m)^2 ]. An edgeless graph has Q = 0.
double modularity(const Graph& g, const BlockState& b);

/// Multi-level Louvain at resolution 1. Node visit order is shuffled from `seed`;
/// local moving stops once a pass improves Q by less than 1e-7.
BlockState louvain(const Graph& g, Seed seed);

/// Reads "node_id block_id" lines; every node in [0, n) must appear exactly once.
BlockState read_partition(const std::filesystem::path& path, NodeId n);
void write_partition(const std::filesystem::path& path, const BlockState& b);

class CommunityDetector {
 public:
  virtual ~CommunityDetector() = default;
  virtual BlockState detect(const Graph& g, Seed seed) const = 0;
  virtual std::string name() const = 0;
};

class LouvainDetector final : public CommunityDetector {
 public:
  BlockState detect(const Graph& g, Seed seed) const override { return louvain(g, seed); }
  std::string name() const override { return "louvain"; }
};

/// Detector backed by a partition computed by an outside tool (Leiden, Infomap, ...).
class PartitionFileDetector final : public CommunityDetector {
 public:
  PartitionFileDetector(std::string name, std::filesystem::path path)
      : name_(std::move(name)), path_(std::move(path)) {}
  BlockState detect(const Graph& g, Seed seed) const override;
  std::string name() const override { return name_; }

 private:
  std::string name_;
  std::filesystem::path path_;
};

/// "louvain" is built in; "leiden" and "infomap" need `partition_file`.
std::unique_ptr<CommunityDetector> make_detector(const std::string& id,
                                                 const std::filesystem::path& partition_file = {});

}  // namespace idlink
