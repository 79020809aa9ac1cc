#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "idlink/augment.hpp"
#include "idlink/graph.hpp"
#include "idlink/models.hpp"

namespace idlink {

struct ExperimentConfig {
  std::string dataset = "USAir";
  ModelKind model = ModelKind::grace;
  AugmentationSpec augmentation;
  TrainConfig train;
  SplitFractions split;
  std::vector<Seed> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int hits_k = 50;
  /// Precomputed partition for the leiden / infomap detectors.
  std::string partition_file;

  /// Structural sanity (positive sizes, rates in range, fractions summing to 1).
  void validate() const;
  /// Stricter check that every tuned field lies in its published search space.
  void validate_search_space() const;

  /// "<model>_<augmentation>", or just "gcn_supervised" for the supervised baseline.
  std::string method_name() const;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// Flat "key = value" text, one field per line, '#' comments. Doubles are written with
/// 17 significant digits so parse(serialize(c)) == c.
std::string serialize_config(const ExperimentConfig& c);
/// Unknown keys and malformed values raise ParseError. Missing keys keep their defaults.
ExperimentConfig parse_config(std::string_view text);

ExperimentConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const ExperimentConfig& c);

std::vector<Seed> parse_seed_list(std::string_view text);

}  // namespace idlink
