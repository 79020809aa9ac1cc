#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace idlink {

using Seed = std::uint64_t;
using Rng = std::mt19937_64;

/// Child seed for a named sub-stream. Seeds form a tree: the run seed derives
/// "split", "detect", "augment", ... and each of those derives further.
Seed derive_seed(Seed parent, std::string_view tag);
Seed derive_seed(Seed parent, std::uint64_t index);

inline Rng make_rng(Seed seed) { return Rng(seed); }

/// Uniform real in [0, 1) with 53 random bits; stable across standard libraries.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) via Lemire's rejection method.
std::uint64_t uniform_index(Rng& rng, std::uint64_t bound);

/// In-place Fisher-Yates shuffle that does not depend on std::shuffle's
/// implementation-defined draw pattern.
template <typename It>
void shuffle(It first, It last, Rng& rng) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(rng, i);
    std::iter_swap(first + (i - 1), first + j);
  }
}

}  // namespace idlink
