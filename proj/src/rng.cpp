#include "idlink/rng.hpp"

namespace idlink {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a
std::uint64_t hash_tag(std::string_view tag) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

Seed derive_seed(Seed parent, std::string_view tag) {
  return splitmix64(splitmix64(parent) ^ hash_tag(tag));
}

Seed derive_seed(Seed parent, std::uint64_t index) {
  return splitmix64(splitmix64(parent) + 0x632be59bd9b4e019ULL * (index + 1));
}

std::uint64_t uniform_index(Rng& rng, std::uint64_t bound) {
  if (bound == 0) return 0;
  // 128-bit multiply-shift with rejection of the biased low region.
  std::uint64_t x = rng();
  __uint128_t m = static_cast<__uint128_t>(x) * bound;
  auto low = static_cast<std::uint64_t>(m);
  if (low < bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    while (low < threshold) {
      x = rng();
      m = static_cast<__uint128_t>(x) * bound;
      low = static_cast<std::uint64_t>(m);
    }
  }
  return static_cast<std::uint64_t>(m >> 64);
}

}  // namespace idlink
