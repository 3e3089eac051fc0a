#pragma once

#include <cstdint>
#include <random>

namespace mr2ct {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from a base seed so
// parallel work items draw the same numbers regardless of scheduling.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace mr2ct
