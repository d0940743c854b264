#pragma once

#include <cstdint>
#include <random>

namespace ostr {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs; used to keep dataset splits,
// weight initialisation and batch shuffling on disjoint generators.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  Rng r = make_rng(seed, stream);
  return r();
}

} // namespace ostr
