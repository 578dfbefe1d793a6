#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace labeldist {

using Rng = std::mt19937_64;

/// Stable sub-seed for (seed, purpose). Independent of call order, so any
/// consumer can be re-run in isolation and see the same stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose);
std::uint64_t derive_seed(std::uint64_t seed, std::string_view purpose, std::uint64_t index);

inline Rng make_rng(std::uint64_t seed, std::string_view purpose) {
  return Rng(derive_seed(seed, purpose));
}

inline Rng make_rng(std::uint64_t seed, std::string_view purpose, std::uint64_t index) {
  return Rng(derive_seed(seed, purpose, index));
}

/// FNV-1a over bytes; used for config hashes and sub-seeds.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace labeldist
