#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace dialect_lab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
std::uint64_t mix64(std::uint64_t x);

/// Stable 64-bit FNV-1a hash (independent of the standard library's
/// std::hash, so derived seeds are the same on every platform).
std::uint64_t fnv1a(std::string_view text);

/// Seed for an independent random stream identified by (seed, name, index).
/// Used for per-clip augmentation streams and per-epoch shuffles.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name,
                          std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t seed, std::string_view name,
                    std::uint64_t index = 0) {
  return Rng(stream_seed(seed, name, index));
}

}  // namespace dialect_lab
