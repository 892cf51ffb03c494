#pragma once

#include <cstdint>
#include <random>

namespace phantom {

using Rng = std::mt19937_64;

/// Independent generator for a named purpose within one seeded run.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

// Stream ids used by the trainer. Keeping them apart lets the ERM and
// phantom paths see the same data order while alpha draws differ.
namespace streams {
inline constexpr std::uint64_t init = 1;
inline constexpr std::uint64_t sampler = 2;
inline constexpr std::uint64_t augment = 3;
inline constexpr std::uint64_t alpha = 4;
inline constexpr std::uint64_t dropout = 5;
inline constexpr std::uint64_t disturb = 6;
inline constexpr std::uint64_t data = 7;
}  // namespace streams

}  // namespace phantom
