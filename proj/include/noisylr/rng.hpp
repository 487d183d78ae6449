#pragma once

#include <cstdint>
#include <random>

namespace noisylr {

// splitmix64 finalizer; decorrelates structured seed inputs.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Generator derived from (master seed, stream, index). Rows, replications and
// shards each get their own stream so results do not depend on iteration
// order or partition layout.
inline std::mt19937_64 derived_rng(std::uint64_t master, std::uint64_t stream,
                                   std::uint64_t index = 0) {
  const std::uint64_t s = mix64(master ^ mix64(stream ^ mix64(index)));
  return std::mt19937_64(s);
}

// Stream tags for the derived generators.
namespace rng_stream {
inline constexpr std::uint64_t kRows = 0x726F7773ull;       // per-row label draws
inline constexpr std::uint64_t kSynthetic = 0x73796E74ull;  // synthetic designs
inline constexpr std::uint64_t kReps = 0x72657073ull;       // experiment replications
inline constexpr std::uint64_t kEval = 0x6576616Cull;       // held-out evaluation design
inline constexpr std::uint64_t kSplit = 0x73706C74ull;      // train/test splits
}  // namespace rng_stream

}  // namespace noisylr
