#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace viewsched {

using Rng = std::mt19937_64;

// Each consumer draws from its own stream so that changing how many numbers
// one consumer takes never shifts another's sequence.
enum class StreamKind : std::uint32_t {
  Scenario = 1,
  Detection = 2,
  LatencyNoise = 3,
  Training = 4,
  Test = 99,
};

inline Rng make_stream(std::uint64_t seed, StreamKind kind, std::initializer_list<std::uint64_t> keys = {}) {
  std::vector<std::uint32_t> words = {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                      static_cast<std::uint32_t>(kind)};
  for (std::uint64_t k : keys) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

inline double standard_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

// Standard normal truncated to [-limit, limit] by clamping.
inline double clamped_normal(Rng& rng, double limit = 3.0) {
  const double z = standard_normal(rng);
  return z < -limit ? -limit : (z > limit ? limit : z);
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace viewsched
