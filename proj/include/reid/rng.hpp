#pragma once

#include <cstdint>
#include <limits>

#include "reid/error.hpp"

namespace reid {

// Counter-based deterministic generator: draw k is a fixed avalanche mix of
// (seed, k), so equal seeds give equal sequences on every platform.
// Independent streams are derived by mixing tag words into the seed; drawing
// from one stream never shifts another.
class Rng {
 public:
  // Recorded in checkpoint headers so a parameter file pins the generator
  // that produced it.
  static constexpr const char* kId = "splitmix64/box-muller v1";

  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t next_u64() { return mix(seed_ + kGamma * ++counter_); }

  // Uniform in [0,1), 53-bit resolution.
  double next_unit() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform integer in [0, n); rejection keeps the draw exactly uniform.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw ParamError("Rng::below requires n > 0");
    const std::uint64_t limit =
        std::numeric_limits<std::uint64_t>::max() / n * n;
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Standard normal via a Box-Muller pair; the second value is cached.
  double next_gaussian();

  // New stream keyed by (seed, a, b, c). Members of this stream are
  // independent of draws already taken from *this.
  Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
    std::uint64_t s = mix(seed_ ^ mix(a + 0x8bb84b93962eacc9ull));
    s = mix(s ^ mix(b + 0x2f5870a5a7e8f7a1ull));
    s = mix(s ^ mix(c + 0x71c64e6da2b4e7a7ull));
    return Rng(s);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double cached_gauss_ = 0.0;
  bool has_cached_ = false;
};

// Stream tags used across the project; fixed values keep derived streams
// stable between versions.
namespace stream {
constexpr std::uint64_t kInit = 1;
constexpr std::uint64_t kBatch = 2;
constexpr std::uint64_t kAugment = 3;
constexpr std::uint64_t kHoldout = 4;
constexpr std::uint64_t kEval = 5;
constexpr std::uint64_t kSynthView = 6;
constexpr std::uint64_t kSynthIdentity = 7;
constexpr std::uint64_t kSynthImage = 8;
constexpr std::uint64_t kSynthLayout = 9;
}  // namespace stream

}  // namespace reid
