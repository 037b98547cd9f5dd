#pragma once

#include <cstdint>
#include <random>

namespace cvnn {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Stable seed derivation. Depends only on the argument values, never on
/// platform, thread count or call order.
constexpr std::uint64_t stable_mix(std::uint64_t a, std::uint64_t b) noexcept {
  return mix64(mix64(a) ^ (b * 0xd6e8feb86659fd93ULL + 0x632be59bd9b4e019ULL));
}

template <class... Rest>
constexpr std::uint64_t stable_mix(std::uint64_t a, std::uint64_t b, std::uint64_t c,
                                   Rest... rest) noexcept {
  return stable_mix(stable_mix(a, b), c, static_cast<std::uint64_t>(rest)...);
}

/// Role tags keep the primary, auxiliary and projection streams independent.
enum class Stream : std::uint64_t {
  Primary = 0x7072696d,
  Auxiliary = 0x61757869,
  Projection = 0x70726f6a,
  Atoms = 0x61746f6d,
  Oracle = 0x6f72636c,
};

constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream tag) noexcept {
  return stable_mix(seed, static_cast<std::uint64_t>(tag));
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(mix64(seed)) {}

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() { return normal_(engine_); }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

}  // namespace cvnn
