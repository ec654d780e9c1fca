#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace rmshift {

// 64-bit FNV-1a. Stable across platforms, used for content fingerprints and
// for deriving random streams.
constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr uint64_t Fnv1a(std::string_view bytes, uint64_t h = kFnvOffset) {
  for (char c : bytes) {
    h ^= static_cast<uint8_t>(c);
    h *= kFnvPrime;
  }
  return h;
}

constexpr uint64_t SplitMix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Combines a seed with a sequence of labels. Each label is length-prefixed so
// ("ab", "c") and ("a", "bc") never collide.
template <typename... Parts>
uint64_t DeriveSeed(uint64_t seed, const Parts&... parts) {
  uint64_t h = SplitMix64(seed);
  auto mix = [&h](std::string_view part) {
    h = Fnv1a(std::to_string(part.size()) + ":", h);
    h = Fnv1a(part, h);
    h = SplitMix64(h);
  };
  (mix(std::string_view(parts)), ...);
  return h;
}

inline std::string HexDigest(uint64_t h) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[i] = kDigits[h & 0xf];
  return out;
}

// Deterministic random stream. Draws are built from raw mt19937_64 output
// rather than std distributions, whose algorithms vary across standard
// library implementations.
class RandomStream {
 public:
  explicit RandomStream(uint64_t seed) : engine_(seed) {}

  // Uniform double in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection sampling removes modulo bias.
  uint64_t Below(uint64_t n) {
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace rmshift
