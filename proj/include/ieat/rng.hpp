#pragma once

#include <cstdint>
#include <limits>
#include <string_view>

namespace ieat {

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for one subsystem, derived from the top-level seed and a label such as
/// a test id or "synth".
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) noexcept {
  return mix64(seed + mix64(fnv1a64(label)));
}

/// Seed for element `index` of a stream; a pure function of both arguments so
/// any worker can reproduce any element.
constexpr std::uint64_t stream_seed(std::uint64_t stream_key, std::uint64_t index) noexcept {
  return mix64(stream_key ^ mix64(index + 0x9e3779b97f4a7c15ULL));
}

/// SplitMix64 generator; satisfies UniformRandomBitGenerator.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

 private:
  std::uint64_t state_;
};

}  // namespace ieat
