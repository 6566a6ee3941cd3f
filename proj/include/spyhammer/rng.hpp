#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace spyhammer {

// Counter-based randomness. Every random decision in the simulator is a pure
// function of (seed, coordinates), so results do not depend on evaluation
// order or thread count.

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_words(std::initializer_list<std::uint64_t> words) noexcept {
  std::uint64_t h = 0x6a09e667f3bcc909ULL;
  for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
  return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Maps h onto [0, n) without division.
constexpr std::uint32_t to_range(std::uint64_t h, std::uint32_t n) noexcept {
  return static_cast<std::uint32_t>(((h >> 32) * static_cast<std::uint64_t>(n)) >> 32);
}

/// SplitMix64 engine; satisfies UniformRandomBitGenerator so it can drive the
/// standard distributions.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t state) noexcept : state_(state) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  double uniform() noexcept { return to_unit((*this)()); }

 private:
  std::uint64_t state_;
};

// Stream tags keep independent purposes from sharing random streams.
namespace stream {
inline constexpr std::uint64_t kBandCell = 0xB1;
inline constexpr std::uint64_t kCanaryPlant = 0xC1;
inline constexpr std::uint64_t kAggregate = 0xA1;
inline constexpr std::uint64_t kCellFlip = 0xF1;
inline constexpr std::uint64_t kSingleSided = 0x51;
inline constexpr std::uint64_t kRandomPattern = 0xD1;
inline constexpr std::uint64_t kSequence = 0xE1;
inline constexpr std::uint64_t kDonor = 0xD2;
}  // namespace stream

}  // namespace spyhammer
