#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace synspec {

/// SplitMix64 finalizer. Bijective on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Derive an independent child key from a parent key and an index.
constexpr std::uint64_t child_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return mix64(parent ^ mix64(index ^ 0x6a09e667f3bcc909ULL));
}

/// FNV-1a over a tag; used to keep domains ("fingerprint", "train", ...) apart.
constexpr std::uint64_t tag_hash(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Counter-based random stream.
///
/// The n-th draw is a pure function of (key, n), so streams can be split by
/// index without touching shared state. Two streams with the same key produce
/// the same sequence on every platform; nothing here goes through
/// <random> distributions, whose output is implementation-defined.
class RandomStream {
 public:
  constexpr explicit RandomStream(std::uint64_t key = 0) noexcept : key_(key) {}

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  constexpr RandomStream split(std::uint64_t index) const noexcept {
    return RandomStream(child_seed(key_, index));
  }
  constexpr RandomStream split(std::string_view tag) const noexcept {
    return split(tag_hash(tag));
  }

  constexpr std::uint64_t next_u64() noexcept {
    return mix64(key_ + 0xd1b54a32d192ed03ULL * ++counter_);
  }

  /// Uniform in [0, 1) with 53 bits.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  /// Uniform in [lo, hi]. Returns lo when lo == hi.
  double uniform(double lo, double hi) noexcept {
    if (lo == hi) return lo;
    return lo + (hi - lo) * uniform();
  }

  /// Unbiased integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound) noexcept {
    // Lemire's multiply-shift with rejection.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = -bound % bound;
      while (low < threshold) {
        x = next_u64();
        m = static_cast<__uint128_t>(x) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Integer in [lo, hi] inclusive.
  std::int64_t integer(std::int64_t lo, std::int64_t hi) noexcept {
    return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace synspec
