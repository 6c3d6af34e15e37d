#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace triage {

// 64-bit FNV-1a. Stable across platforms and runs; used for warning ids,
// manifest digests and config digests.
class StableHasher {
 public:
  static constexpr std::uint64_t kOffset = 0xcbf29ce484222325ULL;
  static constexpr std::uint64_t kPrime = 0x100000001b3ULL;

  StableHasher& bytes(std::string_view s) {
    for (unsigned char c : s) {
      state_ ^= c;
      state_ *= kPrime;
    }
    return *this;
  }

  // Field separator (ASCII unit separator) so ("ab","c") != ("a","bc").
  StableHasher& field(std::string_view s) {
    bytes(s);
    return bytes(std::string_view("\x1f", 1));
  }

  StableHasher& field(std::int64_t v) { return field(std::to_string(v)); }

  std::uint64_t digest() const { return state_; }

 private:
  std::uint64_t state_ = kOffset;
};

inline std::uint64_t fnv1a64(std::string_view s) { return StableHasher{}.bytes(s).digest(); }

// SplitMix64 finalizer; used to derive independent RNG streams from (seed, key).
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t combine_seed(std::uint64_t seed, std::uint64_t key) {
  return mix64(mix64(seed) ^ key);
}

std::string to_hex(std::uint64_t v);
std::optional<std::uint64_t> parse_hex(std::string_view s);

}  // namespace triage
