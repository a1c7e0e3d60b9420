#pragma once

#include <cstdint>

namespace cloak {

/// SplitMix64 finalizer; also used to derive independent stream keys.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based stream keyed by (seed, stream index): the k-th draw of a
/// stream depends only on (seed, index, k), so walks can be evaluated in
/// any order or on any thread.
class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t index)
      : key_(mix64(seed ^ mix64(index + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cloak
