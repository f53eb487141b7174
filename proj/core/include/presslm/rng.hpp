#pragma once

#include <cstdint>

namespace presslm {

/// Counter-based pseudo-random generator. Draw i for a given seed is a pure
/// function of (seed, i), so dropout masks and noise sequences replay exactly
/// under a fixed seed, independent of platform RNG library details.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t next_u64();

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform();

  /// Standard normal via Box-Muller; consumes exactly two draws, no cached
  /// spare, so the stream position stays a pure function of the call count.
  double gaussian();

  std::uint64_t counter() const { return counter_; }

  /// Derives a child seed from a parent seed and a stream index. Used to give
  /// every (epoch, sample) or (corpus row) its own independent stream.
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b);
  static std::uint64_t mix(std::uint64_t a, std::uint64_t b, std::uint64_t c);

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// FNV-1a over a byte string; the hash used by the offline client stubs so
/// their outputs are identical across machines and standard library versions.
std::uint64_t fnv1a64(const void* bytes, std::size_t len);
std::uint64_t fnv1a64(std::string_view text);

}  // namespace presslm
