#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace poisonlab {

/// Seeded pseudo-random stream.
///
/// Wraps std::mt19937_64 (whose output sequence is fixed by the standard) and
/// performs its own real/normal conversions, so streams are bit-identical
/// across standard libraries. Copying an Rng copies its full state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 bits of resolution.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller.
  double normal();
  /// Uniform integer in [0, n). Requires n > 0.
  std::size_t index(std::size_t n);

  /// Independent child stream keyed by (seed, stream). Does not advance this
  /// generator, so splitting is order-independent.
  Rng split(std::uint64_t stream) const;

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace poisonlab
