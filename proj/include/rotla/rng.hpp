#pragma once

#include <cstdint>
#include <string_view>

#include "rotla/tensor.hpp"

namespace rotla {

/// Counter-based generator: output n is a pure function of (seed, n), so
/// equal seeds replay the identical stream regardless of platform or
/// thread count. Gaussian draws use Box-Muller on top of the counter.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 53 random bits.
  double next_double();
  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);
  double next_gaussian(double sigma = 1.0);

  Tensor gaussian_tensor(std::vector<std::int64_t> shape, double sigma);
  Tensor uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi);

  /// Independent labeled stream derived from this seed. Used to fan a
  /// single root seed out to data/init/rff sub-streams.
  Rng substream(std::string_view label) const;
  Rng substream(std::uint64_t index) const;

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
  double spare_gaussian_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace rotla
