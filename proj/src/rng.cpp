#include "rotla/rng.hpp"

#include <cmath>
#include <numbers>

namespace rotla {

namespace {

// splitmix64 finalizer; full 64-bit avalanche.
std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t Rng::next_u64() {
  return mix64(seed_ + 0x9e3779b97f4a7c15ULL * ++counter_);
}

double Rng::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t n) {
  check(n > 0, "next_below requires n > 0");
  // rejection to stay exactly uniform
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = next_u64();
  while (x >= limit) x = next_u64();
  return x % n;
}

double Rng::next_gaussian(double sigma) {
  check(sigma >= 0.0, "gaussian sigma must be >= 0");
  if (sigma == 0.0) return 0.0;
  if (has_spare_) {
    has_spare_ = false;
    return sigma * spare_gaussian_;
  }
  // Box-Muller; u1 nudged away from zero so log stays finite.
  double u1 = next_double();
  double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * std::numbers::pi * u2;
  spare_gaussian_ = r * std::sin(a);
  has_spare_ = true;
  return sigma * r * std::cos(a);
}

Tensor Rng::gaussian_tensor(std::vector<std::int64_t> shape, double sigma) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = next_gaussian(sigma);
  return t;
}

Tensor Rng::uniform_tensor(std::vector<std::int64_t> shape, double lo, double hi) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t.at(i) = lo + (hi - lo) * next_double();
  return t;
}

Rng Rng::substream(std::string_view label) const {
  return Rng(mix64(seed_ ^ fnv1a(label)));
}

Rng Rng::substream(std::uint64_t index) const {
  return Rng(mix64(seed_ ^ mix64(index + 0x51ed2701ULL)));
}

}  // namespace rotla
