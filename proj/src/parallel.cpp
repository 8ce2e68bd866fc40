#include "rotla/parallel.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace rotla {

namespace {

constexpr std::int64_t kBlock = 4096;

double sum_block(const double* xs, std::int64_t n) {
  if (n <= 8) {
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += xs[i];
    return s;
  }
  const std::int64_t half = n / 2;
  return sum_block(xs, half) + sum_block(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
  const std::int64_t n = static_cast<std::int64_t>(xs.size());
  if (n <= kBlock) return sum_block(xs.data(), n);
  const std::int64_t blocks = (n + kBlock - 1) / kBlock;
  std::vector<double> partials(static_cast<std::size_t>(blocks), 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < blocks; ++b) {
    const std::int64_t lo = b * kBlock;
    const std::int64_t len = std::min(kBlock, n - lo);
    partials[static_cast<std::size_t>(b)] = sum_block(xs.data() + lo, len);
  }
  return pairwise_reduce(std::move(partials));
}

double pairwise_reduce(std::vector<double> partials) {
  if (partials.empty()) return 0.0;
  return sum_block(partials.data(), static_cast<std::int64_t>(partials.size()));
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace rotla
