#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rotla {

/// Deterministic sum: fixed 4096-element blocks reduced pairwise, then the
/// block partials reduced pairwise. The result does not depend on the
/// number of OpenMP threads.
double pairwise_sum(std::span<const double> xs);

/// Pairwise reduction of an explicit partial list (serial, fixed order).
double pairwise_reduce(std::vector<double> partials);

int max_threads();

}  // namespace rotla
