#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rotla/autodiff.hpp"

namespace rotla::ad {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_location;
  bool pass(double tol = 1e-4) const { return max_rel_err <= tol; }
};

/// Central-difference check of every element of every input against the
/// tape gradient. `build` must construct a scalar loss from the given
/// leaves on the supplied tape. Relative error uses the floor
/// max(|analytic|, |numeric|, 1e-3), so negligible gradients are compared
/// absolutely at the 1e-7 scale while meaningful ones are compared
/// relatively.
GradCheckReport grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                           const std::vector<Tensor>& inputs, double step = 1e-5);

}  // namespace rotla::ad
