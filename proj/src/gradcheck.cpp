#include "rotla/gradcheck.hpp"

#include <cmath>

namespace rotla::ad {

GradCheckReport grad_check(const std::function<Var(Tape&, const std::vector<Var>&)>& build,
                           const std::vector<Tensor>& inputs, double step) {
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& x : inputs) leaves.push_back(tape.leaf(x, true));
    Var loss = build(tape, leaves);
    tape.backward(loss);
    for (Var v : leaves) analytic.push_back(tape.grad(v));
  }

  auto eval = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> leaves;
    for (const Tensor& x : xs) leaves.push_back(tape.leaf(x, false));
    return tape.val(build(tape, leaves)).at(0);
  };

  GradCheckReport report;
  std::vector<Tensor> work = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (std::int64_t j = 0; j < inputs[i].size(); ++j) {
      const double orig = work[i].at(j);
      work[i].at(j) = orig + step;
      const double lp = eval(work);
      work[i].at(j) = orig - step;
      const double lm = eval(work);
      work[i].at(j) = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double an = analytic[i].at(j);
      const double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-3});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_location =
            "input " + std::to_string(i) + " elem " + std::to_string(j) + " analytic " + std::to_string(an) +
            " fd " + std::to_string(fd);
      }
    }
  }
  return report;
}

}  // namespace rotla::ad
