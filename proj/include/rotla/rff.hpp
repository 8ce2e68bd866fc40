#pragma once

#include <cstdint>
#include <utility>

#include "rotla/rng.hpp"
#include "rotla/tensor.hpp"

namespace rotla::rff {

/// Frozen random-feature frequencies: rows drawn i.i.d. N(0, sigma^2 I)
/// under the stored seed. One ensemble is shared by every timestepit
/// approximates.
struct RffEnsemble {
  Tensor omega;  // [D x d]
  double sigma = 1.0;
  std::uint64_t seed = 0;

  std::int64_t features() const { return omega.dim(0); }
  std::int64_t dim() const { return omega.dim(1); }
};

RffEnsemble sample_ensemble(std::uint64_t seed, std::int64_t features, std::int64_t dim, double sigma);

/// Recurrent state: column j carries the running contribution of feature j.
struct RffState {
  ComplexPair s;  // [d x D]
  ComplexPair z;  // [D]
};

/// Exponential-kernel feature map: entry j = e^{|x|^2/2} (cos w_j.x, sin
/// w_j.x). errors: overflow of the modulus (advises L2 normalization).
ComplexPair feature_map(const Tensor& x, const RffEnsemble& ensemble);

/// (1/D) sum_j Re{ phi(q)_j conj(phi(k)_j) }; unbiased for exp(q.k) at
/// sigma = 1. Feature contributions are combined with a fixed pairwise
/// reduction, so results do not depend on thread count.
double kernel_estimate(const Tensor& q, const Tensor& k, const RffEnsemble& ensemble);

/// Standard error of the feature contributions around kernel_estimate;
/// used by the Monte-Carlo tolerance checks.
double kernel_estimate_stderr(const Tensor& q, const Tensor& k, const RffEnsemble& ensemble);

/// Quadratic-path attention: out_t = sum_{tau<=t} est(q_t, k_tau) v_tau,
/// optionally normalized by the matching scalar accumulation.
/// q, k rows are expected L2-normalized.
Tensor rff_attention_direct(const Tensor& q, const Tensor& k, const Tensor& v, const RffEnsemble& ensemble,
                            bool normalize);

/// Exact linear-time refactoring of the direct path: the state rotates by
/// diag(exp(i W (q_t - q_{t-1}))) and accumulates fused feature writes
/// (q_0 := 0, S_0 = 0). errors: q rows off unit norm beyond 1e-6.
std::pair<Tensor, RffState> rff_attention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v,
                                                    const RffEnsemble& ensemble, bool normalize = false);

/// Optimal feature variance for a unit pair at angle theta: tan(theta/2).
/// errors: theta outside [0, pi).
double optimal_sigma(double theta);

/// Large-D limit of the estimator's squared error at q.k = xi, up to a
/// sigma-independent constant: e^{2 - 2 s^2 (1+xi)} - 2 e^{(1 - s^2)(1+xi)}.
double analytic_limit_error(double sigma, double xi);

}  // namespace rotla::rff
