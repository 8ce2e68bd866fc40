#include "rotla/rff.hpp"

#include <cmath>

#include "rotla/parallel.hpp"

namespace rotla::rff {

RffEnsemble sample_ensemble(std::uint64_t seed, std::int64_t features, std::int64_t dim, double sigma) {
  check(features > 0 && dim > 0, "ensemble needs positive feature count and dim");
  check(sigma >= 0.0, "ensemble sigma must be >= 0");
  Rng rng(seed);
  RffEnsemble e;
  e.omega = rng.gaussian_tensor({features, dim}, sigma);
  e.sigma = sigma;
  e.seed = seed;
  return e;
}

namespace {

double squared_norm(const Tensor& x) {
  double ss = 0.0;
  for (std::int64_t i = 0; i < x.size(); ++i) ss += x.at(i) * x.at(i);
  return ss;
}

double squared_norm_row(const Tensor& x, std::int64_t row) {
  double ss = 0.0;
  for (std::int64_t j = 0; j < x.dim(1); ++j) ss += x.at(row, j) * x.at(row, j);
  return ss;
}

}  // namespace

ComplexPair feature_map(const Tensor& x, const RffEnsemble& ensemble) {
  check(x.size() == ensemble.dim(), "feature_map input dim " + x.shape_str() + " does not match ensemble");
  const std::int64_t D = ensemble.features();
  const std::int64_t d = ensemble.dim();
  const double modulus = std::exp(squared_norm(x) / 2.0);
  if (!std::isfinite(modulus))
    contract_fail("feature_map modulus e^{|x|^2/2} overflowed; L2-normalize the inputs");
  ComplexPair out = ComplexPair::zeros({D});
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < D; ++j) {
    double dot = 0.0;
    for (std::int64_t i = 0; i < d; ++i) dot += ensemble.omega.at(j, i) * x.at(i);
    out.re.at(j) = modulus * std::cos(dot);
    out.im.at(j) = modulus * std::sin(dot);
  }
  return out;
}

double kernel_estimate(const Tensor& q, const Tensor& k, const RffEnsemble& ensemble) {
  const ComplexPair fq = feature_map(q, ensemble);
  const ComplexPair fk = feature_map(k, ensemble);
  const std::int64_t D = ensemble.features();
  std::vector<double> contrib(static_cast<std::size_t>(D));
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < D; ++j)
    contrib[static_cast<std::size_t>(j)] = fq.re.at(j) * fk.re.at(j) + fq.im.at(j) * fk.im.at(j);
  return pairwise_sum(contrib) / static_cast<double>(D);
}

double kernel_estimate_stderr(const Tensor& q, const Tensor& k, const RffEnsemble& ensemble) {
  const ComplexPair fq = feature_map(q, ensemble);
  const ComplexPair fk = feature_map(k, ensemble);
  const std::int64_t D = ensemble.features();
  std::vector<double> contrib(static_cast<std::size_t>(D));
  for (std::int64_t j = 0; j < D; ++j)
    contrib[static_cast<std::size_t>(j)] = fq.re.at(j) * fk.re.at(j) + fq.im.at(j) * fk.im.at(j);
  const double mean = pairwise_sum(contrib) / static_cast<double>(D);
  std::vector<double> sq(static_cast<std::size_t>(D));
  for (std::int64_t j = 0; j < D; ++j) {
    const double dv = contrib[static_cast<std::size_t>(j)] - mean;
    sq[static_cast<std::size_t>(j)] = dv * dv;
  }
  const double var = pairwise_sum(sq) / static_cast<double>(D - 1);
  return std::sqrt(var / static_cast<double>(D));
}

Tensor rff_attention_direct(const Tensor& q, const Tensor& k, const Tensor& v, const RffEnsemble& ensemble,
                            bool normalize) {
  check(q.rank() == 2 && q.same_shape(k), "rff_attention_direct expects matching [T x d] q/k");
  check(v.rank() == 2 && v.dim(0) == q.dim(0), "value stream misaligned");
  const std::int64_t T = q.dim(0), dv = v.dim(1), d = q.dim(1);
  Tensor out({T, dv});
  Tensor row_q({d}), row_k({d});
  Tensor scores({T, T});
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t j = 0; j < d; ++j) row_q.at(j) = q.at(t, j);
    for (std::int64_t tau = 0; tau <= t; ++tau) {
      for (std::int64_t j = 0; j < d; ++j) row_k.at(j) = k.at(tau, j);
      scores.at(t, tau) = kernel_estimate(row_q, row_k, ensemble);
    }
  }
  for (std::int64_t t = 0; t < T; ++t) {
    double z = 0.0;
    for (std::int64_t tau = 0; tau <= t; ++tau) {
      z += scores.at(t, tau);
      for (std::int64_t i = 0; i < dv; ++i) out.at(t, i) += scores.at(t, tau) * v.at(tau, i);
    }
    if (normalize)
      for (std::int64_t i = 0; i < dv; ++i) out.at(t, i) /= z;
  }
  return out;
}

std::pair<Tensor, RffState> rff_attention_recurrent(const Tensor& q, const Tensor& k, const Tensor& v,
                                                    const RffEnsemble& ensemble, bool normalize) {
  check(q.rank() == 2 && q.same_shape(k), "rff_attention_recurrent expects matching [T x d] q/k");
  check(v.rank() == 2 && v.dim(0) == q.dim(0), "value stream misaligned");
  const std::int64_t T = q.dim(0), d = q.dim(1), dv = v.dim(1), D = ensemble.features();
  for (std::int64_t t = 0; t < T; ++t) {
    double ss = 0.0;
    for (std::int64_t j = 0; j < d; ++j) ss += q.at(t, j) * q.at(t, j);
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-6)
      contract_fail("rff_attention_recurrent requires unit-norm query rows (row " + std::to_string(t) + ")");
  }

  RffState st;
  st.s = ComplexPair::zeros({dv, D});
  st.z = ComplexPair::zeros({D});
  Tensor out({T, dv});
  Tensor prev_q = Tensor::zeros({d});  // q_0 := 0 makes step 1 exact

  for (std::int64_t t = 0; t < T; ++t) {
    const double normq = squared_norm_row(q, t), normk = squared_norm_row(k, t);
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < D; ++j) {
      double rot = 0.0, wq = 0.0, wk = 0.0;
      for (std::int64_t i = 0; i < d; ++i) {
        const double w = ensemble.omega.at(j, i);
        rot += w * (q.at(t, i) - prev_q.at(i));
        wq += w * q.at(t, i);
        wk += w * k.at(t, i);
      }
      const double cr = std::cos(rot), sr = std::sin(rot);
      // column j of the state rotates by e^{i rot}
      for (std::int64_t i = 0; i < dv; ++i) {
        const double a = st.s.re.at(i, j), b = st.s.im.at(i, j);
        st.s.re.at(i, j) = a * cr - b * sr;
        st.s.im.at(i, j) = a * sr + b * cr;
      }
      {
        const double a = st.z.re.at(j), b = st.z.im.at(j);
        st.z.re.at(j) = a * cr - b * sr;
        st.z.im.at(j) = a * sr + b * cr;
      }
      // fused write phi(q_t) conj(phi(k_t)): modulus e^{(|q|^2+|k|^2)/2},
      // phase w.(q_t - k_t)
      const double modulus = std::exp((normq + normk) / 2.0);
      const double phase = wq - wk;
      const double wr = modulus * std::cos(phase);
      const double wi = modulus * std::sin(phase);
      for (std::int64_t i = 0; i < dv; ++i) {
        st.s.re.at(i, j) += v.at(t, i) * wr;
        st.s.im.at(i, j) += v.at(t, i) * wi;
      }
      st.z.re.at(j) += wr;
      st.z.im.at(j) += wi;
    }
    for (std::int64_t i = 0; i < d; ++i) prev_q.at(i) = q.at(t, i);

    // read-out: sum the feature columns
    double zsum = 0.0;
    if (normalize) zsum = pairwise_sum(st.z.re.flat()) / static_cast<double>(D);
    for (std::int64_t i = 0; i < dv; ++i) {
      const double s = pairwise_sum({st.s.re.data() + i * D, static_cast<std::size_t>(D)}) / static_cast<double>(D);
      out.at(t, i) = normalize ? s / zsum : s;
    }
  }
  return {out, std::move(st)};
}

double optimal_sigma(double theta) {
  check(theta >= 0.0 && theta < std::acos(-1.0), "optimal_sigma domain is [0, pi)");
  return std::tan(theta / 2.0);
}

double analytic_limit_error(double sigma, double xi) {
  check(xi >= -1.0 && xi <= 1.0, "xi must lie in [-1, 1]");
  const double s2 = sigma * sigma;
  return std::exp(2.0 - 2.0 * s2 * (1.0 + xi)) - 2.0 * std::exp((1.0 - s2) * (1.0 + xi));
}

}  // namespace rotla::rff
