#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rotla/rng.hpp"
#include "rotla/spectral.hpp"

using namespace rotla;
namespace sp = rotla::spectral;

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;

Tensor tone(std::int64_t len, double bins_freq, std::int64_t N) {
  Tensor v({len});
  for (std::int64_t t = 0; t < len; ++t)
    v.at(t) = std::cos(kTwoPi * bins_freq * static_cast<double>(t) / static_cast<double>(N));
  return v;
}
}  // namespace

TEST_CASE("rectangular window DFT: constant signal collapses to bin 0") {
  const std::int64_t N = 32;
  sp::Window w{sp::WindowKind::rectangular, N, 0.0};
  sp::Spectrum s = sp::windowed_dft(Tensor::full({N}, 1.0), w);
  CHECK(s.magnitudes.at(0) == doctest::Approx(static_cast<double>(N)).epsilon(1e-12));
  for (std::int64_t n = 1; n < N; ++n) CHECK(s.magnitudes.at(n) < 1e-10);
}

TEST_CASE("on-grid tone peaks exactly at bins 3 and N-3") {
  const std::int64_t N = 32;
  sp::Window w{sp::WindowKind::rectangular, N, 0.0};
  sp::Spectrum s = sp::windowed_dft(tone(N, 3.0, N), w);
  CHECK(s.magnitudes.at(3) == doctest::Approx(static_cast<double>(N) / 2.0).epsilon(1e-12));
  CHECK(s.magnitudes.at(N - 3) == doctest::Approx(static_cast<double>(N) / 2.0).epsilon(1e-12));
  for (std::int64_t n = 0; n < N; ++n) {
    if (n == 3 || n == N - 3) continue;
    CHECK(s.magnitudes.at(n) < 1e-9);
  }
  auto [peak_err, side] = sp::leakage_metrics(s, 3.0);
  CHECK(peak_err == 0.0);
  CHECK(side <= 1e-10);
}

TEST_CASE("off-grid tone: tapered windows beat rectangular sidelobes, peak stays at 7") {
  const std::int64_t N = 64;
  Tensor v = tone(N, 7.3, N);
  sp::Spectrum rect = sp::windowed_dft(v, {sp::WindowKind::rectangular, N, 0.0});
  sp::Spectrum hann = sp::windowed_dft(v, {sp::WindowKind::hann, N, 0.0});
  sp::Spectrum pois = sp::windowed_dft(v, {sp::WindowKind::poisson, N, 4.0});
  auto [er, sr] = sp::leakage_metrics(rect, 7.3);
  auto [eh, sh] = sp::leakage_metrics(hann, 7.3);
  auto [ep, spz] = sp::leakage_metrics(pois, 7.3);
  CHECK(er == 0.0);
  CHECK(eh == 0.0);
  CHECK(ep == 0.0);
  CHECK(sh < sr);
  // The one-sided exponential window has a Lorentzian skirt: its
  // max-outside-peak ratio sits ABOVE rectangular at this metric for any
  // alpha in [2, 8] (0.27/0.42/0.67 vs 0.17). The verification suite
  // reports the pinned ordering claim with these measured values.
  CHECK(spz > sr);
  CHECK(std::isfinite(spz));
}

TEST_CASE("white noise keeps metrics finite") {
  Rng rng(61);
  Tensor v = rng.gaussian_tensor({64}, 1.0);
  sp::Spectrum s = sp::windowed_dft(v, {sp::WindowKind::rectangular, 64, 0.0});
  auto [pe, sr] = sp::leakage_metrics(s, 7.3);
  CHECK(std::isfinite(pe));
  CHECK(std::isfinite(sr));
}

TEST_CASE("spectrum is linear in the signal before magnitudes") {
  Rng rng(62);
  const std::int64_t N = 24;
  Tensor v1 = rng.gaussian_tensor({N}, 1.0);
  Tensor v2 = rng.gaussian_tensor({N}, 1.0);
  const double a = 1.7, b = -0.4;
  Tensor mix({N});
  for (std::int64_t t = 0; t < N; ++t) mix.at(t) = a * v1.at(t) + b * v2.at(t);
  sp::Window w{sp::WindowKind::hann, N, 0.0};
  ComplexPair s1 = sp::windowed_dft_complex(v1, w);
  ComplexPair s2 = sp::windowed_dft_complex(v2, w);
  ComplexPair sm = sp::windowed_dft_complex(mix, w);
  for (std::int64_t n = 0; n < N; ++n) {
    CHECK(sm.re.at(n) == doctest::Approx(a * s1.re.at(n) + b * s2.re.at(n)).epsilon(1e-10));
    CHECK(sm.im.at(n) == doctest::Approx(a * s1.im.at(n) + b * s2.im.at(n)).epsilon(1e-10));
  }
}

TEST_CASE("pure-imaginary analyzer equals the rectangular DFT read-out for t <= N-1") {
  Rng rng(63);
  const std::int64_t N = 16, T = 16;
  Tensor v = rng.gaussian_tensor({T}, 1.0);
  ComplexPair q(rng.gaussian_tensor({N}, 1.0), rng.gaussian_tensor({N}, 1.0));
  ComplexPair k(rng.gaussian_tensor({N}, 1.0), rng.gaussian_tensor({N}, 1.0));
  Tensor out = sp::ssm_as_analyzer(q, k, v, Tensor::zeros({N}), N);

  for (std::int64_t t = 0; t < T; ++t) {
    // prefix DFT bins of v_{0..t}
    Tensor prefix({t + 1});
    for (std::int64_t tau = 0; tau <= t; ++tau) prefix.at(tau) = v.at(tau);
    ComplexPair bins = sp::windowed_dft_complex(prefix, {sp::WindowKind::rectangular, N, 0.0});
    // recombine with q_n k_n e^{2 pi i n t / N}
    double expect = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      const double ang = kTwoPi * static_cast<double>(n) * static_cast<double>(t) / static_cast<double>(N);
      const double pr = std::cos(ang), pi_ = std::sin(ang);
      // (q k) * e^{i ang} * X_n, real part
      const double qkr = q.re.at(n) * k.re.at(n) - q.im.at(n) * k.im.at(n);
      const double qki = q.re.at(n) * k.im.at(n) + q.im.at(n) * k.re.at(n);
      const double mr = qkr * pr - qki * pi_;
      const double mi = qkr * pi_ + qki * pr;
      expect += mr * bins.re.at(n) - mi * bins.im.at(n);
    }
    CHECK(std::fabs(out.at(t) - expect) < 1e-10);
  }
}

TEST_CASE("analyzer with decay applies a current-anchored poisson taper") {
  Rng rng(64);
  const std::int64_t N = 12, T = 12;
  const double alpha = 3.0;
  Tensor v = rng.gaussian_tensor({T}, 1.0);
  ComplexPair q(rng.gaussian_tensor({N}, 1.0), rng.gaussian_tensor({N}, 1.0));
  ComplexPair k(rng.gaussian_tensor({N}, 1.0), rng.gaussian_tensor({N}, 1.0));
  Tensor out = sp::ssm_as_analyzer(q, k, v, Tensor::full({N}, alpha), N);
  // direct evaluation: o_t = Re sum_n q_n k_n sum_tau e^{(-a + 2 pi i n)(t - tau)/N} v_tau
  for (std::int64_t t = 0; t < T; ++t) {
    double expect = 0.0;
    for (std::int64_t n = 0; n < N; ++n) {
      double xr = 0.0, xi = 0.0;
      for (std::int64_t tau = 0; tau <= t; ++tau) {
        const double lag = static_cast<double>(t - tau);
        const double mag = std::exp(-alpha * lag / static_cast<double>(N));
        const double ang = kTwoPi * static_cast<double>(n) * lag / static_cast<double>(N);
        xr += mag * std::cos(ang) * v.at(tau);
        xi += mag * std::sin(ang) * v.at(tau);
      }
      expect += (q.re.at(n) * k.re.at(n) - q.im.at(n) * k.im.at(n)) * xr -
                (q.re.at(n) * k.im.at(n) + q.im.at(n) * k.re.at(n)) * xi;
    }
    CHECK(std::fabs(out.at(t) - expect) < 1e-10);
  }
  // memory check: the contribution of v_0 decays like e^{-alpha t / N}
  Tensor delta = Tensor::zeros({T});
  delta.at(0) = 1.0;
  ComplexPair q1(Tensor::full({N}, 1.0), Tensor::zeros({N}));
  ComplexPair k1(Tensor::full({N}, 1.0), Tensor::zeros({N}));
  Tensor imp = sp::ssm_as_analyzer(q1, k1, delta, Tensor::full({N}, 10.0), N);
  // bin 0 alone would give exactly e^{-10 t / N}; all bins stay bounded by it
  for (std::int64_t t = 1; t < T; ++t)
    CHECK(std::fabs(imp.at(t)) <= static_cast<double>(N) * std::exp(-10.0 * static_cast<double>(t) /
                                                                   static_cast<double>(N)) + 1e-12);

  // v = 0 gives zero outputs
  Tensor zeros = sp::ssm_as_analyzer(q, k, Tensor::zeros({T}), Tensor::zeros({N}), N);
  CHECK(max_abs(zeros) == 0.0);
}
