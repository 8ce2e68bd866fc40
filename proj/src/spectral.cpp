#include "rotla/spectral.hpp"

#include <cmath>
#include <numbers>

namespace rotla::spectral {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void Window::validate() const {
  check(length > 0, "window length must be positive");
  check(alpha >= 0.0, "poisson alpha must be >= 0");
}

Tensor window_weights(const Window& w, std::int64_t sample_len) {
  w.validate();
  check(sample_len > 0, "window needs a positive sample extent");
  Tensor out({sample_len});
  for (std::int64_t tau = 0; tau < sample_len; ++tau) {
    switch (w.kind) {
      case WindowKind::rectangular:
        out.at(tau) = 1.0;
        break;
      case WindowKind::hann:
        out.at(tau) = sample_len == 1
                          ? 1.0
                          : 0.5 * (1.0 - std::cos(kTwoPi * static_cast<double>(tau) /
                                                  static_cast<double>(sample_len - 1)));
        break;
      case WindowKind::poisson:
        out.at(tau) = std::exp(-w.alpha * static_cast<double>(tau) / static_cast<double>(w.length));
        break;
    }
  }
  return out;
}

ComplexPair windowed_dft_complex(const Tensor& signal, const Window& w) {
  w.validate();
  check(signal.rank() == 1, "windowed_dft expects a rank-1 signal");
  const std::int64_t L = signal.size();
  const std::int64_t N = w.length;
  const Tensor weights = window_weights(w, L);
  ComplexPair bins = ComplexPair::zeros({N});
#pragma omp parallel for schedule(static)
  for (std::int64_t n = 0; n < N; ++n) {
    double re = 0.0, im = 0.0;
    for (std::int64_t tau = 0; tau < L; ++tau) {
      const double phase = -kTwoPi * static_cast<double>(n) * static_cast<double>(tau) / static_cast<double>(N);
      const double x = signal.at(tau) * weights.at(tau);
      re += x * std::cos(phase);
      im += x * std::sin(phase);
    }
    bins.re.at(n) = re;
    bins.im.at(n) = im;
  }
  return bins;
}

Spectrum windowed_dft(const Tensor& signal, const Window& w) {
  const ComplexPair bins = windowed_dft_complex(signal, w);
  Spectrum s;
  s.magnitudes = Tensor({w.length});
  for (std::int64_t n = 0; n < w.length; ++n)
    s.magnitudes.at(n) = std::hypot(bins.re.at(n), bins.im.at(n));
  return s;
}

Tensor ssm_as_analyzer(const ComplexPair& q, const ComplexPair& k, const Tensor& v, const Tensor& alphas,
                       std::int64_t n_states) {
  check(q.re.size() == n_states && k.re.size() == n_states, "q/k must have one coefficient per state");
  check(alphas.size() == n_states, "alphas must have one rate per state");
  check(v.rank() == 1, "value signal must be rank-1");
  for (std::int64_t n = 0; n < n_states; ++n) check(alphas.at(n) >= 0.0, "decay rates must be >= 0");
  const std::int64_t T = v.size();
  Tensor out({T});
  std::vector<double> sre(static_cast<std::size_t>(n_states), 0.0);
  std::vector<double> sim(static_cast<std::size_t>(n_states), 0.0);
  for (std::int64_t t = 0; t < T; ++t) {
    double o = 0.0;
    for (std::int64_t n = 0; n < n_states; ++n) {
      const double decay = std::exp(-alphas.at(n) / static_cast<double>(n_states));
      const double ang = kTwoPi * static_cast<double>(n) / static_cast<double>(n_states);
      const double ar = decay * std::cos(ang), ai = decay * std::sin(ang);
      const double re = sre[static_cast<std::size_t>(n)], im = sim[static_cast<std::size_t>(n)];
      // s <- A s + k v_t
      const double nre = ar * re - ai * im + k.re.at(n) * v.at(t);
      const double nim = ar * im + ai * re + k.im.at(n) * v.at(t);
      sre[static_cast<std::size_t>(n)] = nre;
      sim[static_cast<std::size_t>(n)] = nim;
      o += q.re.at(n) * nre - q.im.at(n) * nim;
    }
    out.at(t) = o;
  }
  return out;
}

std::pair<double, double> leakage_metrics(const Spectrum& spectrum, double true_frequency_bins) {
  const std::int64_t N = spectrum.magnitudes.size();
  check(N > 0, "spectrum must be non-empty");
  const std::int64_t half = N / 2;
  std::int64_t peak = 0;
  for (std::int64_t n = 1; n <= half; ++n)
    if (spectrum.magnitudes.at(n) > spectrum.magnitudes.at(peak)) peak = n;
  const double peak_mag = spectrum.magnitudes.at(peak);
  double side = 0.0;
  for (std::int64_t n = 0; n <= half; ++n) {
    if (std::llabs(n - peak) <= 1) continue;
    side = std::max(side, spectrum.magnitudes.at(n));
  }
  const double peak_err = std::fabs(static_cast<double>(peak) - std::round(true_frequency_bins));
  const double ratio = peak_mag > 0.0 ? side / peak_mag : 0.0;
  return {peak_err, ratio};
}

}  // namespace rotla::spectral
