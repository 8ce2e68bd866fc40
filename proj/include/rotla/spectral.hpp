#pragma once

#include <cstdint>
#include <utility>

#include "rotla/tensor.hpp"

namespace rotla::spectral {

enum class WindowKind { rectangular, hann, poisson };

struct Window {
  WindowKind kind = WindowKind::rectangular;
  std::int64_t length = 0;  // N: DFT size and the Poisson decay scale
  double alpha = 0.0;       // Poisson rate, >= 0

  void validate() const;
};

/// Window weights over a sample extent of L points. Rectangular is
/// all-ones, Hann tapers over the extent, Poisson decays as
/// exp(-alpha * tau / N).
Tensor window_weights(const Window& w, std::int64_t sample_len);

struct Spectrum {
  Tensor magnitudes;  // [N], bin spacing 2*pi/N
};

/// Complex N-bin DFT of the windowed signal: bin n = sum_tau
/// exp(-2*pi*i*n*tau/N) v_tau w_tau. Signals longer than N are allowed
/// (the leakage regime).
ComplexPair windowed_dft_complex(const Tensor& signal, const Window& w);
Spectrum windowed_dft(const Tensor& signal, const Window& w);

/// Diagonal complex recurrence s_n <- exp((-alpha_n + 2*pi*i*n)/N) s_n +
/// k_n v_t with read-out o_t = Re{ sum_n q_n s_n(t) }. With alphas = 0 the
/// outputs equal the rectangular-window DFT bins recombined with the
/// phases q_n k_n exp(2*pi*i*n*t/N); with alphas > 0 the window becomes a
/// Poisson taper anchored at the current step.
Tensor ssm_as_analyzer(const ComplexPair& q, const ComplexPair& k, const Tensor& v, const Tensor& alphas,
                       std::int64_t n_states);

/// (peak_bin_error, sidelobe_ratio) of a real-signal spectrum. The search
/// runs over the non-mirrored half (bins 0..N/2): peak_bin_error =
/// |argmax - round(true_bin)|, sidelobe_ratio = max magnitude outside
/// +-1 bin of the peak over the peak magnitude.
std::pair<double, double> leakage_metrics(const Spectrum& spectrum, double true_frequency_bins);

}  // namespace rotla::spectral
