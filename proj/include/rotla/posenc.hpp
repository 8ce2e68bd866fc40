#pragma once

#include <cstdint>
#include <utility>

#include "rotla/ops.hpp"
#include "rotla/tensor.hpp"

namespace rotla::debug {
/// Test hook: added to every query-side cumulative angle inside the plain
/// selective_rope_apply (a shared shift would be gauge-invariant).
/// Nonzero values deliberately break the rotation equivalences so the
/// verification suites can prove they would notice.
extern double angle_corruption;
}  // namespace rotla::debug

namespace rotla::posenc {

enum class ScheduleKind { rope_exponential, tan_half_angle };

struct TemperatureSchedule {
  ScheduleKind kind = ScheduleKind::rope_exponential;
  std::int64_t dim = 0;  // even; emits dim/2 temperatures
  double eps = 1e-4;     // inverse base frequency (rope), angle bound factor (tan)
};

/// rope-exponential: theta_n = eps^(n / (dim/2)), n = 0..dim/2-1
/// (standard RoPE with base 1/eps). tan-half-angle: theta_n = tan(phi_n/2)
/// with phi_n evenly spaced on [0, (1-eps)*pi] inclusive.
/// errors: eps outside (0,1), odd dim.
Tensor make_schedule(ScheduleKind kind, std::int64_t dim, double eps);
Tensor make_schedule(const TemperatureSchedule& s);

/// Rotate interleaved pairs (x_{2n}, x_{2n+1}) of each row t by
/// angles[t, n] (counterclockwise). x is [T x d], angles [T x d/2].
Tensor rotate_pairs(const Tensor& x, const Tensor& angles);

/// Cumulative angle track for fixed-frequency RoPE: theta[t, n] =
/// temps[n] * positions[t].
Tensor fixed_angle_track(const std::vector<std::int64_t>& positions, const Tensor& temps);

/// Classic RoPE on a (q, k) pair; both rotated with the same temps and
/// positions. Scores of the rotated pair depend only on position
/// differences. errors: odd last dim.
std::pair<Tensor, Tensor> rope_apply(const Tensor& q, const Tensor& k,
                                     const std::vector<std::int64_t>& positions, const Tensor& temps);

/// Rotate q_t and k_t by the cumulative angles theta[t, .] so that
/// k_rot,tau . q_rot,t realizes the transition product score. Applies the
/// debug::angle_corruption hook. errors: length mismatch.
std::pair<Tensor, Tensor> selective_rope_apply(const Tensor& q, const Tensor& k, const Tensor& angle_track);

/// Adds a position-independent per-head scalar to every causal score
/// (tau <= t) of a [T x T] score matrix.
Tensor positional_bias(const Tensor& scores, double bias);

/// App-style two-reflection factorization of a plane rotation: returns
/// (H_u * H_e, R(theta)) where H_u reflects along u = (cos t/2, sin t/2)
/// and H_e negates the first coordinate. The pair must match exactly.
std::pair<Tensor, Tensor> householder_rotation_check(double theta);

// ---- differentiable (tape) pipeline ----

struct SelectiveRopeConfig {
  std::int64_t head_dim = 0;   // even
  std::int64_t num_heads = 1;
  std::int64_t conv_width = 4;
  TemperatureSchedule schedule;
  bool phase_gate = true;
  bool bias = true;
  bool weight_norm = true;
  bool temps_learnable = false;
  bool conv_diff_init = false;  // [-1, 1] differencing stencil instead of random

  std::int64_t angle_channels() const { return num_heads * head_dim / 2; }
  void validate() const;
};

/// Tape handles for the pipeline parameters (registered by the model).
struct SelectiveRopeVars {
  ad::Var w_omega;        // [H*hd/2 x hd] per-head projection rows
  ad::Var w_omega_scale;  // [H*hd/2 x 1] weight-norm scales (when enabled)
  ad::Var conv_kernel;    // [W x H*hd/2]
  ad::Var gate_w;         // [model_dim x H] (when phase gate enabled)
  ad::Var gate_b;         // [H]
  ad::Var temps;          // [H*hd/2]
};

/// Fig.-style angle pipeline: project the (normalized) query stream to
/// per-head angle channels, causal-convolve over time, gate, scale by the
/// temperatures, then prefix-sum over time (wrapped mod 2*pi).
/// q_stream [B x T x H*hd], hidden [B x T x model_dim]; returns the
/// cumulative track [B x T x H*hd/2].
ad::Var selective_angles(ad::Tape& t, ad::Var q_stream, ad::Var hidden, const SelectiveRopeVars& p,
                         const SelectiveRopeConfig& cfg);

/// Differentiable pair rotation of q and k by a shared cumulative track.
std::pair<ad::Var, ad::Var> selective_rope_apply(ad::Tape& t, ad::Var q, ad::Var k, ad::Var angle_track);

/// Fixed-RoPE track as a constant, batched: [B x T x H*hd/2].
ad::Var fixed_track_const(ad::Tape& t, std::int64_t batch, std::int64_t seq_len, std::int64_t heads,
                          const Tensor& temps);

}  // namespace rotla::posenc
