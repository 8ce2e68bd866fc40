#pragma once

#include <cstdint>

#include "rotla/tensor.hpp"

namespace rotla::recurrence {

/// Per-step state transition family of the gated linear-attention
/// recurrence S_t = S_{t-1} A_t + v_t k_t^T. Transitions act on the key
/// dimension; the write of step t is never decayed or rotated at step t.
enum class TransitionKind { identity, decay, fixed_rotation, selective_rotation, decay_rotation, delta_rule };

struct TransitionSpec {
  TransitionKind kind = TransitionKind::identity;
  /// [T x dk] per-channel gates in (0, 1]; pair-constant when composed
  /// with rotations.
  Tensor decay;
  /// [T x dk/2] cumulative angles; consecutive differences are the
  /// per-step rotation angles.
  Tensor angle_track;
  /// [T] write strengths in (0, 1] for the delta rule (keys supply the
  /// reflection direction and must be unit norm).
  Tensor beta;

  static TransitionSpec identity_spec();
  static TransitionSpec decay_spec(Tensor decay);
  static TransitionSpec rotation_spec(Tensor angle_track, bool fixed = false);
  static TransitionSpec delta_spec(Tensor beta);
};

/// decay * rotation composition. Each 2x2 rotation pair must see the same
/// decay on both channels; violating rows raise a contract error.
TransitionSpec compose_with_posenc(const Tensor& decay, const Tensor& angle_track);

enum class ScanMode { sequential, chunked };

struct ScanResult {
  Tensor outputs;      // [T x dv]
  Tensor final_state;  // [dv x dk]
  Tensor final_norm;   // [dk] (normalizer state; zeros when disabled)
};

/// Run the recurrence over one sequence: q, k [T x dk], v [T x dv].
/// Constant memory in T. With normalize, outputs divide by z_t . q_t.
/// Chunked mode computes identical outputs blockwise (within fp roundoff)
/// from chunk-boundary states. errors: non-finite state names the first
/// offending timestep.
ScanResult scan(const Tensor& q, const Tensor& k, const Tensor& v, const TransitionSpec& spec,
                bool normalize = false, ScanMode mode = ScanMode::sequential, std::int64_t chunk = 32);

/// Explicit O(T^2) attention scores Att[t, tau] = k_tau^T (prod_{kappa =
/// tau+1..t} A_kappa) q_t, strictly causal. Ground-truth oracle for scan.
Tensor attention_matrix(const Tensor& q, const Tensor& k, const TransitionSpec& spec);

/// Outputs computed through the quadratic score path without
/// materializing the [T x T] matrix; used by the benchmark and as the
/// oracle combination sum_tau v_tau Att[t, tau].
Tensor scan_via_attention(const Tensor& q, const Tensor& k, const Tensor& v, const TransitionSpec& spec);

/// Delta-rule scan S_t = S_{t-1}(I - beta_t k_t k_t^T) + beta_t v_t k_t^T.
/// errors: keys off unit norm beyond 1e-6, beta outside (0, 1].
ScanResult delta_scan(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& beta);

}  // namespace rotla::recurrence
