#pragma once

#include <cstdint>
#include <vector>

#include "rotla/autodiff.hpp"

namespace rotla::ad {

// ---- pointwise / broadcast ----
// add/mul accept equal shapes, a trailing-row broadcast (b of shape [C],
// [1 x C] or [1 x 1 x C] against [... x C]), a per-row column broadcast
// (b of shape [R x 1] against [R x C]), or a scalar b of shape [1].
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double c);
Var add_const(Tape& t, Var a, double c);
Var sigmoid(Tape& t, Var x);
Var exp(Tape& t, Var x);  // errors on non-finite output, reporting the index
Var sin(Tape& t, Var x);
Var cos(Tape& t, Var x);
Var softplus(Tape& t, Var x);

/// Normalize each length-(C/groups) segment of the last dim to unit L2 norm.
Var l2norm_rows(Tape& t, Var x, std::int64_t groups = 1);
/// RMS-normalize each segment: x / sqrt(mean(x^2) + eps).
Var rmsnorm_rows(Tape& t, Var x, std::int64_t groups = 1, double eps = 1e-6);

// ---- shape ----
Var reshape(Tape& t, Var x, std::vector<std::int64_t> shape);
Var transpose(Tape& t, Var x);  // rank-2
/// Even-index (0,2,...) half of the last dim.
Var take_even_pairs(Tape& t, Var x);
Var take_odd_pairs(Tape& t, Var x);
/// Inverse of the take_*_pairs pair: out[..., 2j] = even[..., j], out[..., 2j+1] = odd[..., j].
Var interleave_pairs(Tape& t, Var even, Var odd);
/// out[..., j*r + s] = x[..., j] for s in [0, r).
Var repeat_cols(Tape& t, Var x, std::int64_t r);

// ---- scans / structured ----
Var cumsum(Tape& t, Var x, std::int64_t axis);
/// Reduce modulo 2*pi; gradient passes straight through.
Var wrap_angle(Tape& t, Var x);
Var causal_conv1d(Tape& t, Var x, Var kernel);

// ---- linear ----
Var matmul(Tape& t, Var a, Var b);
/// x [... x H*din] with per-head weight rows w [H*dout x din]:
/// out[..., h*dout+o] = sum_i w[h*dout+o, i] * x[..., h*din+i].
Var headwise_linear(Tape& t, Var x, Var w, std::int64_t heads);

// ---- reductions / lookup / loss ----
Var sum(Tape& t, Var x);  // scalar
Var gather_rows(Tape& t, Var table, std::vector<std::int64_t> ids);
/// Mean token-level cross entropy over masked positions. logits [N x V].
/// errors: empty mask.
Var cross_entropy(Tape& t, Var logits, std::vector<std::int64_t> targets, std::vector<std::uint8_t> mask);

// ---- fused sequence mixers ----
/// Gated linear attention scan over [B x T x H*d] streams with per-channel
/// decay alpha in (0,1]. State S <- S * diag(alpha_t) + v_t k_t^T per head,
/// o_t = S q_t. Backward recomputes states from chunk checkpoints.
Var gla_scan(Tape& t, Var q, Var k, Var v, Var alpha, std::int64_t heads);

/// Delta-rule scan: S <- S (I - beta_t k_t k_t^T) + beta_t v_t k_t^T with
/// beta [B x T x H] and per-head unit keys (checked to 1e-6).
Var delta_scan(Tape& t, Var q, Var k, Var v, Var beta, std::int64_t heads);

/// Exact causal softmax attention with score temperature `temp` and an
/// optional per-head additive score bias [H]. Probabilities are recomputed
/// in the backward pass instead of being cached.
Var softmax_attention(Tape& t, Var q, Var k, Var v, Var bias, std::int64_t heads, double temp);

/// scores [T x T] + b on the causal triangle (tau <= row), used by the
/// materialized-score path.
Var causal_bias_add(Tape& t, Var scores, Var bias);

}  // namespace rotla::ad
