#pragma once

#include <cstdint>

#include "rotla/tensor.hpp"

namespace rotla::kernels {

/// C = op_a(A) * op_b(B) (+ C when accumulate). op is plain or transposed.
/// OpenMP-parallel over output rows; each output element is accumulated by
/// a single thread in a fixed order, so results are thread-count invariant.
enum class Trans { none, transpose };

void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate = false);

Tensor matmul(const Tensor& a, const Tensor& b);

/// Depthwise causal 1-d convolution. x is [T x C] (or [B x T x C]), kernel
/// is [W x C]; output t sums kernel taps over x_{t-W+1..t} with zero left
/// padding. Tap w multiplies x_{t-(W-1)+w}, i.e. the last tap weights the
/// current step.
Tensor causal_conv1d(const Tensor& x, const Tensor& kernel);

/// Inclusive prefix sums along `axis` of a rank-1/2/3 tensor.
Tensor cumsum(const Tensor& x, std::int64_t axis);

}  // namespace rotla::kernels

namespace rotla::reference {

/// Naive triple-loop matmul, serial. Oracle for kernels::gemm.
Tensor matmul_naive(const Tensor& a, const Tensor& b);

/// Naive sliding-window causal depthwise convolution, serial.
Tensor causal_conv1d_naive(const Tensor& x, const Tensor& kernel);

/// Naive serial prefix sums.
Tensor cumsum_naive(const Tensor& x, std::int64_t axis);

}  // namespace rotla::reference
