#include "rotla/kernels.hpp"

namespace rotla::kernels {

namespace {

struct MatView {
  const double* data;
  std::int64_t rows;
  std::int64_t cols;
};

MatView as_matrix(const Tensor& t, const char* name) {
  if (t.rank() == 2) return {t.data(), t.dim(0), t.dim(1)};
  if (t.rank() == 3) return {t.data(), t.dim(0) * t.dim(1), t.dim(2)};
  contract_fail(std::string(name) + " must be rank 2 or 3, got shape " + t.shape_str());
}

}  // namespace

void gemm(const Tensor& a, Trans ta, const Tensor& b, Trans tb, Tensor& c, bool accumulate) {
  const MatView av = as_matrix(a, "gemm lhs");
  const MatView bv = as_matrix(b, "gemm rhs");
  const std::int64_t m = ta == Trans::none ? av.rows : av.cols;
  const std::int64_t ka = ta == Trans::none ? av.cols : av.rows;
  const std::int64_t kb = tb == Trans::none ? bv.rows : bv.cols;
  const std::int64_t n = tb == Trans::none ? bv.cols : bv.rows;
  check(ka == kb, "gemm inner extents disagree: " + a.shape_str() + " vs " + b.shape_str());
  const MatView cv = as_matrix(c, "gemm out");
  check(cv.rows == m && cv.cols == n, "gemm out shape " + c.shape_str() + " does not match result");
  double* cd = c.data();
  const double* ad = av.data;
  const double* bd = bv.data;
  const std::int64_t lda = av.cols;
  const std::int64_t ldb = bv.cols;

  if (ta == Trans::none && tb == Trans::none) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = cd + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
      }
      const double* arow = ad + i * lda;
      for (std::int64_t p = 0; p < ka; ++p) {
        const double apv = arow[p];
        const double* brow = bd + p * ldb;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += apv * brow[j];
      }
    }
  } else if (ta == Trans::none && tb == Trans::transpose) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = cd + i * n;
      const double* arow = ad + i * lda;
      for (std::int64_t j = 0; j < n; ++j) {
        const double* brow = bd + j * ldb;
        double s = 0.0;
        for (std::int64_t p = 0; p < ka; ++p) s += arow[p] * brow[p];
        crow[j] = accumulate ? crow[j] + s : s;
      }
    }
  } else if (ta == Trans::transpose && tb == Trans::none) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = cd + i * n;
      if (!accumulate) {
        for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0;
      }
      for (std::int64_t p = 0; p < ka; ++p) {
        const double apv = ad[p * lda + i];
        const double* brow = bd + p * ldb;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += apv * brow[j];
      }
    }
  } else {
    // (A^T B^T)_{ij} = sum_p A[p,i] B[j,p]
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < m; ++i) {
      double* crow = cd + i * n;
      for (std::int64_t j = 0; j < n; ++j) {
        const double* brow = bd + j * ldb;
        double s = 0.0;
        for (std::int64_t p = 0; p < ka; ++p) s += ad[p * lda + i] * brow[p];
        crow[j] = accumulate ? crow[j] + s : s;
      }
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const MatView av = as_matrix(a, "matmul lhs");
  const MatView bv = as_matrix(b, "matmul rhs");
  check(av.cols == bv.rows, "matmul inner extents disagree: " + a.shape_str() + " vs " + b.shape_str());
  Tensor c({av.rows, bv.cols});
  gemm(a, Trans::none, b, Trans::none, c);
  if (a.rank() == 3) return c.reshaped({a.dim(0), a.dim(1), bv.cols});
  return c;
}

Tensor causal_conv1d(const Tensor& x, const Tensor& kernel) {
  check(kernel.rank() == 2, "conv kernel must be [W x C], got " + kernel.shape_str());
  const std::int64_t W = kernel.dim(0);
  const std::int64_t C = kernel.dim(1);
  check(W >= 1, "conv width must be >= 1");
  const bool batched = x.rank() == 3;
  check(batched || x.rank() == 2, "conv input must be [T x C] or [B x T x C], got " + x.shape_str());
  const std::int64_t B = batched ? x.dim(0) : 1;
  const std::int64_t T = batched ? x.dim(1) : x.dim(0);
  const std::int64_t Cx = batched ? x.dim(2) : x.dim(1);
  check(Cx == C, "conv channel mismatch: input " + x.shape_str() + " vs kernel " + kernel.shape_str());

  Tensor out(x.shape());
  const double* xd = x.data();
  const double* kd = kernel.data();
  double* od = out.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t t = 0; t < T; ++t) {
      const double* xbase = xd + b * T * C;
      double* orow = od + (b * T + t) * C;
      for (std::int64_t c = 0; c < C; ++c) orow[c] = 0.0;
      const std::int64_t w_lo = std::max<std::int64_t>(0, W - 1 - t);
      for (std::int64_t w = w_lo; w < W; ++w) {
        const std::int64_t src = t - (W - 1) + w;
        const double* xrow = xbase + src * C;
        const double* krow = kd + w * C;
        for (std::int64_t c = 0; c < C; ++c) orow[c] += krow[c] * xrow[c];
      }
    }
  }
  return out;
}

Tensor cumsum(const Tensor& x, std::int64_t axis) {
  check(axis >= 0 && axis < x.rank(), "cumsum axis " + std::to_string(axis) + " out of range for " + x.shape_str());
  // collapse to [outer, L, inner] around the scanned axis
  std::int64_t outer = 1, inner = 1;
  for (std::int64_t i = 0; i < axis; ++i) outer *= x.dim(i);
  for (std::int64_t i = axis + 1; i < x.rank(); ++i) inner *= x.dim(i);
  const std::int64_t L = x.dim(axis);
  Tensor out(x.shape());
  const double* xd = x.data();
  double* od = out.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      const double* xs = xd + o * L * inner + i;
      double* os = od + o * L * inner + i;
      double acc = 0.0;
      for (std::int64_t t = 0; t < L; ++t) {
        acc += xs[t * inner];
        os[t * inner] = acc;
      }
    }
  }
  return out;
}

}  // namespace rotla::kernels

namespace rotla::reference {

Tensor matmul_naive(const Tensor& a, const Tensor& b) {
  check(a.rank() == 2 && b.rank() == 2, "matmul_naive expects rank-2 inputs");
  check(a.dim(1) == b.dim(0), "matmul_naive inner extents disagree: " + a.shape_str() + " vs " + b.shape_str());
  const std::int64_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  for (std::int64_t i = 0; i < m; ++i)
    for (std::int64_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::int64_t p = 0; p < k; ++p) s += a.at(i, p) * b.at(p, j);
      c.at(i, j) = s;
    }
  return c;
}

Tensor causal_conv1d_naive(const Tensor& x, const Tensor& kernel) {
  check(x.rank() == 2 && kernel.rank() == 2, "causal_conv1d_naive expects rank-2 inputs");
  const std::int64_t T = x.dim(0), C = x.dim(1), W = kernel.dim(0);
  check(kernel.dim(1) == C, "conv channel mismatch");
  Tensor out({T, C});
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (std::int64_t w = 0; w < W; ++w) {
        const std::int64_t src = t - (W - 1) + w;
        if (src >= 0) s += kernel.at(w, c) * x.at(src, c);
      }
      out.at(t, c) = s;
    }
  return out;
}

Tensor cumsum_naive(const Tensor& x, std::int64_t axis) {
  check(x.rank() == 1 || x.rank() == 2, "cumsum_naive expects rank-1/2");
  Tensor out(x.shape());
  if (x.rank() == 1) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < x.size(); ++i) out.at(i) = (acc += x.at(i));
    return out;
  }
  if (axis == 0) {
    for (std::int64_t c = 0; c < x.dim(1); ++c) {
      double acc = 0.0;
      for (std::int64_t r = 0; r < x.dim(0); ++r) out.at(r, c) = (acc += x.at(r, c));
    }
  } else {
    for (std::int64_t r = 0; r < x.dim(0); ++r) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < x.dim(1); ++c) out.at(r, c) = (acc += x.at(r, c));
    }
  }
  return out;
}

}  // namespace rotla::reference
