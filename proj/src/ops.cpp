#include "rotla/ops.hpp"

#include <cmath>
#include <numbers>

#include "rotla/kernels.hpp"
#include "rotla/parallel.hpp"

namespace rotla::ad {

namespace {

enum class Broadcast { same, row, column, scalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b) {
  if (a.same_shape(b)) return Broadcast::same;
  if (b.size() == 1) return Broadcast::scalar;
  const std::int64_t c = a.dim(a.rank() - 1);
  if (b.size() == c && b.dim(b.rank() - 1) == c) return Broadcast::row;
  if (a.rank() == 2 && b.rank() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == 1) return Broadcast::column;
  contract_fail("shapes not broadcast-compatible: " + a.shape_str() + " vs " + b.shape_str());
}

// Sum g back down to the broadcast operand's shape.
Tensor reduce_to(const Tensor& g, const Tensor& like, Broadcast kind, std::int64_t rows, std::int64_t cols) {
  Tensor out(like.shape());
  switch (kind) {
    case Broadcast::same:
      return g;
    case Broadcast::scalar: {
      out.at(0) = pairwise_sum(g.flat());
      return out;
    }
    case Broadcast::row: {
      for (std::int64_t r = 0; r < rows; ++r)
        for (std::int64_t c = 0; c < cols; ++c) out.at(c) += g.at(r * cols + c);
      return out;
    }
    case Broadcast::column: {
      for (std::int64_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::int64_t c = 0; c < cols; ++c) s += g.at(r * cols + c);
        out.at(r) = s;
      }
      return out;
    }
  }
  contract_fail("unreachable");
}

template <typename Fwd>
Tensor binary_forward(const Tensor& a, const Tensor& b, Broadcast kind, Fwd f) {
  Tensor out(a.shape());
  const std::int64_t cols = a.dim(a.rank() - 1);
  const std::int64_t rows = a.size() / cols;
  const double* ad = a.data();
  const double* bd = b.data();
  double* od = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      const std::int64_t i = r * cols + c;
      double bv = 0.0;
      switch (kind) {
        case Broadcast::same: bv = bd[i]; break;
        case Broadcast::scalar: bv = bd[0]; break;
        case Broadcast::row: bv = bd[c]; break;
        case Broadcast::column: bv = bd[r]; break;
      }
      od[i] = f(ad[i], bv);
    }
  }
  return out;
}

template <typename F>
Tensor map_tensor(const Tensor& x, F f) {
  Tensor out(x.shape());
  const double* xd = x.data();
  double* od = out.data();
  const std::int64_t n = x.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) od[i] = f(xd[i]);
  return out;
}

}  // namespace

Var add(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  const Broadcast kind = broadcast_kind(av, bv);
  Tensor out = binary_forward(av, bv, kind, [](double x, double y) { return x + y; });
  const std::int64_t cols = av.dim(av.rank() - 1);
  const std::int64_t rows = av.size() / cols;
  const std::int64_t r2 = kind == Broadcast::column ? av.dim(0) : rows;
  const std::int64_t c2 = kind == Broadcast::column ? av.dim(1) : cols;
  return t.emplace(std::move(out), {a, b}, [a, b, kind, r2, c2](Tape& tp, Var, const Tensor& g) {
    tp.add_grad(a, g);
    tp.add_grad(b, reduce_to(g, tp.val(b), kind, r2, c2));
  });
}

Var sub(Tape& t, Var a, Var b) { return add(t, a, scale(t, b, -1.0)); }

Var mul(Tape& t, Var a, Var b) {
  const Tensor& av = t.val(a);
  const Tensor& bv = t.val(b);
  const Broadcast kind = broadcast_kind(av, bv);
  Tensor out = binary_forward(av, bv, kind, [](double x, double y) { return x * y; });
  const std::int64_t cols = av.dim(av.rank() - 1);
  const std::int64_t rows = av.size() / cols;
  const std::int64_t r2 = kind == Broadcast::column ? av.dim(0) : rows;
  const std::int64_t c2 = kind == Broadcast::column ? av.dim(1) : cols;
  return t.emplace(std::move(out), {a, b}, [a, b, kind, r2, c2](Tape& tp, Var, const Tensor& g) {
    const Tensor& av2 = tp.val(a);
    const Tensor& bv2 = tp.val(b);
    tp.add_grad(a, binary_forward(g, bv2, kind, [](double gv, double y) { return gv * y; }));
    Tensor ga = binary_forward(g, av2, Broadcast::same, [](double gv, double x) { return gv * x; });
    tp.add_grad(b, reduce_to(ga, bv2, kind, r2, c2));
  });
}

Var scale(Tape& t, Var a, double c) {
  return t.emplace(map_tensor(t.val(a), [c](double x) { return c * x; }), {a},
                   [a, c](Tape& tp, Var, const Tensor& g) {
                     tp.add_grad(a, map_tensor(g, [c](double gv) { return c * gv; }));
                   });
}

Var add_const(Tape& t, Var a, double c) {
  return t.emplace(map_tensor(t.val(a), [c](double x) { return x + c; }), {a},
                   [a](Tape& tp, Var, const Tensor& g) { tp.add_grad(a, g); });
}

Var sigmoid(Tape& t, Var x) {
  Tensor out = map_tensor(t.val(x), [](double v) {
    return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  });
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var self, const Tensor& g) {
    const Tensor& y = tp.val(self);
    Tensor gx(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) gx.at(i) = g.at(i) * y.at(i) * (1.0 - y.at(i));
    tp.add_grad(x, gx);
  });
}

Var exp(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  Tensor out = map_tensor(xv, [](double v) { return std::exp(v); });
  for (std::int64_t i = 0; i < out.size(); ++i)
    if (!std::isfinite(out.at(i)))
      contract_fail("exp overflow at flat index " + std::to_string(i) + " (input " + std::to_string(xv.at(i)) + ")");
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var self, const Tensor& g) {
    const Tensor& y = tp.val(self);
    Tensor gx(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) gx.at(i) = g.at(i) * y.at(i);
    tp.add_grad(x, gx);
  });
}

Var sin(Tape& t, Var x) {
  return t.emplace(map_tensor(t.val(x), [](double v) { return std::sin(v); }), {x},
                   [x](Tape& tp, Var, const Tensor& g) {
                     const Tensor& xv = tp.val(x);
                     Tensor gx(g.shape());
                     for (std::int64_t i = 0; i < g.size(); ++i) gx.at(i) = g.at(i) * std::cos(xv.at(i));
                     tp.add_grad(x, gx);
                   });
}

Var cos(Tape& t, Var x) {
  return t.emplace(map_tensor(t.val(x), [](double v) { return std::cos(v); }), {x},
                   [x](Tape& tp, Var, const Tensor& g) {
                     const Tensor& xv = tp.val(x);
                     Tensor gx(g.shape());
                     for (std::int64_t i = 0; i < g.size(); ++i) gx.at(i) = -g.at(i) * std::sin(xv.at(i));
                     tp.add_grad(x, gx);
                   });
}

Var softplus(Tape& t, Var x) {
  Tensor out = map_tensor(t.val(x), [](double v) {
    if (v > 30.0) return v;
    if (v < -30.0) return std::exp(v);
    return std::log1p(std::exp(v));
  });
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var, const Tensor& g) {
    const Tensor& xv = tp.val(x);
    Tensor gx(g.shape());
    for (std::int64_t i = 0; i < g.size(); ++i) {
      const double v = xv.at(i);
      const double s = v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
      gx.at(i) = g.at(i) * s;
    }
    tp.add_grad(x, gx);
  });
}

namespace {
void segment_geometry(const Tensor& x, std::int64_t groups, std::int64_t& rows, std::int64_t& seg) {
  const std::int64_t cols = x.dim(x.rank() - 1);
  check(groups >= 1 && cols % groups == 0,
        "last dim " + std::to_string(cols) + " not divisible into " + std::to_string(groups) + " groups");
  seg = cols / groups;
  rows = x.size() / seg;  // each segment treated as one row
}
}  // namespace

Var l2norm_rows(Tape& t, Var x, std::int64_t groups) {
  const Tensor& xv = t.val(x);
  std::int64_t rows = 0, seg = 0;
  segment_geometry(xv, groups, rows, seg);
  Tensor out(xv.shape());
  const double* xd = xv.data();
  double* od = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xs = xd + r * seg;
    double ss = 0.0;
    for (std::int64_t c = 0; c < seg; ++c) ss += xs[c] * xs[c];
    const double inv = 1.0 / std::sqrt(std::max(ss, 1e-300));
    for (std::int64_t c = 0; c < seg; ++c) od[r * seg + c] = xs[c] * inv;
  }
  return t.emplace(std::move(out), {x}, [x, rows, seg](Tape& tp, Var, const Tensor& g) {
    const Tensor& xv2 = tp.val(x);
    Tensor gx(g.shape());
    const double* xd2 = xv2.data();
    const double* gd = g.data();
    double* gxd = gx.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* xs = xd2 + r * seg;
      const double* gs = gd + r * seg;
      double ss = 0.0, xg = 0.0;
      for (std::int64_t c = 0; c < seg; ++c) {
        ss += xs[c] * xs[c];
        xg += xs[c] * gs[c];
      }
      ss = std::max(ss, 1e-300);
      const double inv = 1.0 / std::sqrt(ss);
      const double inv3 = inv / ss;
      for (std::int64_t c = 0; c < seg; ++c) gxd[r * seg + c] = gs[c] * inv - xs[c] * xg * inv3;
    }
    tp.add_grad(x, gx);
  });
}

Var rmsnorm_rows(Tape& t, Var x, std::int64_t groups, double eps) {
  const Tensor& xv = t.val(x);
  std::int64_t rows = 0, seg = 0;
  segment_geometry(xv, groups, rows, seg);
  Tensor out(xv.shape());
  const double* xd = xv.data();
  double* od = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const double* xs = xd + r * seg;
    double ss = 0.0;
    for (std::int64_t c = 0; c < seg; ++c) ss += xs[c] * xs[c];
    const double inv = 1.0 / std::sqrt(ss / static_cast<double>(seg) + eps);
    for (std::int64_t c = 0; c < seg; ++c) od[r * seg + c] = xs[c] * inv;
  }
  return t.emplace(std::move(out), {x}, [x, rows, seg, eps](Tape& tp, Var, const Tensor& g) {
    const Tensor& xv2 = tp.val(x);
    Tensor gx(g.shape());
    const double* xd2 = xv2.data();
    const double* gd = g.data();
    double* gxd = gx.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const double* xs = xd2 + r * seg;
      const double* gs = gd + r * seg;
      double ss = 0.0, xg = 0.0;
      for (std::int64_t c = 0; c < seg; ++c) {
        ss += xs[c] * xs[c];
        xg += xs[c] * gs[c];
      }
      const double m = ss / static_cast<double>(seg) + eps;
      const double inv = 1.0 / std::sqrt(m);
      const double k = inv / m / static_cast<double>(seg);
      for (std::int64_t c = 0; c < seg; ++c) gxd[r * seg + c] = gs[c] * inv - xs[c] * xg * k;
    }
    tp.add_grad(x, gx);
  });
}

Var reshape(Tape& t, Var x, std::vector<std::int64_t> shape) {
  Tensor out = t.val(x).reshaped(shape);
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var, const Tensor& g) {
    tp.add_grad(x, g.reshaped(tp.val(x).shape()));
  });
}

Var transpose(Tape& t, Var x) {
  const Tensor& xv = t.val(x);
  check(xv.rank() == 2, "transpose expects rank-2, got " + xv.shape_str());
  const std::int64_t r = xv.dim(0), c = xv.dim(1);
  Tensor out({c, r});
  for (std::int64_t i = 0; i < r; ++i)
    for (std::int64_t j = 0; j < c; ++j) out.at(j, i) = xv.at(i, j);
  return t.emplace(std::move(out), {x}, [x, r, c](Tape& tp, Var, const Tensor& g) {
    Tensor gx({r, c});
    for (std::int64_t i = 0; i < r; ++i)
      for (std::int64_t j = 0; j < c; ++j) gx.at(i, j) = g.at(j * r + i);
    tp.add_grad(x, gx);
  });
}

namespace {
Tensor take_stride2(const Tensor& x, std::int64_t offset) {
  const std::int64_t cols = x.dim(x.rank() - 1);
  check(cols % 2 == 0, "pair ops need an even last dim, got " + x.shape_str());
  std::vector<std::int64_t> shape = x.shape();
  shape.back() = cols / 2;
  Tensor out(shape);
  const std::int64_t rows = x.size() / cols;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < cols / 2; ++j) out.at(r * (cols / 2) + j) = x.at(r * cols + 2 * j + offset);
  return out;
}
}  // namespace

static Var take_pairs_impl(Tape& t, Var x, std::int64_t offset) {
  const Tensor& xv = t.val(x);
  const std::int64_t cols = xv.dim(xv.rank() - 1);
  Tensor out = take_stride2(xv, offset);
  return t.emplace(std::move(out), {x}, [x, cols, offset](Tape& tp, Var, const Tensor& g) {
    Tensor gx(tp.val(x).shape());
    const std::int64_t rows = gx.size() / cols;
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < cols / 2; ++j) gx.at(r * cols + 2 * j + offset) = g.at(r * (cols / 2) + j);
    tp.add_grad(x, gx);
  });
}

Var take_even_pairs(Tape& t, Var x) { return take_pairs_impl(t, x, 0); }
Var take_odd_pairs(Tape& t, Var x) { return take_pairs_impl(t, x, 1); }

Var interleave_pairs(Tape& t, Var even, Var odd) {
  const Tensor& ev = t.val(even);
  const Tensor& ov = t.val(odd);
  check(ev.same_shape(ov), "interleave_pairs halves differ: " + ev.shape_str() + " vs " + ov.shape_str());
  const std::int64_t half = ev.dim(ev.rank() - 1);
  std::vector<std::int64_t> shape = ev.shape();
  shape.back() = 2 * half;
  Tensor out(shape);
  const std::int64_t rows = ev.size() / half;
  for (std::int64_t r = 0; r < rows; ++r)
    for (std::int64_t j = 0; j < half; ++j) {
      out.at(r * 2 * half + 2 * j) = ev.at(r * half + j);
      out.at(r * 2 * half + 2 * j + 1) = ov.at(r * half + j);
    }
  return t.emplace(std::move(out), {even, odd}, [even, odd, half, rows](Tape& tp, Var, const Tensor& g) {
    Tensor ge(tp.val(even).shape());
    Tensor go(tp.val(odd).shape());
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < half; ++j) {
        ge.at(r * half + j) = g.at(r * 2 * half + 2 * j);
        go.at(r * half + j) = g.at(r * 2 * half + 2 * j + 1);
      }
    tp.add_grad(even, ge);
    tp.add_grad(odd, go);
  });
}

Var repeat_cols(Tape& t, Var x, std::int64_t r) {
  check(r >= 1, "repeat_cols factor must be >= 1");
  const Tensor& xv = t.val(x);
  const std::int64_t cols = xv.dim(xv.rank() - 1);
  std::vector<std::int64_t> shape = xv.shape();
  shape.back() = cols * r;
  Tensor out(shape);
  const std::int64_t rows = xv.size() / cols;
  for (std::int64_t i = 0; i < rows; ++i)
    for (std::int64_t j = 0; j < cols; ++j)
      for (std::int64_t s = 0; s < r; ++s) out.at((i * cols + j) * r + s) = xv.at(i * cols + j);
  return t.emplace(std::move(out), {x}, [x, cols, r, rows](Tape& tp, Var, const Tensor& g) {
    Tensor gx(tp.val(x).shape());
    for (std::int64_t i = 0; i < rows; ++i)
      for (std::int64_t j = 0; j < cols; ++j) {
        double s = 0.0;
        for (std::int64_t q = 0; q < r; ++q) s += g.at((i * cols + j) * r + q);
        gx.at(i * cols + j) = s;
      }
    tp.add_grad(x, gx);
  });
}

Var cumsum(Tape& t, Var x, std::int64_t axis) {
  Tensor out = kernels::cumsum(t.val(x), axis);
  return t.emplace(std::move(out), {x}, [x, axis](Tape& tp, Var, const Tensor& g) {
    // backward = reversed cumsum of the output gradient along the axis
    const Tensor& shape_like = tp.val(x);
    std::int64_t outer = 1, inner = 1;
    for (std::int64_t i = 0; i < axis; ++i) outer *= shape_like.dim(i);
    for (std::int64_t i = axis + 1; i < shape_like.rank(); ++i) inner *= shape_like.dim(i);
    const std::int64_t L = shape_like.dim(axis);
    Tensor gx(shape_like.shape());
    const double* gd = g.data();
    double* od = gx.data();
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t i = 0; i < inner; ++i) {
        double acc = 0.0;
        for (std::int64_t s = L - 1; s >= 0; --s) {
          acc += gd[(o * L + s) * inner + i];
          od[(o * L + s) * inner + i] = acc;
        }
      }
    }
    tp.add_grad(x, gx);
  });
}

Var wrap_angle(Tape& t, Var x) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  Tensor out = map_tensor(t.val(x), [](double v) { return v - two_pi * std::floor(v / two_pi); });
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var, const Tensor& g) { tp.add_grad(x, g); });
}

Var causal_conv1d(Tape& t, Var x, Var kernel) {
  Tensor out = kernels::causal_conv1d(t.val(x), t.val(kernel));
  return t.emplace(std::move(out), {x, kernel}, [x, kernel](Tape& tp, Var, const Tensor& g) {
    const Tensor& xv = tp.val(x);
    const Tensor& kv = tp.val(kernel);
    const std::int64_t W = kv.dim(0), C = kv.dim(1);
    const bool batched = xv.rank() == 3;
    const std::int64_t B = batched ? xv.dim(0) : 1;
    const std::int64_t T = batched ? xv.dim(1) : xv.dim(0);
    Tensor gx(xv.shape());
    Tensor gk(kv.shape());
    const double* gd = g.data();
    const double* xd = xv.data();
    const double* kd = kv.data();
    for (std::int64_t b = 0; b < B; ++b) {
      for (std::int64_t tt = 0; tt < T; ++tt) {
        const double* grow = gd + (b * T + tt) * C;
        for (std::int64_t w = 0; w < W; ++w) {
          const std::int64_t src = tt - (W - 1) + w;
          if (src < 0) continue;
          const double* xrow = xd + (b * T + src) * C;
          for (std::int64_t c = 0; c < C; ++c) {
            gx.at((b * T + src) * C + c) += kd[w * C + c] * grow[c];
            gk.at(w * C + c) += xrow[c] * grow[c];
          }
        }
      }
    }
    tp.add_grad(x, gx);
    tp.add_grad(kernel, gk);
  });
}

Var matmul(Tape& t, Var a, Var b) {
  Tensor out = kernels::matmul(t.val(a), t.val(b));
  return t.emplace(std::move(out), {a, b}, [a, b](Tape& tp, Var, const Tensor& g) {
    const Tensor& av = tp.val(a);
    const Tensor& bv = tp.val(b);
    if (tp.needs_grad(a)) {
      Tensor ga(av.rank() == 3 ? Tensor({av.dim(0) * av.dim(1), av.dim(2)}) : Tensor({av.dim(0), av.dim(1)}));
      kernels::gemm(g, kernels::Trans::none, bv, kernels::Trans::transpose, ga);
      tp.add_grad(a, av.rank() == 3 ? ga.reshaped(av.shape()) : ga);
    }
    if (tp.needs_grad(b)) {
      Tensor gb(bv.shape());
      kernels::gemm(av, kernels::Trans::transpose, g, kernels::Trans::none, gb);
      tp.add_grad(b, gb);
    }
  });
}

Var headwise_linear(Tape& t, Var x, Var w, std::int64_t heads) {
  const Tensor& xv = t.val(x);
  const Tensor& wv = t.val(w);
  check(wv.rank() == 2, "headwise weight must be [H*dout x din], got " + wv.shape_str());
  const std::int64_t din = wv.dim(1);
  check(wv.dim(0) % heads == 0, "headwise weight rows not divisible by heads");
  const std::int64_t dout = wv.dim(0) / heads;
  const std::int64_t cols = xv.dim(xv.rank() - 1);
  check(cols == heads * din, "headwise input " + xv.shape_str() + " does not match " + std::to_string(heads) +
                                 " heads of " + std::to_string(din));
  const std::int64_t rows = xv.size() / cols;
  std::vector<std::int64_t> shape = xv.shape();
  shape.back() = heads * dout;
  Tensor out(shape);
  const double* xd = xv.data();
  const double* wd = wv.data();
  double* od = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t h = 0; h < heads; ++h) {
      const double* xs = xd + r * cols + h * din;
      for (std::int64_t o = 0; o < dout; ++o) {
        const double* wrow = wd + (h * dout + o) * din;
        double s = 0.0;
        for (std::int64_t i = 0; i < din; ++i) s += wrow[i] * xs[i];
        od[r * heads * dout + h * dout + o] = s;
      }
    }
  }
  return t.emplace(std::move(out), {x, w}, [x, w, heads, din, dout, rows, cols](Tape& tp, Var, const Tensor& g) {
    const Tensor& xv2 = tp.val(x);
    const Tensor& wv2 = tp.val(w);
    const double* xd2 = xv2.data();
    const double* wd2 = wv2.data();
    const double* gd = g.data();
    if (tp.needs_grad(x)) {
      Tensor gx(xv2.shape());
      double* gxd = gx.data();
#pragma omp parallel for schedule(static)
      for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t h = 0; h < heads; ++h) {
          const double* gs = gd + r * heads * dout + h * dout;
          double* gxs = gxd + r * cols + h * din;
          for (std::int64_t o = 0; o < dout; ++o) {
            const double* wrow = wd2 + (h * dout + o) * din;
            const double gv = gs[o];
            for (std::int64_t i = 0; i < din; ++i) gxs[i] += gv * wrow[i];
          }
        }
      }
      tp.add_grad(x, gx);
    }
    if (tp.needs_grad(w)) {
      Tensor gw(wv2.shape());
      double* gwd = gw.data();
#pragma omp parallel for schedule(static)
      for (std::int64_t h = 0; h < heads; ++h) {
        for (std::int64_t r = 0; r < rows; ++r) {
          const double* gs = gd + r * heads * dout + h * dout;
          const double* xs = xd2 + r * cols + h * din;
          for (std::int64_t o = 0; o < dout; ++o) {
            double* wrow = gwd + (h * dout + o) * din;
            const double gv = gs[o];
            for (std::int64_t i = 0; i < din; ++i) wrow[i] += gv * xs[i];
          }
        }
      }
      tp.add_grad(w, gw);
    }
  });
}

Var sum(Tape& t, Var x) {
  Tensor out = Tensor::scalar(pairwise_sum(t.val(x).flat()));
  return t.emplace(std::move(out), {x}, [x](Tape& tp, Var, const Tensor& g) {
    tp.add_grad(x, Tensor::full(tp.val(x).shape(), g.at(0)));
  });
}

Var gather_rows(Tape& t, Var table, std::vector<std::int64_t> ids) {
  const Tensor& tv = t.val(table);
  check(tv.rank() == 2, "gather table must be rank-2, got " + tv.shape_str());
  const std::int64_t V = tv.dim(0), C = tv.dim(1);
  const std::int64_t N = static_cast<std::int64_t>(ids.size());
  Tensor out({N, C});
  for (std::int64_t i = 0; i < N; ++i) {
    const std::int64_t id = ids[static_cast<std::size_t>(i)];
    check(id >= 0 && id < V, "token id " + std::to_string(id) + " out of vocab range " + std::to_string(V));
    for (std::int64_t c = 0; c < C; ++c) out.at(i, c) = tv.at(id, c);
  }
  return t.emplace(std::move(out), {table}, [table, ids = std::move(ids), C](Tape& tp, Var, const Tensor& g) {
    Tensor gt(tp.val(table).shape());
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::int64_t c = 0; c < C; ++c) gt.at(ids[i], c) += g.at(static_cast<std::int64_t>(i) * C + c);
    tp.add_grad(table, gt);
  });
}

Var cross_entropy(Tape& t, Var logits, std::vector<std::int64_t> targets, std::vector<std::uint8_t> mask) {
  const Tensor& lv = t.val(logits);
  check(lv.rank() == 2, "cross_entropy expects [N x V] logits, got " + lv.shape_str());
  const std::int64_t N = lv.dim(0), V = lv.dim(1);
  check(static_cast<std::int64_t>(targets.size()) == N && static_cast<std::int64_t>(mask.size()) == N,
        "cross_entropy targets/mask length mismatch");
  std::int64_t m = 0;
  for (auto b : mask) m += b ? 1 : 0;
  check(m > 0, "cross_entropy mask selects no positions");
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(m));
  for (std::int64_t i = 0; i < N; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    const std::int64_t y = targets[static_cast<std::size_t>(i)];
    check(y >= 0 && y < V, "target id out of range");
    const double* row = lv.data() + i * V;
    double mx = row[0];
    for (std::int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    double lse = 0.0;
    for (std::int64_t j = 0; j < V; ++j) lse += std::exp(row[j] - mx);
    losses.push_back(mx + std::log(lse) - row[y]);
  }
  Tensor out = Tensor::scalar(pairwise_reduce(std::move(losses)) / static_cast<double>(m));
  return t.emplace(std::move(out), {logits},
                   [logits, targets = std::move(targets), mask = std::move(mask), m](Tape& tp, Var, const Tensor& g) {
                     const Tensor& lv2 = tp.val(logits);
                     const std::int64_t N2 = lv2.dim(0), V2 = lv2.dim(1);
                     Tensor gl(lv2.shape());
                     const double scale_g = g.at(0) / static_cast<double>(m);
#pragma omp parallel for schedule(static)
                     for (std::int64_t i = 0; i < N2; ++i) {
                       if (!mask[static_cast<std::size_t>(i)]) continue;
                       const double* row = lv2.data() + i * V2;
                       double* grow = gl.data() + i * V2;
                       double mx = row[0];
                       for (std::int64_t j = 1; j < V2; ++j) mx = std::max(mx, row[j]);
                       double lse = 0.0;
                       for (std::int64_t j = 0; j < V2; ++j) lse += std::exp(row[j] - mx);
                       for (std::int64_t j = 0; j < V2; ++j) grow[j] = scale_g * std::exp(row[j] - mx) / lse;
                       grow[targets[static_cast<std::size_t>(i)]] -= scale_g;
                     }
                     tp.add_grad(logits, gl);
                   });
}

}  // namespace rotla::ad
