#include <cmath>
#include <memory>

#include "rotla/ops.hpp"
#include "rotla/parallel.hpp"

namespace rotla::ad {

namespace {

constexpr std::int64_t kScanChunk = 16;

struct SeqDims {
  std::int64_t B, T, H, dk, dv;
};

SeqDims scan_dims(const Tensor& q, const Tensor& k, const Tensor& v, std::int64_t heads, const char* op) {
  check(q.rank() == 3 && k.rank() == 3 && v.rank() == 3,
        std::string(op) + " expects [B x T x C] streams, got " + q.shape_str());
  check(q.same_shape(k), std::string(op) + " q/k shapes differ: " + q.shape_str() + " vs " + k.shape_str());
  check(v.dim(0) == q.dim(0) && v.dim(1) == q.dim(1), std::string(op) + " v misaligned: " + v.shape_str());
  check(q.dim(2) % heads == 0 && v.dim(2) % heads == 0, std::string(op) + " channels not divisible by heads");
  return {q.dim(0), q.dim(1), heads, q.dim(2) / heads, v.dim(2) / heads};
}

}  // namespace

Var gla_scan(Tape& t, Var q, Var k, Var v, Var alpha, std::int64_t heads) {
  const Tensor& qv = t.val(q);
  const Tensor& kv = t.val(k);
  const Tensor& vv = t.val(v);
  const Tensor& av = t.val(alpha);
  const SeqDims d = scan_dims(qv, kv, vv, heads, "gla_scan");
  check(av.same_shape(qv), "gla_scan alpha must match q shape, got " + av.shape_str());

  Tensor out(vv.shape());
  // chunk-boundary states, [B*H*nchunks, dv*dk]; backward recomputes in between
  const std::int64_t nchunks = (d.T + kScanChunk - 1) / kScanChunk;
  auto checkpoints = std::make_shared<Tensor>(Tensor::zeros({d.B * d.H * nchunks, d.dv * d.dk}));

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < d.B; ++b) {
    for (std::int64_t h = 0; h < d.H; ++h) {
      std::vector<double> S(static_cast<std::size_t>(d.dv * d.dk), 0.0);
      for (std::int64_t tt = 0; tt < d.T; ++tt) {
        if (tt % kScanChunk == 0) {
          double* cp = checkpoints->data() + ((b * d.H + h) * nchunks + tt / kScanChunk) * d.dv * d.dk;
          for (std::int64_t i = 0; i < d.dv * d.dk; ++i) cp[i] = S[static_cast<std::size_t>(i)];
        }
        const double* qs = qv.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        const double* ks = kv.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        const double* vs = vv.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
        const double* as = av.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        double* os = out.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
        for (std::int64_t i = 0; i < d.dv; ++i) {
          double* srow = S.data() + i * d.dk;
          const double vi = vs[i];
          double o = 0.0;
          for (std::int64_t j = 0; j < d.dk; ++j) {
            srow[j] = srow[j] * as[j] + vi * ks[j];
            o += srow[j] * qs[j];
          }
          os[i] = o;
        }
      }
    }
  }

  return t.emplace(std::move(out), {q, k, v, alpha},
                   [q, k, v, alpha, d, nchunks, checkpoints](Tape& tp, Var, const Tensor& g) {
    const Tensor& qv2 = tp.val(q);
    const Tensor& kv2 = tp.val(k);
    const Tensor& vv2 = tp.val(v);
    const Tensor& av2 = tp.val(alpha);
    Tensor gq(qv2.shape()), gk(kv2.shape()), gv(vv2.shape()), ga(av2.shape());
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < d.B; ++b) {
      for (std::int64_t h = 0; h < d.H; ++h) {
        const std::int64_t mat = d.dv * d.dk;
        std::vector<double> states(static_cast<std::size_t>((kScanChunk + 1) * mat));
        std::vector<double> G(static_cast<std::size_t>(mat), 0.0);  // dL/dS_t via steps > t
        for (std::int64_t c = nchunks - 1; c >= 0; --c) {
          const std::int64_t t0 = c * kScanChunk;
          const std::int64_t t1 = std::min(d.T, t0 + kScanChunk);
          // recompute S_{t0-1..t1-1}; states[s] holds S after step t0+s-1
          const double* cp = checkpoints->data() + ((b * d.H + h) * nchunks + c) * mat;
          for (std::int64_t i = 0; i < mat; ++i) states[static_cast<std::size_t>(i)] = cp[i];
          for (std::int64_t tt = t0; tt < t1; ++tt) {
            const double* ks = kv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* vs = vv2.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double* as = av2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* prev = states.data() + (tt - t0) * mat;
            double* cur = states.data() + (tt - t0 + 1) * mat;
            for (std::int64_t i = 0; i < d.dv; ++i)
              for (std::int64_t j = 0; j < d.dk; ++j)
                cur[i * d.dk + j] = prev[i * d.dk + j] * as[j] + vs[i] * ks[j];
          }
          for (std::int64_t tt = t1 - 1; tt >= t0; --tt) {
            const double* qs = qv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* ks = kv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* vs = vv2.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double* as = av2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* gs = g.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double* s_cur = states.data() + (tt - t0 + 1) * mat;
            const double* s_prev = states.data() + (tt - t0) * mat;
            double* gqs = gq.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            double* gks = gk.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            double* gvs = gv.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            double* gas = ga.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            // G_t = G(from future) + g_o q^T ; then read out all input grads
            for (std::int64_t i = 0; i < d.dv; ++i) {
              double* Grow = G.data() + i * d.dk;
              const double gi = gs[i];
              const double* scur_row = s_cur + i * d.dk;
              const double* sprev_row = s_prev + i * d.dk;
              double gvi = 0.0;
              for (std::int64_t j = 0; j < d.dk; ++j) {
                Grow[j] += gi * qs[j];
                gqs[j] += scur_row[j] * gi;
                gvi += Grow[j] * ks[j];
                gks[j] += Grow[j] * vs[i];
                gas[j] += Grow[j] * sprev_row[j];
                Grow[j] *= as[j];  // dL/dS_{t-1} via S_t
              }
              gvs[i] = gvi;
            }
          }
        }
      }
    }
    tp.add_grad(q, gq);
    tp.add_grad(k, gk);
    tp.add_grad(v, gv);
    tp.add_grad(alpha, ga);
  });
}

Var delta_scan(Tape& t, Var q, Var k, Var v, Var beta, std::int64_t heads) {
  const Tensor& qv = t.val(q);
  const Tensor& kv = t.val(k);
  const Tensor& vv = t.val(v);
  const Tensor& bv = t.val(beta);
  const SeqDims d = scan_dims(qv, kv, vv, heads, "delta_scan");
  check(bv.rank() == 3 && bv.dim(0) == d.B && bv.dim(1) == d.T && bv.dim(2) == d.H,
        "delta_scan beta must be [B x T x H], got " + bv.shape_str());
  // keys must arrive unit-norm per head
  for (std::int64_t r = 0; r < d.B * d.T * d.H; ++r) {
    const double* ks = kv.data() + r * d.dk;
    double ss = 0.0;
    for (std::int64_t j = 0; j < d.dk; ++j) ss += ks[j] * ks[j];
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-6)
      contract_fail("delta_scan key " + std::to_string(r) + " is not unit-norm (|k| = " + std::to_string(std::sqrt(ss)) + ")");
  }
  for (std::int64_t i = 0; i < bv.size(); ++i)
    check(bv.at(i) > 0.0 && bv.at(i) <= 1.0, "delta_scan beta out of (0, 1]");

  Tensor out(vv.shape());
  const std::int64_t nchunks = (d.T + kScanChunk - 1) / kScanChunk;
  auto checkpoints = std::make_shared<Tensor>(Tensor::zeros({d.B * d.H * nchunks, d.dv * d.dk}));

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < d.B; ++b) {
    for (std::int64_t h = 0; h < d.H; ++h) {
      std::vector<double> S(static_cast<std::size_t>(d.dv * d.dk), 0.0);
      std::vector<double> u(static_cast<std::size_t>(d.dv), 0.0);
      for (std::int64_t tt = 0; tt < d.T; ++tt) {
        if (tt % kScanChunk == 0) {
          double* cp = checkpoints->data() + ((b * d.H + h) * nchunks + tt / kScanChunk) * d.dv * d.dk;
          for (std::int64_t i = 0; i < d.dv * d.dk; ++i) cp[i] = S[static_cast<std::size_t>(i)];
        }
        const double* qs = qv.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        const double* ks = kv.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        const double* vs = vv.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
        const double bt = bv.at((b * d.T + tt) * d.H + h);
        double* os = out.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
        for (std::int64_t i = 0; i < d.dv; ++i) {
          const double* srow = S.data() + i * d.dk;
          double ui = 0.0;
          for (std::int64_t j = 0; j < d.dk; ++j) ui += srow[j] * ks[j];
          u[static_cast<std::size_t>(i)] = ui;
        }
        for (std::int64_t i = 0; i < d.dv; ++i) {
          double* srow = S.data() + i * d.dk;
          const double e = bt * (vs[i] - u[static_cast<std::size_t>(i)]);
          double o = 0.0;
          for (std::int64_t j = 0; j < d.dk; ++j) {
            srow[j] += e * ks[j];
            o += srow[j] * qs[j];
          }
          os[i] = o;
        }
      }
    }
  }

  return t.emplace(std::move(out), {q, k, v, beta},
                   [q, k, v, beta, d, nchunks, checkpoints](Tape& tp, Var, const Tensor& g) {
    const Tensor& qv2 = tp.val(q);
    const Tensor& kv2 = tp.val(k);
    const Tensor& vv2 = tp.val(v);
    const Tensor& bv2 = tp.val(beta);
    Tensor gq(qv2.shape()), gk(kv2.shape()), gv(vv2.shape()), gb(bv2.shape());
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t b = 0; b < d.B; ++b) {
      for (std::int64_t h = 0; h < d.H; ++h) {
        const std::int64_t mat = d.dv * d.dk;
        std::vector<double> states(static_cast<std::size_t>((kScanChunk + 1) * mat));
        std::vector<double> G(static_cast<std::size_t>(mat), 0.0);
        std::vector<double> Gk(static_cast<std::size_t>(d.dv));
        std::vector<double> e(static_cast<std::size_t>(d.dv));
        for (std::int64_t c = nchunks - 1; c >= 0; --c) {
          const std::int64_t t0 = c * kScanChunk;
          const std::int64_t t1 = std::min(d.T, t0 + kScanChunk);
          const double* cp = checkpoints->data() + ((b * d.H + h) * nchunks + c) * mat;
          for (std::int64_t i = 0; i < mat; ++i) states[static_cast<std::size_t>(i)] = cp[i];
          for (std::int64_t tt = t0; tt < t1; ++tt) {
            const double* ks = kv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* vs = vv2.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double bt = bv2.at((b * d.T + tt) * d.H + h);
            const double* prev = states.data() + (tt - t0) * mat;
            double* cur = states.data() + (tt - t0 + 1) * mat;
            for (std::int64_t i = 0; i < d.dv; ++i) {
              const double* prow = prev + i * d.dk;
              double ui = 0.0;
              for (std::int64_t j = 0; j < d.dk; ++j) ui += prow[j] * ks[j];
              const double ei = bt * (vs[i] - ui);
              for (std::int64_t j = 0; j < d.dk; ++j) cur[i * d.dk + j] = prow[j] + ei * ks[j];
            }
          }
          for (std::int64_t tt = t1 - 1; tt >= t0; --tt) {
            const double* qs = qv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* ks = kv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            const double* vs = vv2.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double bt = bv2.at((b * d.T + tt) * d.H + h);
            const double* gs = g.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            const double* s_cur = states.data() + (tt - t0 + 1) * mat;
            const double* s_prev = states.data() + (tt - t0) * mat;
            double* gqs = gq.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            double* gks = gk.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            double* gvs = gv.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
            // G_t = G + g_o q^T; u, e recomputed from S_{t-1}
            double gbeta = 0.0;
            for (std::int64_t i = 0; i < d.dv; ++i) {
              double* Grow = G.data() + i * d.dk;
              const double gi = gs[i];
              const double* sprev_row = s_prev + i * d.dk;
              const double* scur_row = s_cur + i * d.dk;
              double ui = 0.0, gki = 0.0;
              for (std::int64_t j = 0; j < d.dk; ++j) {
                Grow[j] += gi * qs[j];
                gqs[j] += scur_row[j] * gi;
                ui += sprev_row[j] * ks[j];
                gki += Grow[j] * ks[j];
              }
              e[static_cast<std::size_t>(i)] = vs[i] - ui;
              Gk[static_cast<std::size_t>(i)] = gki;
              gvs[i] = bt * gki;
              gbeta += e[static_cast<std::size_t>(i)] * gki;
            }
            gb.at((b * d.T + tt) * d.H + h) = gbeta;
            // dk = beta * (G^T e - S_{t-1}^T (G k)); G <- G (I - beta k k^T)
            for (std::int64_t j = 0; j < d.dk; ++j) {
              double acc = 0.0;
              for (std::int64_t i = 0; i < d.dv; ++i) {
                acc += G[static_cast<std::size_t>(i * d.dk + j)] * e[static_cast<std::size_t>(i)] -
                       s_prev[i * d.dk + j] * Gk[static_cast<std::size_t>(i)];
              }
              gks[j] += bt * acc;
            }
            for (std::int64_t i = 0; i < d.dv; ++i) {
              double* Grow = G.data() + i * d.dk;
              const double gki = Gk[static_cast<std::size_t>(i)];
              for (std::int64_t j = 0; j < d.dk; ++j) Grow[j] -= bt * gki * ks[j];
            }
          }
        }
      }
    }
    tp.add_grad(q, gq);
    tp.add_grad(k, gk);
    tp.add_grad(v, gv);
    tp.add_grad(beta, gb);
  });
}

Var softmax_attention(Tape& t, Var q, Var k, Var v, Var bias, std::int64_t heads, double temp) {
  const Tensor& qv = t.val(q);
  const Tensor& kv = t.val(k);
  const Tensor& vv = t.val(v);
  const SeqDims d = scan_dims(qv, kv, vv, heads, "softmax_attention");
  const bool has_bias = bias.valid();
  if (has_bias) {
    check(t.val(bias).size() == d.H, "softmax bias must have one entry per head");
  }

  Tensor out(vv.shape());
  const double* bias_d = has_bias ? t.val(bias).data() : nullptr;
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t b = 0; b < d.B; ++b) {
    for (std::int64_t h = 0; h < d.H; ++h) {
      std::vector<double> p(static_cast<std::size_t>(d.T));
      for (std::int64_t tt = 0; tt < d.T; ++tt) {
        const double* qs = qv.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
        double mx = -1e300;
        for (std::int64_t tau = 0; tau <= tt; ++tau) {
          const double* ks = kv.data() + (b * d.T + tau) * d.H * d.dk + h * d.dk;
          double s = 0.0;
          for (std::int64_t j = 0; j < d.dk; ++j) s += qs[j] * ks[j];
          s = temp * s + (bias_d ? bias_d[h] : 0.0);
          p[static_cast<std::size_t>(tau)] = s;
          mx = std::max(mx, s);
        }
        double z = 0.0;
        for (std::int64_t tau = 0; tau <= tt; ++tau) {
          p[static_cast<std::size_t>(tau)] = std::exp(p[static_cast<std::size_t>(tau)] - mx);
          z += p[static_cast<std::size_t>(tau)];
        }
        double* os = out.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
        for (std::int64_t i = 0; i < d.dv; ++i) os[i] = 0.0;
        for (std::int64_t tau = 0; tau <= tt; ++tau) {
          const double w = p[static_cast<std::size_t>(tau)] / z;
          const double* vs = vv.data() + (b * d.T + tau) * d.H * d.dv + h * d.dv;
          for (std::int64_t i = 0; i < d.dv; ++i) os[i] += w * vs[i];
        }
      }
    }
  }

  std::vector<Var> parents = {q, k, v};
  if (has_bias) parents.push_back(bias);
  return t.emplace(std::move(out), parents,
                   [q, k, v, bias, has_bias, d, temp](Tape& tp, Var, const Tensor& g) {
    const Tensor& qv2 = tp.val(q);
    const Tensor& kv2 = tp.val(k);
    const Tensor& vv2 = tp.val(v);
    const double* bias_d = has_bias ? tp.val(bias).data() : nullptr;
    Tensor gq(qv2.shape()), gk(kv2.shape()), gv(vv2.shape());
    // per-(b) bias partials combined serially afterwards for determinism
    Tensor gbias_partial({d.B, d.H});
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < d.B; ++b) {
      std::vector<double> p(static_cast<std::size_t>(d.T));
      std::vector<double> ds(static_cast<std::size_t>(d.T));
      for (std::int64_t h = 0; h < d.H; ++h) {
        for (std::int64_t tt = 0; tt < d.T; ++tt) {
          const double* qs = qv2.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
          const double* gs = g.data() + (b * d.T + tt) * d.H * d.dv + h * d.dv;
          double mx = -1e300;
          for (std::int64_t tau = 0; tau <= tt; ++tau) {
            const double* ks = kv2.data() + (b * d.T + tau) * d.H * d.dk + h * d.dk;
            double s = 0.0;
            for (std::int64_t j = 0; j < d.dk; ++j) s += qs[j] * ks[j];
            s = temp * s + (bias_d ? bias_d[h] : 0.0);
            p[static_cast<std::size_t>(tau)] = s;
            mx = std::max(mx, s);
          }
          double z = 0.0;
          for (std::int64_t tau = 0; tau <= tt; ++tau) {
            p[static_cast<std::size_t>(tau)] = std::exp(p[static_cast<std::size_t>(tau)] - mx);
            z += p[static_cast<std::size_t>(tau)];
          }
          double dot_pg = 0.0;  // sum_tau p_tau (g . v_tau)
          for (std::int64_t tau = 0; tau <= tt; ++tau) {
            const double w = p[static_cast<std::size_t>(tau)] / z;
            const double* vs = vv2.data() + (b * d.T + tau) * d.H * d.dv + h * d.dv;
            double gvdot = 0.0;
            for (std::int64_t i = 0; i < d.dv; ++i) gvdot += gs[i] * vs[i];
            ds[static_cast<std::size_t>(tau)] = w * gvdot;
            dot_pg += w * gvdot;
          }
          double dbias = 0.0;
          for (std::int64_t tau = 0; tau <= tt; ++tau) {
            const double w = p[static_cast<std::size_t>(tau)] / z;
            const double dscore = ds[static_cast<std::size_t>(tau)] - w * dot_pg;
            dbias += dscore;
            const double* ks = kv2.data() + (b * d.T + tau) * d.H * d.dk + h * d.dk;
            const double* vs = vv2.data() + (b * d.T + tau) * d.H * d.dv + h * d.dv;
            double* gks = gk.data() + (b * d.T + tau) * d.H * d.dk + h * d.dk;
            double* gvs = gv.data() + (b * d.T + tau) * d.H * d.dv + h * d.dv;
            double* gqs = gq.data() + (b * d.T + tt) * d.H * d.dk + h * d.dk;
            for (std::int64_t j = 0; j < d.dk; ++j) {
              gqs[j] += temp * dscore * ks[j];
              gks[j] += temp * dscore * qs[j];
            }
            for (std::int64_t i = 0; i < d.dv; ++i) gvs[i] += w * gs[i];
          }
          gbias_partial.at(b, h) += dbias;
        }
      }
    }
    tp.add_grad(q, gq);
    tp.add_grad(k, gk);
    tp.add_grad(v, gv);
    if (has_bias && tp.needs_grad(bias)) {
      Tensor gbias(tp.val(bias).shape());
      for (std::int64_t h = 0; h < d.H; ++h) {
        double s = 0.0;
        for (std::int64_t b = 0; b < d.B; ++b) s += gbias_partial.at(b, h);
        gbias.at(h) = s;
      }
      tp.add_grad(bias, gbias);
    }
  });
}

Var causal_bias_add(Tape& t, Var scores, Var bias) {
  const Tensor& sv = t.val(scores);
  check(sv.rank() == 2 && sv.dim(0) == sv.dim(1), "causal_bias_add expects square [T x T] scores");
  check(t.val(bias).size() == 1, "causal_bias_add bias must be a scalar");
  const std::int64_t T = sv.dim(0);
  const double b = t.val(bias).at(0);
  Tensor out = sv;
  for (std::int64_t r = 0; r < T; ++r)
    for (std::int64_t c = 0; c <= r; ++c) out.at(r, c) += b;
  return t.emplace(std::move(out), {scores, bias}, [scores, bias, T](Tape& tp, Var, const Tensor& g) {
    tp.add_grad(scores, g);
    double s = 0.0;
    for (std::int64_t r = 0; r < T; ++r)
      for (std::int64_t c = 0; c <= r; ++c) s += g.at(r, c);
    tp.add_grad(bias, Tensor::scalar(s));
  });
}

}  // namespace rotla::ad
