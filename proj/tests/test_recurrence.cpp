#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rotla/kernels.hpp"
#include "rotla/posenc.hpp"
#include "rotla/recurrence.hpp"
#include "rotla/rng.hpp"

using namespace rotla;
namespace rc = rotla::recurrence;
namespace pe = rotla::posenc;

namespace {

Tensor outputs_from_attention(const Tensor& att, const Tensor& v) {
  const std::int64_t T = att.dim(0), dv = v.dim(1);
  Tensor out({T, dv});
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t tau = 0; tau <= t; ++tau)
      for (std::int64_t i = 0; i < dv; ++i) out.at(t, i) += att.at(t, tau) * v.at(tau, i);
  return out;
}

struct RandomCase {
  Tensor q, k, v;
  rc::TransitionSpec spec;
};

RandomCase random_case(Rng& rng, rc::TransitionKind kind, std::int64_t T, std::int64_t dk, std::int64_t dv) {
  RandomCase c;
  c.q = rng.gaussian_tensor({T, dk}, 1.0 / std::sqrt(static_cast<double>(dk)));
  c.k = rng.gaussian_tensor({T, dk}, 1.0 / std::sqrt(static_cast<double>(dk)));
  c.v = rng.gaussian_tensor({T, dv}, 1.0);
  switch (kind) {
    case rc::TransitionKind::identity:
      c.spec = rc::TransitionSpec::identity_spec();
      break;
    case rc::TransitionKind::decay:
      c.spec = rc::TransitionSpec::decay_spec(rng.uniform_tensor({T, dk}, 0.2, 0.999));
      break;
    case rc::TransitionKind::fixed_rotation: {
      Tensor temps = pe::make_schedule(pe::ScheduleKind::rope_exponential, dk, 1e-3);
      std::vector<std::int64_t> pos(static_cast<std::size_t>(T));
      for (std::int64_t t = 0; t < T; ++t) pos[static_cast<std::size_t>(t)] = t;
      c.spec = rc::TransitionSpec::rotation_spec(pe::fixed_angle_track(pos, temps), true);
      break;
    }
    case rc::TransitionKind::selective_rotation: {
      Tensor steps = rng.uniform_tensor({T, dk / 2}, -2.0, 2.0);
      c.spec = rc::TransitionSpec::rotation_spec(kernels::cumsum(steps, 0), false);
      break;
    }
    case rc::TransitionKind::decay_rotation: {
      Tensor pair_decay = rng.uniform_tensor({T, dk / 2}, 0.3, 1.0);
      Tensor decay({T, dk});
      for (std::int64_t t = 0; t < T; ++t)
        for (std::int64_t n = 0; n < dk / 2; ++n) {
          decay.at(t, 2 * n) = pair_decay.at(t, n);
          decay.at(t, 2 * n + 1) = pair_decay.at(t, n);
        }
      Tensor steps = rng.uniform_tensor({T, dk / 2}, -2.0, 2.0);
      c.spec = rc::compose_with_posenc(decay, kernels::cumsum(steps, 0));
      break;
    }
    case rc::TransitionKind::delta_rule: {
      for (std::int64_t t = 0; t < T; ++t) {
        double ss = 0.0;
        for (std::int64_t j = 0; j < dk; ++j) ss += c.k.at(t, j) * c.k.at(t, j);
        const double inv = 1.0 / std::sqrt(ss);
        for (std::int64_t j = 0; j < dk; ++j) c.k.at(t, j) *= inv;
      }
      c.spec = rc::TransitionSpec::delta_spec(rng.uniform_tensor({T}, 0.05, 1.0));
      break;
    }
  }
  return c;
}

const rc::TransitionKind kAllKinds[] = {
    rc::TransitionKind::identity,       rc::TransitionKind::decay,
    rc::TransitionKind::fixed_rotation, rc::TransitionKind::selective_rotation,
    rc::TransitionKind::decay_rotation, rc::TransitionKind::delta_rule,
};

}  // namespace

TEST_CASE("scan hand cases: running sum and geometric decay") {
  Tensor ones({3, 1}, {1, 1, 1});
  rc::ScanResult r = rc::scan(ones, ones, ones, rc::TransitionSpec::identity_spec());
  CHECK(r.outputs.at(0, 0) == doctest::Approx(1.0));
  CHECK(r.outputs.at(1, 0) == doctest::Approx(2.0));
  CHECK(r.outputs.at(2, 0) == doctest::Approx(3.0));

  rc::ScanResult d = rc::scan(ones, ones, ones, rc::TransitionSpec::decay_spec(Tensor::full({3, 1}, 0.5)));
  CHECK(d.outputs.at(0, 0) == doctest::Approx(1.0));
  CHECK(d.outputs.at(1, 0) == doctest::Approx(1.5));
  CHECK(d.outputs.at(2, 0) == doctest::Approx(1.75));
}

TEST_CASE("attention matrix basics") {
  Rng rng(31);
  Tensor q = rng.gaussian_tensor({4, 3}, 1.0);
  Tensor k = rng.gaussian_tensor({4, 3}, 1.0);
  Tensor att = rc::attention_matrix(q, k, rc::TransitionSpec::identity_spec());
  // strictly causal
  for (int t = 0; t < 4; ++t)
    for (int tau = t + 1; tau < 4; ++tau) CHECK(att.at(t, tau) == 0.0);
  // identity transition reduces to plain dot products
  for (int t = 0; t < 4; ++t)
    for (int tau = 0; tau <= t; ++tau) {
      double s = 0.0;
      for (int j = 0; j < 3; ++j) s += k.at(tau, j) * q.at(t, j);
      CHECK(att.at(t, tau) == doctest::Approx(s).epsilon(1e-14));
    }
  // T = 1: single entry k1 . q1
  Tensor q1 = rng.gaussian_tensor({1, 3}, 1.0);
  Tensor k1 = rng.gaussian_tensor({1, 3}, 1.0);
  Tensor att1 = rc::attention_matrix(q1, k1, rc::TransitionSpec::identity_spec());
  double s = 0.0;
  for (int j = 0; j < 3; ++j) s += k1.at(0, j) * q1.at(0, j);
  CHECK(att1.at(0, 0) == doctest::Approx(s).epsilon(1e-14));
}

TEST_CASE("mode equivalence: scan matches attention-matrix outputs for every kind") {
  Rng rng(32);
  for (auto kind : kAllKinds) {
    for (int seed = 0; seed < 3; ++seed) {
      Rng sub = rng.substream(static_cast<std::uint64_t>(100 * static_cast<int>(kind) + seed));
      RandomCase c = random_case(sub, kind, 33, 8, 6);
      rc::ScanResult seq = rc::scan(c.q, c.k, c.v, c.spec);
      Tensor oracle = outputs_from_attention(rc::attention_matrix(c.q, c.k, c.spec), c.v);
      INFO("kind ", static_cast<int>(kind), " seed ", seed);
      CHECK(max_abs_diff(seq.outputs, oracle) < 1e-10);
      Tensor via = rc::scan_via_attention(c.q, c.k, c.v, c.spec);
      CHECK(max_abs_diff(seq.outputs, via) < 1e-10);
    }
  }
}

TEST_CASE("chunked scan is compatible with sequential at 1e-12") {
  Rng rng(33);
  for (auto kind : kAllKinds) {
    RandomCase c = random_case(rng, kind, 53, 8, 8);
    rc::ScanResult seq = rc::scan(c.q, c.k, c.v, c.spec);
    for (std::int64_t chunk : {1, 7, 16, 64}) {
      rc::ScanResult ch = rc::scan(c.q, c.k, c.v, c.spec, false, rc::ScanMode::chunked, chunk);
      INFO("kind ", static_cast<int>(kind), " chunk ", chunk);
      CHECK(max_abs_diff(seq.outputs, ch.outputs) < 1e-12);
      CHECK(max_abs_diff(seq.final_state, ch.final_state) < 1e-12);
    }
  }
}

TEST_CASE("rotation-transition scan equals rotated-qk identity scan (RoPE trick)") {
  Rng rng(34);
  for (int seed = 0; seed < 5; ++seed) {
    Rng sub = rng.substream(static_cast<std::uint64_t>(seed));
    const std::int64_t T = 40, d = 8;
    RandomCase c = random_case(sub, rc::TransitionKind::selective_rotation, T, d, d);
    rc::ScanResult rot = rc::scan(c.q, c.k, c.v, c.spec);
    auto [qr, kr] = pe::selective_rope_apply(c.q, c.k, c.spec.angle_track);
    rc::ScanResult idn = rc::scan(qr, kr, c.v, rc::TransitionSpec::identity_spec());
    CHECK(max_abs_diff(rot.outputs, idn.outputs) < 1e-10);
  }
}

TEST_CASE("rotated-dot-product equals explicit transition-product score") {
  Rng rng(35);
  const std::int64_t T = 24, d = 6;
  RandomCase c = random_case(rng, rc::TransitionKind::selective_rotation, T, d, d);
  auto [qr, kr] = pe::selective_rope_apply(c.q, c.k, c.spec.angle_track);
  Tensor att = rc::attention_matrix(c.q, c.k, c.spec);
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t tau = 0; tau <= t; ++tau) {
      double s = 0.0;
      for (std::int64_t j = 0; j < d; ++j) s += kr.at(tau, j) * qr.at(t, j);
      CHECK(std::fabs(s - att.at(t, tau)) < 1e-10);
    }
}

TEST_CASE("compose_with_posenc: reductions and pair-constancy contract") {
  Rng rng(36);
  const std::int64_t T = 20, d = 6;
  RandomCase base = random_case(rng, rc::TransitionKind::identity, T, d, d);
  Tensor track = kernels::cumsum(rng.uniform_tensor({T, d / 2}, -1.5, 1.5), 0);

  // decay == 1 reduces to pure selective rotation
  rc::TransitionSpec composed = rc::compose_with_posenc(Tensor::full({T, d}, 1.0), track);
  rc::ScanResult a = rc::scan(base.q, base.k, base.v, composed);
  rc::ScanResult b = rc::scan(base.q, base.k, base.v, rc::TransitionSpec::rotation_spec(track));
  CHECK(max_abs_diff(a.outputs, b.outputs) < 1e-12);

  // angles == 0 reduces to pure decay
  Tensor pair_decay = rng.uniform_tensor({T, d / 2}, 0.3, 0.99);
  Tensor decay({T, d});
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t n = 0; n < d / 2; ++n) {
      decay.at(t, 2 * n) = pair_decay.at(t, n);
      decay.at(t, 2 * n + 1) = pair_decay.at(t, n);
    }
  rc::TransitionSpec composed0 = rc::compose_with_posenc(decay, Tensor::zeros({T, d / 2}));
  rc::ScanResult c0 = rc::scan(base.q, base.k, base.v, composed0);
  rc::ScanResult d0 = rc::scan(base.q, base.k, base.v, rc::TransitionSpec::decay_spec(decay));
  CHECK(max_abs_diff(c0.outputs, d0.outputs) < 1e-12);

  // composed spec matches the oracle with per-step product Lambda R
  rc::TransitionSpec full = rc::compose_with_posenc(decay, track);
  rc::ScanResult sc = rc::scan(base.q, base.k, base.v, full);
  Tensor oracle = outputs_from_attention(rc::attention_matrix(base.q, base.k, full), base.v);
  CHECK(max_abs_diff(sc.outputs, oracle) < 1e-10);

  // non-pair-constant decay is rejected
  Tensor bad = decay;
  bad.at(0, 1) += 0.1;
  CHECK_THROWS_AS(rc::compose_with_posenc(bad, track), ContractError);
}

TEST_CASE("delta rule: overwrite, zero-like beta, dense unroll oracle") {
  const std::int64_t T = 2, d = 2;
  Tensor k({T, d}, {1, 0, 1, 0});
  Tensor v({T, d}, {3, 5, -2, 7});
  Tensor q({T, d}, {1, 0, 1, 0});
  rc::ScanResult r = rc::delta_scan(q, k, v, Tensor::full({T}, 1.0));
  CHECK(r.outputs.at(1, 0) == doctest::Approx(-2.0).epsilon(1e-14));
  CHECK(r.outputs.at(1, 1) == doctest::Approx(7.0).epsilon(1e-14));

  // beta -> 0 keeps the state near zero
  rc::ScanResult z = rc::delta_scan(q, k, v, Tensor::full({T}, 1e-12));
  CHECK(max_abs(z.outputs) < 1e-10);

  // random case against the explicit matrix-product unrolling
  Rng rng(37);
  RandomCase c = random_case(rng, rc::TransitionKind::delta_rule, 28, 6, 5);
  rc::ScanResult s = rc::scan(c.q, c.k, c.v, c.spec);
  Tensor oracle = outputs_from_attention(rc::attention_matrix(c.q, c.k, c.spec), c.v);
  CHECK(max_abs_diff(s.outputs, oracle) < 1e-10);

  // non-unit key triggers the contract error
  Tensor bad_k = c.k;
  bad_k.at(0, 0) += 0.1;
  CHECK_THROWS_AS(rc::scan(c.q, bad_k, c.v, c.spec), ContractError);
}

TEST_CASE("delta idempotence: repeated beta=1 writes of the same pair leave S unchanged") {
  Rng rng(38);
  const std::int64_t d = 4;
  Tensor kv = rng.gaussian_tensor({1, d}, 1.0);
  double ss = 0.0;
  for (std::int64_t j = 0; j < d; ++j) ss += kv.at(0, j) * kv.at(0, j);
  for (std::int64_t j = 0; j < d; ++j) kv.at(0, j) /= std::sqrt(ss);
  Tensor k({3, d});
  Tensor v({3, d});
  Tensor q = rng.gaussian_tensor({3, d}, 1.0);
  Tensor val = rng.gaussian_tensor({1, d}, 1.0);
  for (int t = 0; t < 3; ++t)
    for (std::int64_t j = 0; j < d; ++j) {
      k.at(t, j) = kv.at(0, j);
      v.at(t, j) = val.at(0, j);
    }
  rc::ScanResult r1 = rc::scan(q, k, v, rc::TransitionSpec::delta_spec(Tensor::full({3}, 1.0)));
  // after the first write, the state is fixed: outputs at t=1, 2 match t=0
  // when queried with the same q
  Tensor qq({3, d});
  for (int t = 0; t < 3; ++t)
    for (std::int64_t j = 0; j < d; ++j) qq.at(t, j) = q.at(0, j);
  rc::ScanResult r2 = rc::scan(qq, k, v, rc::TransitionSpec::delta_spec(Tensor::full({3}, 1.0)));
  for (int t = 1; t < 3; ++t)
    for (std::int64_t j = 0; j < d; ++j)
      CHECK(r2.outputs.at(t, j) == doctest::Approx(r2.outputs.at(0, j)).epsilon(1e-12));
}

TEST_CASE("norm preservation and contraction invariants") {
  Rng rng(39);
  const std::int64_t T = 30, d = 8;
  // pure rotation: with v = 0 after step 1, ||S||_F stays constant
  RandomCase c = random_case(rng, rc::TransitionKind::selective_rotation, T, d, d);
  Tensor v_first = Tensor::zeros({T, d});
  for (std::int64_t j = 0; j < d; ++j) v_first.at(0, j) = c.v.at(0, j);
  // track the state by scanning prefixes
  double norm1 = -1.0;
  for (std::int64_t cut : {1LL, 10LL, 30LL}) {
    Tensor q2({cut, d}), k2({cut, d}), v2({cut, d});
    Tensor track2({cut, d / 2});
    for (std::int64_t t = 0; t < cut; ++t) {
      for (std::int64_t j = 0; j < d; ++j) {
        q2.at(t, j) = c.q.at(t, j);
        k2.at(t, j) = c.k.at(t, j);
        v2.at(t, j) = v_first.at(t, j);
      }
      for (std::int64_t n = 0; n < d / 2; ++n) track2.at(t, n) = c.spec.angle_track.at(t, n);
    }
    rc::ScanResult r = rc::scan(q2, k2, v2, rc::TransitionSpec::rotation_spec(track2));
    double fro = 0.0;
    for (std::int64_t i = 0; i < r.final_state.size(); ++i) fro += r.final_state.at(i) * r.final_state.at(i);
    fro = std::sqrt(fro);
    if (norm1 < 0)
      norm1 = fro;
    else
      CHECK(std::fabs(fro - norm1) < 1e-12);
  }

  // contraction under decay: ||S_t|| <= max(alpha_t) ||S_{t-1}|| + ||v_t|| ||k_t||
  RandomCase dc = random_case(rng, rc::TransitionKind::decay, T, d, d);
  double prev_norm = 0.0;
  for (std::int64_t cut = 1; cut <= T; ++cut) {
    Tensor q2({cut, d}), k2({cut, d}), v2({cut, d}), decay2({cut, d});
    for (std::int64_t t = 0; t < cut; ++t)
      for (std::int64_t j = 0; j < d; ++j) {
        q2.at(t, j) = dc.q.at(t, j);
        k2.at(t, j) = dc.k.at(t, j);
        v2.at(t, j) = dc.v.at(t, j);
        decay2.at(t, j) = dc.spec.decay.at(t, j);
      }
    rc::ScanResult r = rc::scan(q2, k2, v2, rc::TransitionSpec::decay_spec(decay2));
    double fro = 0.0;
    for (std::int64_t i = 0; i < r.final_state.size(); ++i) fro += r.final_state.at(i) * r.final_state.at(i);
    fro = std::sqrt(fro);
    double amax = 0.0, kn = 0.0, vn = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      amax = std::max(amax, decay2.at(cut - 1, j));
      kn += k2.at(cut - 1, j) * k2.at(cut - 1, j);
      vn += v2.at(cut - 1, j) * v2.at(cut - 1, j);
    }
    CHECK(fro <= amax * prev_norm + std::sqrt(kn) * std::sqrt(vn) + 1e-9);
    prev_norm = fro;
  }
}

TEST_CASE("causality: perturbing input at t0 leaves earlier outputs bit-identical") {
  Rng rng(40);
  RandomCase c = random_case(rng, rc::TransitionKind::decay_rotation, 24, 6, 6);
  rc::ScanResult base = rc::scan(c.q, c.k, c.v, c.spec);
  const std::int64_t t0 = 15;
  Tensor v2 = c.v;
  v2.at(t0, 2) += 3.0;
  Tensor q2 = c.q;
  q2.at(t0, 1) -= 2.0;
  rc::ScanResult pert = rc::scan(q2, c.k, v2, c.spec);
  for (std::int64_t t = 0; t < t0; ++t)
    for (std::int64_t i = 0; i < 6; ++i) CHECK(pert.outputs.at(t, i) == base.outputs.at(t, i));
}

TEST_CASE("normalizer divides by z . q when enabled") {
  // identity transition, positive q/k: normalized outputs are averages
  Tensor ones({3, 1}, {1, 1, 1});
  Tensor v({3, 1}, {2, 4, 6});
  rc::ScanResult r = rc::scan(ones, ones, v, rc::TransitionSpec::identity_spec(), true);
  CHECK(r.outputs.at(0, 0) == doctest::Approx(2.0));
  CHECK(r.outputs.at(1, 0) == doctest::Approx(3.0));
  CHECK(r.outputs.at(2, 0) == doctest::Approx(4.0));
  // chunked mode with the normalizer agrees
  rc::ScanResult ch = rc::scan(ones, ones, v, rc::TransitionSpec::identity_spec(), true, rc::ScanMode::chunked, 2);
  CHECK(max_abs_diff(r.outputs, ch.outputs) < 1e-12);
}

TEST_CASE("non-finite state reports the first offending timestep") {
  Tensor q({2, 1}, {1, 1});
  Tensor v({2, 1}, {1, 1});
  Tensor k({2, 1}, {1e308, 1e308});
  try {
    rc::scan(q, k, v, rc::TransitionSpec::identity_spec());
    FAIL("expected non-finite diagnostic");
  } catch (const ContractError& e) {
    CHECK(std::string(e.what()).find("timestep") != std::string::npos);
  }
}
