#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rotla/gradcheck.hpp"
#include "rotla/posenc.hpp"
#include "rotla/rng.hpp"

using namespace rotla;
namespace pe = rotla::posenc;

namespace {
constexpr double kPi = std::numbers::pi;

double row_norm(const Tensor& x, std::int64_t t) {
  double ss = 0.0;
  for (std::int64_t j = 0; j < x.dim(1); ++j) ss += x.at(t, j) * x.at(t, j);
  return std::sqrt(ss);
}

double dot_row(const Tensor& a, std::int64_t ra, const Tensor& b, std::int64_t rb) {
  double s = 0.0;
  for (std::int64_t j = 0; j < a.dim(1); ++j) s += a.at(ra, j) * b.at(rb, j);
  return s;
}
}  // namespace

TEST_CASE("temperature schedules: pinned values and monotonicity") {
  // rope-exponential, dim 4, eps 1e-4 -> [1.0, 0.01]
  Tensor r = pe::make_schedule(pe::ScheduleKind::rope_exponential, 4, 1e-4);
  CHECK(r.at(0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.at(1) == doctest::Approx(0.01).epsilon(1e-12));

  // tan-half-angle endpoints: tan(0) = 0; phi = pi/2 -> tan(pi/4) = 1
  Tensor t2 = pe::make_schedule(pe::ScheduleKind::tan_half_angle, 4, 0.5);
  CHECK(t2.at(0) == 0.0);
  CHECK(t2.at(1) == doctest::Approx(1.0).epsilon(1e-12));  // phi spans [0, pi/2]

  Tensor tn = pe::make_schedule(pe::ScheduleKind::tan_half_angle, 16, 0.1);
  for (std::int64_t i = 1; i < tn.size(); ++i) CHECK(tn.at(i) > tn.at(i - 1));
  Tensor rn = pe::make_schedule(pe::ScheduleKind::rope_exponential, 16, 1e-4);
  for (std::int64_t i = 1; i < rn.size(); ++i) CHECK(rn.at(i) < rn.at(i - 1));

  CHECK_THROWS_AS(pe::make_schedule(pe::ScheduleKind::tan_half_angle, 4, 1.5), ContractError);
  CHECK_THROWS_AS(pe::make_schedule(pe::ScheduleKind::rope_exponential, 3, 0.5), ContractError);
}

TEST_CASE("rope_apply: identity at angle zero, quarter turn, relative positions") {
  Rng rng(21);
  Tensor q = rng.gaussian_tensor({6, 4}, 1.0);
  Tensor k = rng.gaussian_tensor({6, 4}, 1.0);
  Tensor zero_temps = Tensor::zeros({2});
  auto [q0, k0] = pe::rope_apply(q, k, {0, 1, 2, 3, 4, 5}, zero_temps);
  CHECK(max_abs_diff(q0, q) == 0.0);
  CHECK(max_abs_diff(k0, k) == 0.0);

  // pair (1, 0) at angle pi/2 -> (0, 1)
  Tensor single({1, 2}, {1.0, 0.0});
  Tensor temps({1}, {kPi / 2.0});
  auto [qr, kr] = pe::rope_apply(single, single, {1}, temps);
  CHECK(qr.at(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(qr.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));

  // same q and k vectors placed at shifted positions: dot(rot(q, t=5),
  // rot(k, tau=2)) == dot(rot(q, t=3), rot(k, tau=0))
  Tensor temps4 = pe::make_schedule(pe::ScheduleKind::rope_exponential, 4, 1e-2);
  Tensor q2({2, 4}), k2({2, 4});
  for (int j = 0; j < 4; ++j) {
    q2.at(0, j) = q.at(0, j);
    q2.at(1, j) = q.at(0, j);
    k2.at(0, j) = k.at(0, j);
    k2.at(1, j) = k.at(0, j);
  }
  Tensor qa = pe::rotate_pairs(q2, pe::fixed_angle_track({5, 3}, temps4));
  Tensor ka = pe::rotate_pairs(k2, pe::fixed_angle_track({2, 0}, temps4));
  const double s1 = dot_row(qa, 0, ka, 0);
  const double s2 = dot_row(qa, 1, ka, 1);
  CHECK(std::fabs(s1 - s2) < 1e-12);

  CHECK_THROWS_AS(pe::rope_apply(Tensor({2, 3}), Tensor({2, 3}), {0, 1}, temps4), ContractError);
}

TEST_CASE("selective_rope_apply: zero track identity, half turn, norm preservation, gauge invariance") {
  Rng rng(22);
  const std::int64_t T = 12, d = 8;
  Tensor q = rng.gaussian_tensor({T, d}, 1.0);
  Tensor k = rng.gaussian_tensor({T, d}, 1.0);

  auto [qz, kz] = pe::selective_rope_apply(q, k, Tensor::zeros({T, d / 2}));
  CHECK(max_abs_diff(qz, q) == 0.0);

  Tensor single({2, 2}, {1.0, 2.0, 1.0, 2.0});
  Tensor track({2, 1}, {0.0, kPi});
  auto [qh, kh] = pe::selective_rope_apply(single, single, track);
  CHECK(qh.at(1, 0) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(qh.at(1, 1) == doctest::Approx(-2.0).epsilon(1e-12));

  Tensor rnd_track = rng.uniform_tensor({T, d / 2}, -8.0, 8.0);
  auto [qr, kr] = pe::selective_rope_apply(q, k, rnd_track);
  for (std::int64_t t = 0; t < T; ++t) {
    CHECK(std::fabs(row_norm(qr, t) - row_norm(q, t)) < 1e-12);
    CHECK(std::fabs(row_norm(kr, t) - row_norm(k, t)) < 1e-12);
  }

  // adding a global constant to all cumulative angles leaves scores unchanged
  Tensor shifted = rnd_track;
  for (std::int64_t i = 0; i < shifted.size(); ++i) shifted.at(i) += 0.83;
  auto [qs, ks] = pe::selective_rope_apply(q, k, shifted);
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t tau = 0; tau <= t; ++tau)
      CHECK(std::fabs(dot_row(qr, t, kr, tau) - dot_row(qs, t, ks, tau)) < 1e-12);

  CHECK_THROWS_AS(pe::selective_rope_apply(q, k, Tensor::zeros({T + 1, d / 2})), ContractError);
}

TEST_CASE("positional bias: zero identity, constant shift") {
  Rng rng(23);
  Tensor scores = rng.gaussian_tensor({5, 5}, 1.0);
  CHECK(max_abs_diff(pe::positional_bias(scores, 0.0), scores) == 0.0);
  Tensor shifted = pe::positional_bias(scores, 1.5);
  for (int t = 0; t < 5; ++t)
    for (int tau = 0; tau < 5; ++tau) {
      const double expect = tau <= t ? scores.at(t, tau) + 1.5 : scores.at(t, tau);
      CHECK(shifted.at(t, tau) == doctest::Approx(expect).epsilon(1e-15));
    }
}

TEST_CASE("householder factorization equals the rotation") {
  {
    auto [prod, rot] = pe::householder_rotation_check(0.0);
    Tensor eye({2, 2}, {1, 0, 0, 1});
    CHECK(max_abs_diff(prod, eye) < 1e-15);
    CHECK(max_abs_diff(rot, eye) < 1e-15);
  }
  {
    auto [prod, rot] = pe::householder_rotation_check(kPi / 2.0);
    Tensor expect({2, 2}, {0, -1, 1, 0});
    CHECK(max_abs_diff(prod, expect) < 1e-12);
    CHECK(max_abs_diff(rot, expect) < 1e-12);
  }
  Rng rng(24);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double theta = rng.uniform_tensor({1}, -10.0, 10.0).at(0);
    auto [prod, rot] = pe::householder_rotation_check(theta);
    worst = std::max(worst, max_abs_diff(prod, rot));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("selective_angles pipeline: zero stream, constant angle reduction, prefix-sum inverse") {
  pe::SelectiveRopeConfig cfg;
  cfg.head_dim = 4;
  cfg.num_heads = 2;
  cfg.conv_width = 2;
  cfg.schedule = {pe::ScheduleKind::tan_half_angle, 4, 0.5};
  cfg.phase_gate = false;
  cfg.weight_norm = false;

  const std::int64_t B = 1, T = 6, Dm = 8;
  Rng rng(25);

  auto make_vars = [&](ad::Tape& t, const Tensor& womega, const Tensor& kernel) {
    pe::SelectiveRopeVars p;
    p.w_omega = t.leaf(womega);
    p.conv_kernel = t.leaf(kernel);
    Tensor temps({cfg.angle_channels()});
    Tensor sched = pe::make_schedule(cfg.schedule);
    for (std::int64_t h = 0; h < cfg.num_heads; ++h)
      for (std::int64_t n = 0; n < cfg.head_dim / 2; ++n) temps.at(h * cfg.head_dim / 2 + n) = sched.at(n);
    p.temps = t.leaf(temps);
    return p;
  };

  // all-zero q stream -> zero angles -> downstream rotation is identity
  {
    ad::Tape t;
    Tensor womega = rng.gaussian_tensor({cfg.angle_channels(), cfg.head_dim}, 1.0);
    Tensor kernel = rng.gaussian_tensor({cfg.conv_width, cfg.angle_channels()}, 1.0);
    pe::SelectiveRopeVars p = make_vars(t, womega, kernel);
    ad::Var q = t.leaf(Tensor::zeros({B, T, cfg.num_heads * cfg.head_dim}));
    ad::Var hidden = t.leaf(Tensor::zeros({B, T, Dm}));
    ad::Var track = pe::selective_angles(t, q, hidden, p, cfg);
    CHECK(max_abs(t.val(track)) == 0.0);
    ad::Var x = t.leaf(rng.gaussian_tensor({B, T, cfg.num_heads * cfg.head_dim}, 1.0));
    auto [xr, xr2] = pe::selective_rope_apply(t, x, x, track);
    CHECK(max_abs_diff(t.val(xr), t.val(x)) == 0.0);
  }

  // W_omega and conv chosen so the per-step angle is a constant c:
  // the track is c * (t + 1) per channel, i.e. standard RoPE of frequency c
  {
    ad::Tape t;
    // projection picks channel 0 of each head with weight 1; conv kernel
    // keeps only the current step; constant q stream of ones
    Tensor womega = Tensor::zeros({cfg.angle_channels(), cfg.head_dim});
    for (std::int64_t r = 0; r < cfg.angle_channels(); ++r) womega.at(r, 0) = 0.5;
    Tensor kernel = Tensor::zeros({cfg.conv_width, cfg.angle_channels()});
    for (std::int64_t c = 0; c < cfg.angle_channels(); ++c) kernel.at(cfg.conv_width - 1, c) = 1.0;
    pe::SelectiveRopeVars p = make_vars(t, womega, kernel);
    ad::Var q = t.leaf(Tensor::full({B, T, cfg.num_heads * cfg.head_dim}, 1.0));
    ad::Var hidden = t.leaf(Tensor::zeros({B, T, Dm}));
    Tensor track = t.val(pe::selective_angles(t, q, hidden, p, cfg));
    Tensor sched = pe::make_schedule(cfg.schedule);
    for (std::int64_t tt = 0; tt < T; ++tt)
      for (std::int64_t h = 0; h < cfg.num_heads; ++h)
        for (std::int64_t n = 0; n < cfg.head_dim / 2; ++n) {
          const double per_step = 0.5 * sched.at(n);
          const double expect = std::fmod(per_step * static_cast<double>(tt + 1), 2.0 * kPi);
          CHECK(std::fabs(track.at(0, tt, h * cfg.head_dim / 2 + n) - expect) < 1e-10);
        }
  }

  // random stream: consecutive track differences reproduce per-step angles
  {
    ad::Tape t;
    pe::SelectiveRopeConfig cfg2 = cfg;
    cfg2.phase_gate = true;
    cfg2.weight_norm = true;
    Tensor womega = rng.gaussian_tensor({cfg.angle_channels(), cfg.head_dim}, 1.0);
    Tensor kernel = rng.gaussian_tensor({cfg.conv_width, cfg.angle_channels()}, 1.0);
    pe::SelectiveRopeVars p = make_vars(t, womega, kernel);
    p.w_omega_scale = t.leaf(rng.gaussian_tensor({cfg.angle_channels(), 1}, 1.0));
    p.gate_w = t.leaf(rng.gaussian_tensor({Dm, cfg.num_heads}, 1.0));
    p.gate_b = t.leaf(Tensor::zeros({cfg.num_heads}));
    ad::Var q = t.leaf(rng.gaussian_tensor({B, T, cfg.num_heads * cfg.head_dim}, 1.0));
    ad::Var hidden = t.leaf(rng.gaussian_tensor({B, T, Dm}, 1.0));

    // rebuild the per-step angles with the same ops, minus the cumsum
    ad::Var w_eff = ad::mul(t, ad::l2norm_rows(t, p.w_omega), p.w_omega_scale);
    ad::Var omega = ad::causal_conv1d(t, ad::headwise_linear(t, q, w_eff, cfg.num_heads), p.conv_kernel);
    ad::Var gate = ad::sigmoid(t, ad::add(t, ad::matmul(t, ad::l2norm_rows(t, hidden), p.gate_w), p.gate_b));
    omega = ad::mul(t, ad::mul(t, omega, ad::repeat_cols(t, gate, cfg.head_dim / 2)), p.temps);
    const Tensor& per_step = t.val(omega);

    Tensor track = t.val(pe::selective_angles(t, q, hidden, p, cfg2));
    for (std::int64_t tt = 0; tt < T; ++tt)
      for (std::int64_t c = 0; c < cfg.angle_channels(); ++c) {
        double prev = tt == 0 ? 0.0 : track.at(0, tt - 1, c);
        double diff = track.at(0, tt, c) - prev;
        diff -= 2.0 * kPi * std::round((diff - per_step.at(0, tt, c)) / (2.0 * kPi));
        CHECK(std::fabs(diff - per_step.at(0, tt, c)) < 1e-12);
      }
  }
}

TEST_CASE("phase gate saturated at zero reduces selective rope to identity rotation") {
  pe::SelectiveRopeConfig cfg;
  cfg.head_dim = 4;
  cfg.num_heads = 1;
  cfg.conv_width = 2;
  cfg.schedule = {pe::ScheduleKind::tan_half_angle, 4, 0.5};
  cfg.phase_gate = true;
  cfg.weight_norm = false;
  const std::int64_t B = 1, T = 5, Dm = 4;
  Rng rng(26);
  ad::Tape t;
  pe::SelectiveRopeVars p;
  p.w_omega = t.leaf(rng.gaussian_tensor({2, 4}, 1.0));
  p.conv_kernel = t.leaf(rng.gaussian_tensor({2, 2}, 1.0));
  p.temps = t.leaf(pe::make_schedule(cfg.schedule));
  p.gate_w = t.leaf(Tensor::zeros({Dm, 1}));
  p.gate_b = t.leaf(Tensor::full({1}, -1e9));  // gate saturates at 0
  ad::Var q = t.leaf(rng.gaussian_tensor({B, T, 4}, 1.0));
  ad::Var hidden = t.leaf(rng.gaussian_tensor({B, T, Dm}, 1.0));
  ad::Var track = pe::selective_angles(t, q, hidden, p, cfg);
  CHECK(max_abs(t.val(track)) <= 1e-12);
  auto [qr, kr] = pe::selective_rope_apply(t, q, q, track);
  CHECK(max_abs_diff(t.val(qr), t.val(q)) <= 1e-12);
}

TEST_CASE("selective angles and rotation are differentiable end to end") {
  pe::SelectiveRopeConfig cfg;
  cfg.head_dim = 4;
  cfg.num_heads = 2;
  cfg.conv_width = 3;
  cfg.schedule = {pe::ScheduleKind::tan_half_angle, 4, 0.5};
  cfg.phase_gate = true;
  cfg.bias = false;
  cfg.weight_norm = true;
  cfg.temps_learnable = true;
  const std::int64_t B = 2, T = 4, Dm = 8;
  Rng rng(27);

  Tensor q = rng.gaussian_tensor({B, T, 8}, 0.8);
  Tensor hidden = rng.gaussian_tensor({B, T, Dm}, 0.8);
  Tensor womega = rng.gaussian_tensor({4, 4}, 0.8);
  Tensor wscale = rng.gaussian_tensor({4, 1}, 0.5);
  Tensor kernel = rng.gaussian_tensor({3, 4}, 0.8);
  Tensor gate_w = rng.gaussian_tensor({Dm, 2}, 0.8);
  Tensor gate_b = rng.gaussian_tensor({2}, 0.3);
  Tensor temps = rng.uniform_tensor({4}, 0.1, 1.2);
  Tensor weight = rng.gaussian_tensor({B, T, 8}, 1.0);

  ad::GradCheckReport r = ad::grad_check(
      [&](ad::Tape& t, const std::vector<ad::Var>& v) {
        pe::SelectiveRopeVars p;
        p.w_omega = v[2];
        p.w_omega_scale = v[3];
        p.conv_kernel = v[4];
        p.gate_w = v[5];
        p.gate_b = v[6];
        p.temps = v[7];
        ad::Var track = pe::selective_angles(t, v[0], v[1], p, cfg);
        auto [qr, kr] = pe::selective_rope_apply(t, v[0], v[0], track);
        return ad::sum(t, ad::mul(t, qr, t.constant(weight)));
      },
      {q, hidden, womega, wscale, kernel, gate_w, gate_b, temps});
  INFO(r.worst_location);
  CHECK(r.max_rel_err <= 1e-4);
}
