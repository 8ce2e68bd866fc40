#include "rotla/posenc.hpp"

#include <cmath>
#include <numbers>

namespace rotla::debug {
double angle_corruption = 0.0;
}  // namespace rotla::debug

namespace rotla::posenc {

Tensor make_schedule(ScheduleKind kind, std::int64_t dim, double eps) {
  check(dim > 0 && dim % 2 == 0, "schedule dim must be even and positive, got " + std::to_string(dim));
  check(eps > 0.0 && eps < 1.0, "schedule eps must lie in (0,1), got " + std::to_string(eps));
  const std::int64_t half = dim / 2;
  Tensor temps({half});
  if (kind == ScheduleKind::rope_exponential) {
    for (std::int64_t n = 0; n < half; ++n)
      temps.at(n) = std::pow(eps, static_cast<double>(n) / static_cast<double>(half));
  } else {
    for (std::int64_t n = 0; n < half; ++n) {
      const double phi = half == 1 ? 0.0
                                   : (1.0 - eps) * std::numbers::pi * static_cast<double>(n) /
                                         static_cast<double>(half - 1);
      temps.at(n) = std::tan(phi / 2.0);
    }
  }
  return temps;
}

Tensor make_schedule(const TemperatureSchedule& s) { return make_schedule(s.kind, s.dim, s.eps); }

Tensor rotate_pairs(const Tensor& x, const Tensor& angles) {
  check(x.rank() == 2 && angles.rank() == 2, "rotate_pairs expects rank-2 inputs");
  const std::int64_t T = x.dim(0), d = x.dim(1);
  check(d % 2 == 0, "rotate_pairs needs an even last dim, got " + x.shape_str());
  check(angles.dim(0) == T && angles.dim(1) == d / 2,
        "angles " + angles.shape_str() + " do not match input " + x.shape_str());
  Tensor out({T, d});
  for (std::int64_t t = 0; t < T; ++t) {
    for (std::int64_t n = 0; n < d / 2; ++n) {
      const double c = std::cos(angles.at(t, n));
      const double s = std::sin(angles.at(t, n));
      const double a = x.at(t, 2 * n);
      const double b = x.at(t, 2 * n + 1);
      out.at(t, 2 * n) = a * c - b * s;
      out.at(t, 2 * n + 1) = a * s + b * c;
    }
  }
  return out;
}

Tensor fixed_angle_track(const std::vector<std::int64_t>& positions, const Tensor& temps) {
  const std::int64_t T = static_cast<std::int64_t>(positions.size());
  const std::int64_t half = temps.size();
  Tensor track({T, half});
  for (std::int64_t t = 0; t < T; ++t)
    for (std::int64_t n = 0; n < half; ++n)
      track.at(t, n) = temps.at(n) * static_cast<double>(positions[static_cast<std::size_t>(t)]);
  return track;
}

std::pair<Tensor, Tensor> rope_apply(const Tensor& q, const Tensor& k,
                                     const std::vector<std::int64_t>& positions, const Tensor& temps) {
  check(q.same_shape(k), "rope_apply q/k shapes differ: " + q.shape_str() + " vs " + k.shape_str());
  check(q.dim(1) % 2 == 0, "rope_apply needs an even last dim, got " + q.shape_str());
  const Tensor track = fixed_angle_track(positions, temps);
  return {rotate_pairs(q, track), rotate_pairs(k, track)};
}

std::pair<Tensor, Tensor> selective_rope_apply(const Tensor& q, const Tensor& k, const Tensor& angle_track) {
  check(angle_track.dim(0) == q.dim(0),
        "angle track length " + angle_track.shape_str() + " does not match sequence " + q.shape_str());
  // The corruption hook moves only the query-side track: a shift applied
  // to both sides would be gauge-invariant and leave every score intact.
  Tensor q_track = angle_track;
  if (debug::angle_corruption != 0.0)
    for (std::int64_t i = 0; i < q_track.size(); ++i) q_track.at(i) += debug::angle_corruption;
  return {rotate_pairs(q, q_track), rotate_pairs(k, angle_track)};
}

Tensor positional_bias(const Tensor& scores, double bias) {
  check(scores.rank() == 2 && scores.dim(0) == scores.dim(1), "positional_bias expects square scores");
  Tensor out = scores;
  for (std::int64_t t = 0; t < out.dim(0); ++t)
    for (std::int64_t tau = 0; tau <= t; ++tau) out.at(t, tau) += bias;
  return out;
}

std::pair<Tensor, Tensor> householder_rotation_check(double theta) {
  const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
  // H_u = I - 2 u u^T with u = (cos t/2, sin t/2); H_e = I - 2 e1 e1^T
  Tensor hu({2, 2}, {1.0 - 2.0 * c * c, -2.0 * c * s, -2.0 * c * s, 1.0 - 2.0 * s * s});
  Tensor he({2, 2}, {-1.0, 0.0, 0.0, 1.0});
  Tensor prod({2, 2});
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double acc = 0.0;
      for (int p = 0; p < 2; ++p) acc += hu.at(i, p) * he.at(p, j);
      prod.at(i, j) = acc;
    }
  Tensor rot({2, 2}, {std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta)});
  return {prod, rot};
}

void SelectiveRopeConfig::validate() const {
  check(head_dim > 0 && head_dim % 2 == 0, "head_dim must be even and positive (pairs rotate jointly)");
  check(num_heads > 0, "num_heads must be positive");
  check(conv_width >= 1, "conv_width must be >= 1");
}

ad::Var selective_angles(ad::Tape& t, ad::Var q_stream, ad::Var hidden, const SelectiveRopeVars& p,
                         const SelectiveRopeConfig& cfg) {
  cfg.validate();
  const std::int64_t H = cfg.num_heads;
  ad::Var w_eff = p.w_omega;
  if (cfg.weight_norm) {
    // one scale per output row of the projection
    w_eff = ad::mul(t, ad::l2norm_rows(t, p.w_omega), p.w_omega_scale);
  }
  ad::Var omega = ad::headwise_linear(t, q_stream, w_eff, H);
  omega = ad::causal_conv1d(t, omega, p.conv_kernel);
  if (cfg.phase_gate) {
    ad::Var gate_in = ad::l2norm_rows(t, hidden);
    ad::Var gate = ad::sigmoid(t, ad::add(t, ad::matmul(t, gate_in, p.gate_w), p.gate_b));
    omega = ad::mul(t, omega, ad::repeat_cols(t, gate, cfg.head_dim / 2));
  }
  omega = ad::mul(t, omega, p.temps);
  ad::Var track = ad::cumsum(t, omega, 1);
  return ad::wrap_angle(t, track);
}

std::pair<ad::Var, ad::Var> selective_rope_apply(ad::Tape& t, ad::Var q, ad::Var k, ad::Var angle_track) {
  ad::Var c = ad::cos(t, angle_track);
  ad::Var s = ad::sin(t, angle_track);
  auto rot = [&](ad::Var x) {
    ad::Var e = ad::take_even_pairs(t, x);
    ad::Var o = ad::take_odd_pairs(t, x);
    ad::Var re = ad::sub(t, ad::mul(t, e, c), ad::mul(t, o, s));
    ad::Var ro = ad::add(t, ad::mul(t, e, s), ad::mul(t, o, c));
    return ad::interleave_pairs(t, re, ro);
  };
  return {rot(q), rot(k)};
}

ad::Var fixed_track_const(ad::Tape& t, std::int64_t batch, std::int64_t seq_len, std::int64_t heads,
                          const Tensor& temps) {
  const std::int64_t half = temps.size();
  Tensor track({batch, seq_len, heads * half});
  for (std::int64_t b = 0; b < batch; ++b)
    for (std::int64_t tt = 0; tt < seq_len; ++tt)
      for (std::int64_t h = 0; h < heads; ++h)
        for (std::int64_t n = 0; n < half; ++n)
          track.at(b, tt, h * half + n) = temps.at(n) * static_cast<double>(tt);
  return t.constant(std::move(track));
}

}  // namespace rotla::posenc
