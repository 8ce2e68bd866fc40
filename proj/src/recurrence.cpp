#include "rotla/recurrence.hpp"

#include <cmath>

namespace rotla::recurrence {

namespace {

struct StepGeometry {
  std::int64_t T, dk, dv;
  bool has_decay, has_rotation, is_delta;
};

StepGeometry validate(const Tensor& q, const Tensor& k, const Tensor& v, const TransitionSpec& spec) {
  check(q.rank() == 2 && k.rank() == 2 && v.rank() == 2, "scan expects [T x d] streams");
  check(q.same_shape(k), "q/k shapes differ: " + q.shape_str() + " vs " + k.shape_str());
  check(v.dim(0) == q.dim(0), "v misaligned with q: " + v.shape_str() + " vs " + q.shape_str());
  StepGeometry g{q.dim(0), q.dim(1), v.dim(1), false, false, false};
  switch (spec.kind) {
    case TransitionKind::identity:
      break;
    case TransitionKind::decay:
      g.has_decay = true;
      break;
    case TransitionKind::fixed_rotation:
    case TransitionKind::selective_rotation:
      g.has_rotation = true;
      break;
    case TransitionKind::decay_rotation:
      g.has_decay = g.has_rotation = true;
      break;
    case TransitionKind::delta_rule:
      g.is_delta = true;
      break;
  }
  if (g.has_decay) {
    check(spec.decay.rank() == 2 && spec.decay.dim(0) == g.T && spec.decay.dim(1) == g.dk,
          "decay stream " + spec.decay.shape_str() + " misaligned with timesteps");
    for (std::int64_t i = 0; i < spec.decay.size(); ++i)
      check(spec.decay.at(i) > 0.0 && spec.decay.at(i) <= 1.0, "decay entries must lie in (0, 1]");
  }
  if (g.has_rotation) {
    check(g.dk % 2 == 0, "rotation transitions need an even key dim");
    check(spec.angle_track.rank() == 2 && spec.angle_track.dim(0) == g.T && spec.angle_track.dim(1) == g.dk / 2,
          "angle track " + spec.angle_track.shape_str() + " misaligned with streams");
  }
  if (g.is_delta) {
    check(spec.beta.size() == g.T, "beta stream must have one entry per timestep");
    for (std::int64_t i = 0; i < g.T; ++i)
      check(spec.beta.at(i) > 0.0 && spec.beta.at(i) <= 1.0, "beta entries must lie in (0, 1]");
    for (std::int64_t t = 0; t < g.T; ++t) {
      double ss = 0.0;
      for (std::int64_t j = 0; j < g.dk; ++j) ss += k.at(t, j) * k.at(t, j);
      if (std::fabs(std::sqrt(ss) - 1.0) > 1e-6)
        contract_fail("delta-rule key at step " + std::to_string(t) + " is not unit norm");
    }
  }
  return g;
}

// Per-step angle of the transition: angle_track difference.
inline double step_angle(const TransitionSpec& spec, std::int64_t t, std::int64_t n) {
  const double cur = spec.angle_track.at(t, n);
  return t == 0 ? cur : cur - spec.angle_track.at(t - 1, n);
}

// Column action u <- A_t u (used by the quadratic paths walking toward q).
void apply_transition_col(std::vector<double>& u, const Tensor& k, const TransitionSpec& spec,
                          const StepGeometry& g, std::int64_t t) {
  if (g.is_delta) {
    const double b = spec.beta.at(t);
    double kq = 0.0;
    for (std::int64_t j = 0; j < g.dk; ++j) kq += k.at(t, j) * u[static_cast<std::size_t>(j)];
    for (std::int64_t j = 0; j < g.dk; ++j) u[static_cast<std::size_t>(j)] -= b * kq * k.at(t, j);
    return;
  }
  if (g.has_rotation) {
    for (std::int64_t n = 0; n < g.dk / 2; ++n) {
      const double a = step_angle(spec, t, n);
      const double c = std::cos(a), s = std::sin(a);
      const double x = u[static_cast<std::size_t>(2 * n)];
      const double y = u[static_cast<std::size_t>(2 * n + 1)];
      u[static_cast<std::size_t>(2 * n)] = x * c - y * s;
      u[static_cast<std::size_t>(2 * n + 1)] = x * s + y * c;
    }
  }
  if (g.has_decay) {
    for (std::int64_t j = 0; j < g.dk; ++j) u[static_cast<std::size_t>(j)] *= spec.decay.at(t, j);
  }
}

// State action S <- S A_t over the key dimension of S [dv x dk].
void apply_transition_state(std::vector<double>& S, const Tensor& k, const TransitionSpec& spec,
                            const StepGeometry& g, std::int64_t t) {
  if (g.is_delta) {
    const double b = spec.beta.at(t);
    for (std::int64_t i = 0; i < g.dv; ++i) {
      double* row = S.data() + i * g.dk;
      double sk = 0.0;
      for (std::int64_t j = 0; j < g.dk; ++j) sk += row[j] * k.at(t, j);
      for (std::int64_t j = 0; j < g.dk; ++j) row[j] -= b * sk * k.at(t, j);
    }
    return;
  }
  if (g.has_rotation) {
    for (std::int64_t n = 0; n < g.dk / 2; ++n) {
      const double a = step_angle(spec, t, n);
      const double c = std::cos(a), s = std::sin(a);
      for (std::int64_t i = 0; i < g.dv; ++i) {
        double* row = S.data() + i * g.dk;
        const double x = row[2 * n], y = row[2 * n + 1];
        // row vector times the rotation block
        row[2 * n] = x * c + y * s;
        row[2 * n + 1] = -x * s + y * c;
      }
    }
  }
  if (g.has_decay) {
    for (std::int64_t i = 0; i < g.dv; ++i) {
      double* row = S.data() + i * g.dk;
      for (std::int64_t j = 0; j < g.dk; ++j) row[j] *= spec.decay.at(t, j);
    }
  }
}

// Row action w <- w A_t (normalizer state and attention_matrix walks).
void apply_transition_row(std::vector<double>& w, const Tensor& k, const TransitionSpec& spec,
                          const StepGeometry& g, std::int64_t t) {
  if (g.is_delta) {
    const double b = spec.beta.at(t);
    double wk = 0.0;
    for (std::int64_t j = 0; j < g.dk; ++j) wk += w[static_cast<std::size_t>(j)] * k.at(t, j);
    for (std::int64_t j = 0; j < g.dk; ++j) w[static_cast<std::size_t>(j)] -= b * wk * k.at(t, j);
    return;
  }
  if (g.has_rotation) {
    for (std::int64_t n = 0; n < g.dk / 2; ++n) {
      const double a = step_angle(spec, t, n);
      const double c = std::cos(a), s = std::sin(a);
      const double x = w[static_cast<std::size_t>(2 * n)];
      const double y = w[static_cast<std::size_t>(2 * n + 1)];
      w[static_cast<std::size_t>(2 * n)] = x * c + y * s;
      w[static_cast<std::size_t>(2 * n + 1)] = -x * s + y * c;
    }
  }
  if (g.has_decay) {
    for (std::int64_t j = 0; j < g.dk; ++j) w[static_cast<std::size_t>(j)] *= spec.decay.at(t, j);
  }
}

void write_and_read(std::vector<double>& S, std::vector<double>& z, const Tensor& q, const Tensor& k,
                    const Tensor& v, const TransitionSpec& spec, const StepGeometry& g, bool normalize,
                    std::int64_t t, Tensor& outputs) {
  const double beta_write = g.is_delta ? spec.beta.at(t) : 1.0;
  for (std::int64_t i = 0; i < g.dv; ++i) {
    double* row = S.data() + i * g.dk;
    const double vi = beta_write * v.at(t, i);
    double o = 0.0;
    for (std::int64_t j = 0; j < g.dk; ++j) {
      row[j] += vi * k.at(t, j);
      o += row[j] * q.at(t, j);
    }
    outputs.at(t, i) = o;
  }
  if (normalize) {
    double denom = 0.0;
    for (std::int64_t j = 0; j < g.dk; ++j) {
      z[static_cast<std::size_t>(j)] += beta_write * k.at(t, j);
      denom += z[static_cast<std::size_t>(j)] * q.at(t, j);
    }
    for (std::int64_t i = 0; i < g.dv; ++i) outputs.at(t, i) /= denom;
  }
  for (std::int64_t i = 0; i < g.dv; ++i) {
    if (!std::isfinite(outputs.at(t, i)))
      contract_fail("non-finite state detected at timestep " + std::to_string(t));
  }
}

}  // namespace

TransitionSpec TransitionSpec::identity_spec() { return TransitionSpec{}; }

TransitionSpec TransitionSpec::decay_spec(Tensor decay) {
  TransitionSpec s;
  s.kind = TransitionKind::decay;
  s.decay = std::move(decay);
  return s;
}

TransitionSpec TransitionSpec::rotation_spec(Tensor angle_track, bool fixed) {
  TransitionSpec s;
  s.kind = fixed ? TransitionKind::fixed_rotation : TransitionKind::selective_rotation;
  s.angle_track = std::move(angle_track);
  return s;
}

TransitionSpec TransitionSpec::delta_spec(Tensor beta) {
  TransitionSpec s;
  s.kind = TransitionKind::delta_rule;
  s.beta = std::move(beta);
  return s;
}

TransitionSpec compose_with_posenc(const Tensor& decay, const Tensor& angle_track) {
  check(decay.rank() == 2 && angle_track.rank() == 2, "compose_with_posenc expects [T x d] streams");
  check(decay.dim(0) == angle_track.dim(0), "decay and angle track must cover the same timesteps");
  check(decay.dim(1) == 2 * angle_track.dim(1), "decay channels must pair with angle channels");
  for (std::int64_t t = 0; t < decay.dim(0); ++t)
    for (std::int64_t n = 0; n < angle_track.dim(1); ++n)
      if (decay.at(t, 2 * n) != decay.at(t, 2 * n + 1))
        contract_fail("rotation requires isotropic decay within a pair (timestep " + std::to_string(t) +
                      ", pair " + std::to_string(n) + ")");
  TransitionSpec s;
  s.kind = TransitionKind::decay_rotation;
  s.decay = decay;
  s.angle_track = angle_track;
  return s;
}

ScanResult scan(const Tensor& q, const Tensor& k, const Tensor& v, const TransitionSpec& spec,
                bool normalize, ScanMode mode, std::int64_t chunk) {
  const StepGeometry g = validate(q, k, v, spec);
  ScanResult res;
  res.outputs = Tensor({g.T, g.dv});
  std::vector<double> S(static_cast<std::size_t>(g.dv * g.dk), 0.0);
  std::vector<double> z(static_cast<std::size_t>(g.dk), 0.0);

  if (mode == ScanMode::sequential) {
    for (std::int64_t t = 0; t < g.T; ++t) {
      apply_transition_state(S, k, spec, g, t);
      if (normalize) apply_transition_row(z, k, spec, g, t);
      write_and_read(S, z, q, k, v, spec, g, normalize, t, res.outputs);
    }
  } else {
    check(chunk >= 1, "chunk size must be >= 1");
    for (std::int64_t a = 0; a < g.T; a += chunk) {
      const std::int64_t b = std::min(g.T, a + chunk);
      // outputs for the chunk from the boundary state plus intra scores
      for (std::int64_t t = a; t < b; ++t) {
        std::vector<double> u(static_cast<std::size_t>(g.dk));
        for (std::int64_t j = 0; j < g.dk; ++j) u[static_cast<std::size_t>(j)] = q.at(t, j);
        std::vector<double> acc(static_cast<std::size_t>(g.dv), 0.0);
        double norm_acc = 0.0;
        for (std::int64_t tau = t; tau >= a; --tau) {
          const double bw = g.is_delta ? spec.beta.at(tau) : 1.0;
          double score = 0.0;
          for (std::int64_t j = 0; j < g.dk; ++j) score += k.at(tau, j) * u[static_cast<std::size_t>(j)];
          score *= bw;
          for (std::int64_t i = 0; i < g.dv; ++i) acc[static_cast<std::size_t>(i)] += score * v.at(tau, i);
          norm_acc += score;
          apply_transition_col(u, k, spec, g, tau);
        }
        // u now carries A_a ... A_t q_t; add the pre-chunk state read-out
        for (std::int64_t i = 0; i < g.dv; ++i) {
          double o = acc[static_cast<std::size_t>(i)];
          const double* row = S.data() + i * g.dk;
          for (std::int64_t j = 0; j < g.dk; ++j) o += row[j] * u[static_cast<std::size_t>(j)];
          res.outputs.at(t, i) = o;
        }
        if (normalize) {
          double denom = norm_acc;
          for (std::int64_t j = 0; j < g.dk; ++j) denom += z[static_cast<std::size_t>(j)] * u[static_cast<std::size_t>(j)];
          for (std::int64_t i = 0; i < g.dv; ++i) res.outputs.at(t, i) /= denom;
        }
        for (std::int64_t i = 0; i < g.dv; ++i)
          if (!std::isfinite(res.outputs.at(t, i)))
            contract_fail("non-finite state detected at timestep " + std::to_string(t));
      }
      // advance the boundary state through the chunk
      for (std::int64_t t = a; t < b; ++t) {
        apply_transition_state(S, k, spec, g, t);
        if (normalize) apply_transition_row(z, k, spec, g, t);
        const double bw = g.is_delta ? spec.beta.at(t) : 1.0;
        for (std::int64_t i = 0; i < g.dv; ++i) {
          double* row = S.data() + i * g.dk;
          const double vi = bw * v.at(t, i);
          for (std::int64_t j = 0; j < g.dk; ++j) row[j] += vi * k.at(t, j);
        }
        if (normalize)
          for (std::int64_t j = 0; j < g.dk; ++j) z[static_cast<std::size_t>(j)] += bw * k.at(t, j);
      }
    }
  }

  res.final_state = Tensor({g.dv, g.dk}, std::move(S));
  res.final_norm = Tensor({g.dk}, std::move(z));
  return res;
}

Tensor attention_matrix(const Tensor& q, const Tensor& k, const TransitionSpec& spec) {
  const Tensor v_dummy({q.dim(0), 1});
  const StepGeometry g = validate(q, k, v_dummy, spec);
  Tensor att({g.T, g.T});
#pragma omp parallel for schedule(static)
  for (std::int64_t tau = 0; tau < g.T; ++tau) {
    std::vector<double> w(static_cast<std::size_t>(g.dk));
    const double bw = g.is_delta ? spec.beta.at(tau) : 1.0;
    for (std::int64_t j = 0; j < g.dk; ++j) w[static_cast<std::size_t>(j)] = bw * k.at(tau, j);
    for (std::int64_t t = tau; t < g.T; ++t) {
      if (t > tau) apply_transition_row(w, k, spec, g, t);
      double s = 0.0;
      for (std::int64_t j = 0; j < g.dk; ++j) s += w[static_cast<std::size_t>(j)] * q.at(t, j);
      att.at(t, tau) = s;
    }
  }
  return att;
}

Tensor scan_via_attention(const Tensor& q, const Tensor& k, const Tensor& v, const TransitionSpec& spec) {
  const StepGeometry g = validate(q, k, v, spec);
  Tensor out({g.T, g.dv});
#pragma omp parallel for schedule(static)
  for (std::int64_t t = 0; t < g.T; ++t) {
    std::vector<double> u(static_cast<std::size_t>(g.dk));
    for (std::int64_t j = 0; j < g.dk; ++j) u[static_cast<std::size_t>(j)] = q.at(t, j);
    for (std::int64_t tau = t; tau >= 0; --tau) {
      const double bw = g.is_delta ? spec.beta.at(tau) : 1.0;
      double score = 0.0;
      for (std::int64_t j = 0; j < g.dk; ++j) score += k.at(tau, j) * u[static_cast<std::size_t>(j)];
      score *= bw;
      for (std::int64_t i = 0; i < g.dv; ++i) out.at(t, i) += score * v.at(tau, i);
      if (tau > 0) apply_transition_col(u, k, spec, g, tau);
    }
  }
  return out;
}

ScanResult delta_scan(const Tensor& q, const Tensor& k, const Tensor& v, const Tensor& beta) {
  return scan(q, k, v, TransitionSpec::delta_spec(beta));
}

}  // namespace rotla::recurrence
