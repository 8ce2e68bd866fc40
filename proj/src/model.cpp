#include "rotla/model.hpp"

#include <cmath>

namespace rotla::model {

bool ModelConfig::normalizes_qk() const {
  if (qk_norm == QkNorm::on) return true;
  if (qk_norm == QkNorm::off) return false;
  return posenc == PosencKind::selective_rope || mixer == MixerKind::softmax;
}

void ModelConfig::validate() const {
  check(vocab_size >= 2, "vocab_size must be >= 2");
  check(num_heads > 0 && model_dim % num_heads == 0, "model_dim must divide into num_heads");
  check(num_layers >= 1 && num_layers <= 2, "num_layers in scope is 1 or 2");
  if (posenc != PosencKind::nope) check(head_dim() % 2 == 0, "rotary encodings need an even head_dim");
  check(mlp_mult >= 1, "mlp_mult must be >= 1");
  check(gate_c > 0.0 && gate_tau > 0.0, "gate parameters must be positive");
}

Tensor& Parameters::add(std::string name, Tensor value) {
  check(!has(name), "duplicate parameter name " + name);
  items_.emplace_back(std::move(name), std::move(value));
  return items_.back().second;
}

Tensor& Parameters::get(const std::string& name) {
  for (auto& [n, t] : items_)
    if (n == name) return t;
  contract_fail("unknown parameter " + name);
}

const Tensor& Parameters::get(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return t;
  contract_fail("unknown parameter " + name);
}

bool Parameters::has(const std::string& name) const {
  for (const auto& [n, t] : items_)
    if (n == name) return true;
  return false;
}

std::int64_t Parameters::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

namespace {

Tensor scaled_normal(Rng& rng, std::vector<std::int64_t> shape, std::int64_t fan_in) {
  return rng.gaussian_tensor(std::move(shape), 1.0 / std::sqrt(static_cast<double>(fan_in)));
}

std::string layer_prefix(std::int64_t l) { return "layer" + std::to_string(l) + "."; }

}  // namespace

Model::Model(ModelConfig cfg, Rng init_rng) : cfg_(std::move(cfg)) {
  cfg_.srope.head_dim = cfg_.head_dim();
  cfg_.srope.num_heads = cfg_.num_heads;
  cfg_.validate();
  if (cfg_.posenc != PosencKind::nope) cfg_.srope.validate();
  Rng rng = init_rng;
  const std::int64_t D = cfg_.model_dim;
  const std::int64_t H = cfg_.num_heads;
  const std::int64_t hd = cfg_.head_dim();

  params_.add("embedding", scaled_normal(rng, {cfg_.vocab_size, D}, D));
  if (cfg_.short_conv_width > 0)
    params_.add("token_conv", scaled_normal(rng, {cfg_.short_conv_width, D}, cfg_.short_conv_width));

  for (std::int64_t l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    params_.add(p + "attn_norm_gain", Tensor::full({D}, 1.0));
    params_.add(p + "w_q", scaled_normal(rng, {D, D}, D));
    params_.add(p + "w_k", scaled_normal(rng, {D, D}, D));
    params_.add(p + "w_v", scaled_normal(rng, {D, D}, D));
    params_.add(p + "w_o", scaled_normal(rng, {D, D}, D));
    if (cfg_.mixer == MixerKind::gla) {
      // pair-constant gates compose with rotations; per-channel otherwise
      const std::int64_t gate_cols = cfg_.posenc == PosencKind::nope ? H * hd : H * hd / 2;
      params_.add(p + "w_gate", scaled_normal(rng, {D, gate_cols}, D));
      params_.add(p + "b_gate", Tensor::zeros({gate_cols}));
    }
    if (cfg_.mixer == MixerKind::delta) {
      params_.add(p + "w_beta", scaled_normal(rng, {D, H}, D));
      params_.add(p + "b_beta", Tensor::zeros({H}));
    }
    if (cfg_.posenc == PosencKind::selective_rope) {
      params_.add(p + "rope_w_omega", scaled_normal(rng, {H * hd / 2, hd}, hd));
      if (cfg_.srope.weight_norm) params_.add(p + "rope_w_scale", Tensor::full({H * hd / 2, 1}, 1.0));
      Tensor kernel = cfg_.srope.conv_diff_init ? Tensor::zeros({cfg_.srope.conv_width, H * hd / 2})
                                                : scaled_normal(rng, {cfg_.srope.conv_width, H * hd / 2},
                                                                cfg_.srope.conv_width);
      if (cfg_.srope.conv_diff_init) {
        // differencing stencil [-1, 1] on the last two taps
        for (std::int64_t c = 0; c < H * hd / 2; ++c) {
          kernel.at(cfg_.srope.conv_width - 1, c) = 1.0;
          if (cfg_.srope.conv_width >= 2) kernel.at(cfg_.srope.conv_width - 2, c) = -1.0;
        }
      }
      params_.add(p + "rope_conv", std::move(kernel));
      if (cfg_.srope.phase_gate) {
        params_.add(p + "rope_gate_w", scaled_normal(rng, {D, H}, D));
        params_.add(p + "rope_gate_b", Tensor::zeros({H}));
      }
      if (cfg_.srope.bias && cfg_.mixer != MixerKind::softmax) params_.add(p + "rope_bias", Tensor::zeros({H}));
      Tensor sched = posenc::make_schedule(cfg_.srope.schedule.kind, hd, cfg_.srope.schedule.eps);
      Tensor temps({H * hd / 2});
      for (std::int64_t h = 0; h < H; ++h)
        for (std::int64_t n = 0; n < hd / 2; ++n) temps.at(h * hd / 2 + n) = sched.at(n);
      params_.add(p + "rope_temps", std::move(temps));
    }
    if (cfg_.mixer == MixerKind::softmax && cfg_.posenc == PosencKind::selective_rope && cfg_.srope.bias)
      params_.add(p + "score_bias", Tensor::zeros({H}));
    if (cfg_.mlp) {
      params_.add(p + "mlp_norm_gain", Tensor::full({D}, 1.0));
      params_.add(p + "mlp_w1", scaled_normal(rng, {D, cfg_.mlp_mult * D}, D));
      params_.add(p + "mlp_w2", scaled_normal(rng, {cfg_.mlp_mult * D, D}, cfg_.mlp_mult * D));
    }
  }
  params_.add("final_norm_gain", Tensor::full({D}, 1.0));
  params_.add("readout", scaled_normal(rng, {D, cfg_.vocab_size}, D));
}

bool Model::is_trainable(const std::string& name) const {
  if (!cfg_.srope.temps_learnable && name.size() >= 10 && name.substr(name.size() - 10) == "rope_temps") return false;
  return true;
}

ForwardResult Model::forward(ad::Tape& t, const std::vector<std::int64_t>& tokens, std::int64_t batch,
                             std::int64_t seq_len) const {
  check(static_cast<std::int64_t>(tokens.size()) == batch * seq_len, "token batch size mismatch");
  const std::int64_t D = cfg_.model_dim;
  const std::int64_t H = cfg_.num_heads;
  const std::int64_t hd = cfg_.head_dim();

  ForwardResult out;
  std::map<std::string, ad::Var> vars;
  for (const auto& [name, value] : params_.items()) vars.emplace(name, t.leaf(value, is_trainable(name)));
  out.param_vars = vars;

  ad::Var h = ad::reshape(t, ad::gather_rows(t, vars.at("embedding"), tokens), {batch, seq_len, D});
  if (cfg_.short_conv_width > 0) h = ad::causal_conv1d(t, h, vars.at("token_conv"));

  const bool norm_qk = cfg_.normalizes_qk();

  for (std::int64_t l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    ad::Var hn = ad::mul(t, ad::rmsnorm_rows(t, h), vars.at(p + "attn_norm_gain"));
    ad::Var q = ad::matmul(t, hn, vars.at(p + "w_q"));
    ad::Var k = ad::matmul(t, hn, vars.at(p + "w_k"));
    ad::Var v = ad::matmul(t, hn, vars.at(p + "w_v"));
    if (norm_qk) {
      q = ad::l2norm_rows(t, q, H);
      k = ad::l2norm_rows(t, k, H);
    }
    if (cfg_.mixer == MixerKind::delta) k = ad::l2norm_rows(t, k, H);  // unit keys are a scan contract

    // positional encoding on q/k
    if (cfg_.posenc == PosencKind::rope) {
      Tensor sched = posenc::make_schedule(posenc::ScheduleKind::rope_exponential, hd, cfg_.rope_eps);
      ad::Var track = posenc::fixed_track_const(t, batch, seq_len, H, sched);
      auto [qr, kr] = posenc::selective_rope_apply(t, q, k, track);
      q = qr;
      k = kr;
    } else if (cfg_.posenc == PosencKind::selective_rope) {
      posenc::SelectiveRopeVars pv;
      pv.w_omega = vars.at(p + "rope_w_omega");
      if (cfg_.srope.weight_norm) pv.w_omega_scale = vars.at(p + "rope_w_scale");
      pv.conv_kernel = vars.at(p + "rope_conv");
      if (cfg_.srope.phase_gate) {
        pv.gate_w = vars.at(p + "rope_gate_w");
        pv.gate_b = vars.at(p + "rope_gate_b");
      }
      pv.temps = vars.at(p + "rope_temps");
      ad::Var track = posenc::selective_angles(t, q, hn, pv, cfg_.srope);
      auto [qr, kr] = posenc::selective_rope_apply(t, q, k, track);
      q = qr;
      k = kr;
    }

    ad::Var mixed;
    if (cfg_.mixer == MixerKind::softmax) {
      ad::Var bias{};
      if (cfg_.posenc == PosencKind::selective_rope && cfg_.srope.bias) bias = vars.at(p + "score_bias");
      mixed = ad::softmax_attention(t, q, k, v, bias, H, 1.0 / std::sqrt(static_cast<double>(hd)));
    } else if (cfg_.mixer == MixerKind::delta) {
      ad::Var beta = ad::sigmoid(t, ad::add(t, ad::matmul(t, hn, vars.at(p + "w_beta")), vars.at(p + "b_beta")));
      mixed = ad::delta_scan(t, q, k, v, beta, H);
    } else {
      ad::Var alpha;
      if (cfg_.mixer == MixerKind::gla) {
        ad::Var araw = ad::add(t, ad::matmul(t, hn, vars.at(p + "w_gate")), vars.at(p + "b_gate"));
        // alpha = sigmoid(a / c)^{1/tau} = exp(-softplus(-a / c) / tau)
        ad::Var alog = ad::scale(t, ad::softplus(t, ad::scale(t, araw, -1.0 / cfg_.gate_c)), -1.0 / cfg_.gate_tau);
        alpha = ad::exp(t, alog);
        if (cfg_.posenc != PosencKind::nope) alpha = ad::repeat_cols(t, alpha, 2);
      } else {
        alpha = t.constant(Tensor::full({batch, seq_len, H * hd}, 1.0));
      }
      mixed = ad::gla_scan(t, q, k, v, alpha, H);
    }

    if (cfg_.posenc == PosencKind::selective_rope && cfg_.srope.bias && cfg_.mixer != MixerKind::softmax) {
      // position-independent score bias: adding b to every causal score
      // contributes b * running sum of values
      ad::Var vsum = ad::cumsum(t, v, 1);
      ad::Var brow = ad::repeat_cols(t, ad::reshape(t, vars.at(p + "rope_bias"), {1, H}), hd);
      mixed = ad::add(t, mixed, ad::mul(t, vsum, brow));
    }

    if (cfg_.head_norm && cfg_.mixer != MixerKind::softmax) mixed = ad::rmsnorm_rows(t, mixed, H);
    h = ad::add(t, h, ad::matmul(t, mixed, vars.at(p + "w_o")));

    if (cfg_.mlp) {
      ad::Var hn2 = ad::mul(t, ad::rmsnorm_rows(t, h), vars.at(p + "mlp_norm_gain"));
      ad::Var u = ad::matmul(t, hn2, vars.at(p + "mlp_w1"));
      ad::Var silu = ad::mul(t, u, ad::sigmoid(t, u));
      h = ad::add(t, h, ad::matmul(t, silu, vars.at(p + "mlp_w2")));
    }

    if (!t.val(h).all_finite())
      contract_fail("non-finite activations after layer " + std::to_string(l));
  }

  ad::Var hf = ad::mul(t, ad::rmsnorm_rows(t, h), vars.at("final_norm_gain"));
  ad::Var logits = ad::matmul(t, hf, vars.at("readout"));
  out.logits = ad::reshape(t, logits, {batch * seq_len, cfg_.vocab_size});
  return out;
}

std::vector<std::int64_t> Model::greedy_predict(const std::vector<std::int64_t>& tokens, std::int64_t batch,
                                                std::int64_t seq_len) const {
  ad::Tape t;
  ForwardResult f = forward(t, tokens, batch, seq_len);
  const Tensor& logits = t.val(f.logits);
  std::vector<std::int64_t> pred(static_cast<std::size_t>(batch * seq_len));
  for (std::int64_t i = 0; i < batch * seq_len; ++i) {
    std::int64_t best = 0;
    for (std::int64_t c = 1; c < cfg_.vocab_size; ++c)
      if (logits.at(i, c) > logits.at(i, best)) best = c;
    pred[static_cast<std::size_t>(i)] = best;
  }
  return pred;
}

ad::GradCheckReport model_gradient_check(const Model& m, const std::vector<std::int64_t>& tokens,
                                         const std::vector<std::int64_t>& targets,
                                         const std::vector<std::uint8_t>& mask, std::int64_t batch,
                                         std::int64_t seq_len, double step) {
  std::map<std::string, Tensor> analytic;
  {
    ad::Tape tape;
    ForwardResult f = m.forward(tape, tokens, batch, seq_len);
    ad::Var loss = ad::cross_entropy(tape, f.logits, targets, mask);
    tape.backward(loss);
    for (const auto& [name, var] : f.param_vars)
      if (m.is_trainable(name)) analytic.emplace(name, tape.grad(var));
  }
  Model work = m;
  auto eval_loss = [&]() {
    ad::Tape tape;
    ForwardResult f = work.forward(tape, tokens, batch, seq_len);
    return tape.val(ad::cross_entropy(tape, f.logits, targets, mask)).at(0);
  };
  ad::GradCheckReport report;
  for (auto& [name, value] : work.params().items()) {
    if (!m.is_trainable(name)) continue;
    const Tensor& an = analytic.at(name);
    for (std::int64_t j = 0; j < value.size(); ++j) {
      const double orig = value.at(j);
      value.at(j) = orig + step;
      const double lp = eval_loss();
      value.at(j) = orig - step;
      const double lm = eval_loss();
      value.at(j) = orig;
      const double fd = (lp - lm) / (2.0 * step);
      const double rel = std::fabs(an.at(j) - fd) / std::max({std::fabs(an.at(j)), std::fabs(fd), 1e-3});
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_location = name + "[" + std::to_string(j) + "] analytic " + std::to_string(an.at(j)) +
                                " fd " + std::to_string(fd);
      }
    }
  }
  return report;
}

}  // namespace rotla::model
