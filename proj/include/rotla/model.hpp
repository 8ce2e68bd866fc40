#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rotla/ops.hpp"
#include "rotla/gradcheck.hpp"
#include "rotla/posenc.hpp"
#include "rotla/rng.hpp"

namespace rotla::model {

enum class MixerKind { linear_attn, gla, delta, softmax };
enum class PosencKind { nope, rope, selective_rope };
enum class QkNorm { automatic, on, off };

struct ModelConfig {
  std::int64_t vocab_size = 2;
  std::int64_t model_dim = 64;
  std::int64_t num_heads = 2;
  std::int64_t num_layers = 1;
  MixerKind mixer = MixerKind::gla;
  PosencKind posenc = PosencKind::selective_rope;
  posenc::SelectiveRopeConfig srope;  // head_dim/num_heads derived from model dims
  bool mlp = true;
  std::int64_t mlp_mult = 2;
  std::int64_t short_conv_width = 0;  // 0 disables token pre-mixing convs
  bool head_norm = true;
  QkNorm qk_norm = QkNorm::automatic;
  // GLA forget gate alpha = sigmoid(W x / gate_c)^{1/gate_tau}
  double gate_c = 1.0;
  double gate_tau = 1.0;
  double rope_eps = 1e-4;

  std::int64_t head_dim() const { return model_dim / num_heads; }
  /// True when q/k rows are L2-normalized per head before the encoding.
  bool normalizes_qk() const;
  void validate() const;
};

/// Named parameter store with deterministic iteration order.
class Parameters {
 public:
  Tensor& add(std::string name, Tensor value);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const;
  std::vector<std::pair<std::string, Tensor>>& items() { return items_; }
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
  std::int64_t scalar_count() const;

 private:
  std::vector<std::pair<std::string, Tensor>> items_;
};

struct ForwardResult {
  ad::Var logits;  // [B*T x vocab]
  std::map<std::string, ad::Var> param_vars;
};

class Model {
 public:
  Model(ModelConfig cfg, Rng init_rng);

  const ModelConfig& config() const { return cfg_; }
  Parameters& params() { return params_; }
  const Parameters& params() const { return params_; }

  /// Run the stack over a token batch (row-major [B x T] ids). Every
  /// parameter is registered on the tape exactly once per call.
  /// errors: token id out of vocab; non-finite activations name the layer.
  ForwardResult forward(ad::Tape& t, const std::vector<std::int64_t>& tokens, std::int64_t batch,
                        std::int64_t seq_len) const;

  /// Frozen parameters are registered on the tape without gradients and
  /// skipped by the optimizer.
  bool is_trainable(const std::string& name) const;

  /// Greedy argmax predictions, [B*T] token ids.
  std::vector<std::int64_t> greedy_predict(const std::vector<std::int64_t>& tokens, std::int64_t batch,
                                           std::int64_t seq_len) const;

 private:
  ModelConfig cfg_;
  Parameters params_;
};

/// Central finite differences over every trainable parameter element of a
/// model under the masked cross-entropy loss. Shared by the unit tests and
/// the gradient verification suite.
ad::GradCheckReport model_gradient_check(const Model& m, const std::vector<std::int64_t>& tokens,
                                         const std::vector<std::int64_t>& targets,
                                         const std::vector<std::uint8_t>& mask, std::int64_t batch,
                                         std::int64_t seq_len, double step = 1e-5);

}  // namespace rotla::model
