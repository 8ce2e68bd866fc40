#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "rotla/model.hpp"
#include "rotla/tasks.hpp"

namespace rotla::training {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-6;
  double eps = 1e-8;
  double clip_norm = 1.0;
  double warmup_fraction = 0.1;
  double lr_start = 0.0;
  double lr_end = 0.0;
  std::int64_t steps = 1000;
  std::int64_t batch_size = 128;
  std::int64_t eval_every = 100;
  std::int64_t eval_batches = 4;
  std::int64_t eval_batch_size = 128;
  std::vector<std::int64_t> eval_lengths;  // evaluated besides the train length
  std::vector<std::uint64_t> seeds = {1};
  // early stop once every gate length reaches its threshold (< 0 disables);
  // early_stop_accs pairs with early_stop_lengths, recycling the last
  // entry when shorter
  double early_stop_acc = -1.0;
  std::vector<std::int64_t> early_stop_lengths;
  std::vector<double> early_stop_accs;
  ad::Precision precision = ad::Precision::f64;

  void validate() const;
};

/// One evaluation row; streamed to CSV with the fixed header
/// run_id,seed,step,split,length,loss,accuracy.
struct MetricRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::int64_t step = 0;
  std::string split;
  std::int64_t length = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

std::string metrics_csv_header();
std::string to_csv_row(const MetricRecord& r);

/// Warmup from lr_start to lr over warmup_fraction * total steps, then
/// cosine decay to lr_end. Continuous and piecewise monotone.
double lr_at(std::int64_t step, std::int64_t total, const TrainConfig& cfg);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t step = 0;
  std::int64_t skipped = 0;  // non-finite gradient events
};

/// Global-norm clip (in place); returns the pre-clip norm.
double clip_global_norm(std::vector<Tensor>& grads, double clip_norm);

/// One decoupled-weight-decay Adam step with bias-corrected moments over
/// the trainable parameters. grads must be pre-clipped. Entries of
/// `names` align Parameters items with state slots.
void adamw_step(model::Parameters& params, const std::vector<std::uint8_t>& trainable,
                const std::vector<Tensor>& grads, AdamState& state, double lr, const TrainConfig& cfg);

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Greedy-decode accuracy at one task length with a fixed generator
/// stream (same seed, same batches across checkpoints).
EvalResult evaluate(const model::Model& m, const tasks::TaskSpec& spec, std::uint64_t eval_seed,
                    std::int64_t length, std::int64_t batches, std::int64_t batch_size);

struct TrainResult {
  model::ModelConfig config;
  model::Parameters best_params;   // by validation accuracy at train length
  model::Parameters final_params;
  std::vector<MetricRecord> metrics;
  double best_val_accuracy = 0.0;
  bool diverged = false;
  std::int64_t stopped_at_step = -1;  // early-stop step, -1 if ran to completion
};

/// Deterministic single-seed training loop: data/init/eval streams are labeled
/// substreams of the seed.
TrainResult train(const model::ModelConfig& mcfg, const tasks::TaskSpec& spec, const TrainConfig& tcfg,
                  std::uint64_t seed, const std::string& run_id, std::ostream* log = nullptr);

/// Per-length evaluation of a trained model (MetricRecord per length).
std::vector<MetricRecord> eval_lengths(const model::Model& m, const tasks::TaskSpec& spec,
                                       const std::vector<std::int64_t>& lengths, std::uint64_t seed,
                                       const std::string& run_id, std::int64_t batches,
                                       std::int64_t batch_size);

}  // namespace rotla::training
