#include "rotla/training.hpp"

#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "rotla/parallel.hpp"

namespace rotla::training {

void TrainConfig::validate() const {
  check(lr > 0.0, "lr must be positive");
  check(warmup_fraction >= 0.0 && warmup_fraction < 1.0, "warmup_fraction must lie in [0, 1)");
  check(clip_norm > 0.0, "clip_norm must be positive");
  check(steps >= 0 && batch_size >= 1, "steps/batch_size out of range");
  check(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "betas must lie in [0, 1)");
  check(!seeds.empty(), "at least one seed is required");
}

std::string metrics_csv_header() { return "run_id,seed,step,split,length,loss,accuracy"; }

std::string to_csv_row(const MetricRecord& r) {
  std::ostringstream os;
  os << r.run_id << "," << r.seed << "," << r.step << "," << r.split << "," << r.length << "," << r.loss
     << "," << r.accuracy;
  return os.str();
}

double lr_at(std::int64_t step, std::int64_t total, const TrainConfig& cfg) {
  check(step >= 0 && step <= total, "lr_at step out of range");
  if (total == 0) return cfg.lr;
  const std::int64_t warm = static_cast<std::int64_t>(std::llround(cfg.warmup_fraction * static_cast<double>(total)));
  if (step < warm)
    return cfg.lr_start + (cfg.lr - cfg.lr_start) * static_cast<double>(step) / static_cast<double>(warm);
  if (step >= total) return cfg.lr_end;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return cfg.lr_end + 0.5 * (cfg.lr - cfg.lr_end) * (1.0 + std::cos(std::numbers::pi * progress));
}

double clip_global_norm(std::vector<Tensor>& grads, double clip_norm) {
  std::vector<double> sq;
  sq.reserve(grads.size());
  for (const Tensor& g : grads) {
    double s = 0.0;
    for (std::int64_t i = 0; i < g.size(); ++i) s += g.at(i) * g.at(i);
    sq.push_back(s);
  }
  const double norm = std::sqrt(pairwise_reduce(std::move(sq)));
  if (norm > clip_norm && norm > 0.0) {
    const double scale = clip_norm / norm;
    for (Tensor& g : grads)
      for (std::int64_t i = 0; i < g.size(); ++i) g.at(i) *= scale;
  }
  return norm;
}

void adamw_step(model::Parameters& params, const std::vector<std::uint8_t>& trainable,
                const std::vector<Tensor>& grads, AdamState& state, double lr, const TrainConfig& cfg) {
  auto& items = params.items();
  check(grads.size() == items.size() && trainable.size() == items.size(), "optimizer state misaligned");
  if (state.m.empty()) {
    for (const auto& [name, value] : items) {
      state.m.push_back(Tensor::zeros(value.shape()));
      state.v.push_back(Tensor::zeros(value.shape()));
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (!trainable[i]) continue;
    Tensor& p = items[i].second;
    const Tensor& g = grads[i];
    check(g.same_shape(p), "gradient/parameter shape mismatch for " + items[i].first);
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::int64_t j = 0; j < p.size(); ++j) {
      const double gj = g.at(j);
      m.at(j) = cfg.beta1 * m.at(j) + (1.0 - cfg.beta1) * gj;
      v.at(j) = cfg.beta2 * v.at(j) + (1.0 - cfg.beta2) * gj * gj;
      const double mhat = m.at(j) / bc1;
      const double vhat = v.at(j) / bc2;
      p.at(j) -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * p.at(j));
    }
  }
}

namespace {

struct AccuracyCounts {
  double correct = 0.0;
  double total = 0.0;
};

AccuracyCounts batch_accuracy(const tasks::TaskSpec& spec, const tasks::LabeledBatch& b,
                              const std::vector<std::int64_t>& pred) {
  AccuracyCounts c;
  if (spec.accuracy_kind() == tasks::AccuracyKind::exact_sequence) {
    for (std::int64_t s = 0; s < b.batch; ++s) {
      bool all = true;
      bool any = false;
      for (std::int64_t t = 0; t < b.seq_len; ++t) {
        const std::size_t i = static_cast<std::size_t>(s * b.seq_len + t);
        if (!b.mask[i]) continue;
        any = true;
        if (pred[i] != b.targets[i]) all = false;
      }
      if (any) {
        c.total += 1.0;
        if (all) c.correct += 1.0;
      }
    }
  } else {
    for (std::size_t i = 0; i < b.mask.size(); ++i) {
      if (!b.mask[i]) continue;
      c.total += 1.0;
      if (pred[i] == b.targets[i]) c.correct += 1.0;
    }
  }
  return c;
}

double masked_loss(const model::Model& m, const tasks::LabeledBatch& b) {
  ad::Tape t;
  model::ForwardResult f = m.forward(t, b.inputs, b.batch, b.seq_len);
  return t.val(ad::cross_entropy(t, f.logits, b.targets, b.mask)).at(0);
}

}  // namespace

EvalResult evaluate(const model::Model& m, const tasks::TaskSpec& spec, std::uint64_t eval_seed,
                    std::int64_t length, std::int64_t batches, std::int64_t batch_size) {
  Rng rng = Rng(eval_seed).substream("eval-data").substream(static_cast<std::uint64_t>(length));
  EvalResult res;
  AccuracyCounts counts;
  double loss_acc = 0.0;
  for (std::int64_t i = 0; i < batches; ++i) {
    tasks::LabeledBatch b = tasks::generate(spec, rng, batch_size, length);
    const std::vector<std::int64_t> pred = m.greedy_predict(b.inputs, b.batch, b.seq_len);
    const AccuracyCounts c = batch_accuracy(spec, b, pred);
    counts.correct += c.correct;
    counts.total += c.total;
    loss_acc += masked_loss(m, b);
  }
  res.accuracy = counts.total > 0 ? counts.correct / counts.total : 0.0;
  res.loss = loss_acc / static_cast<double>(batches);
  return res;
}

TrainResult train(const model::ModelConfig& mcfg, const tasks::TaskSpec& spec, const TrainConfig& tcfg,
                  std::uint64_t seed, const std::string& run_id, std::ostream* log) {
  tcfg.validate();
  spec.validate();
  Rng root(seed);
  Rng data = root.substream("data");
  model::Model m(mcfg, root.substream("init"));
  const std::uint64_t eval_seed = root.substream("eval").seed();

  TrainResult result;
  result.config = m.config();

  std::vector<std::uint8_t> trainable;
  for (const auto& [name, value] : m.params().items())
    trainable.push_back(m.is_trainable(name) ? 1 : 0);

  AdamState opt;
  double initial_loss = -1.0;
  std::int64_t bad_evals = 0;

  auto run_evals = [&](std::int64_t step) {
    std::vector<std::int64_t> lens = {spec.train_max_len};
    for (std::int64_t l : tcfg.eval_lengths)
      if (l != spec.train_max_len) lens.push_back(l);
    double train_len_acc = 0.0;
    std::map<std::int64_t, double> acc_by_len;
    for (std::int64_t l : lens) {
      EvalResult ev = evaluate(m, spec, eval_seed, l, tcfg.eval_batches, tcfg.eval_batch_size);
      MetricRecord rec{run_id, seed, step, l == spec.train_max_len ? "val" : "eval", l, ev.loss, ev.accuracy};
      result.metrics.push_back(rec);
      acc_by_len[l] = ev.accuracy;
      if (l == spec.train_max_len) train_len_acc = ev.accuracy;
      if (log) (*log) << to_csv_row(rec) << std::endl;
    }
    if (train_len_acc > result.best_val_accuracy) {
      result.best_val_accuracy = train_len_acc;
      result.best_params = m.params();
    }
    return acc_by_len;
  };

  for (std::int64_t step = 0; step < tcfg.steps; ++step) {
    tasks::LabeledBatch b = tasks::train_batch(spec, data, tcfg.batch_size);
    ad::Tape tape(tcfg.precision);
    model::ForwardResult f = m.forward(tape, b.inputs, b.batch, b.seq_len);
    ad::Var loss = ad::cross_entropy(tape, f.logits, b.targets, b.mask);
    const double loss_val = tape.val(loss).at(0);
    tape.backward(loss);

    std::vector<Tensor> grads;
    grads.reserve(m.params().items().size());
    bool finite = std::isfinite(loss_val);
    for (const auto& [name, value] : m.params().items()) {
      grads.push_back(tape.grad(f.param_vars.at(name)));
      if (finite && !grads.back().all_finite()) finite = false;
    }
    if (!finite) {
      opt.skipped += 1;
      if (log) (*log) << "# step " << step << ": non-finite gradients, step skipped\n";
      continue;
    }
    clip_global_norm(grads, tcfg.clip_norm);
    adamw_step(m.params(), trainable, grads, opt, lr_at(step, tcfg.steps, tcfg), tcfg);

    if (initial_loss < 0) initial_loss = loss_val;
    const bool eval_now = ((step + 1) % tcfg.eval_every == 0) || step + 1 == tcfg.steps;
    if (eval_now) {
      MetricRecord rec{run_id, seed, step + 1, "train", b.seq_len, loss_val, -1.0};
      result.metrics.push_back(rec);
      if (log) (*log) << to_csv_row(rec) << std::endl;
      auto acc_by_len = run_evals(step + 1);

      // divergence: loss blowing past 10x the initial value for 3 evals
      if (loss_val > 10.0 * initial_loss) {
        if (++bad_evals >= 3) {
          result.diverged = true;
          if (log) (*log) << "# divergence detected at step " << step + 1 << ", aborting\n";
          break;
        }
      } else {
        bad_evals = 0;
      }

      if (tcfg.early_stop_acc > 0.0) {
        std::vector<std::int64_t> gates = tcfg.early_stop_lengths;
        if (gates.empty()) gates.push_back(spec.train_max_len);
        bool all_hit = true;
        for (std::size_t gi = 0; gi < gates.size(); ++gi) {
          double thr = tcfg.early_stop_acc;
          if (!tcfg.early_stop_accs.empty())
            thr = tcfg.early_stop_accs[std::min(gi, tcfg.early_stop_accs.size() - 1)];
          auto it = acc_by_len.find(gates[gi]);
          if (it == acc_by_len.end() || it->second < thr) all_hit = false;
        }
        if (all_hit) {
          result.stopped_at_step = step + 1;
          break;
        }
      }
    }
  }

  if (tcfg.steps == 0) run_evals(0);
  result.final_params = m.params();
  if (result.best_params.items().empty()) result.best_params = m.params();
  return result;
}

std::vector<MetricRecord> eval_lengths(const model::Model& m, const tasks::TaskSpec& spec,
                                       const std::vector<std::int64_t>& lengths, std::uint64_t seed,
                                       const std::string& run_id, std::int64_t batches,
                                       std::int64_t batch_size) {
  std::vector<MetricRecord> out;
  const std::uint64_t eval_seed = Rng(seed).substream("eval").seed();
  for (std::int64_t l : lengths) {
    check(l >= 2, "eval lengths must be >= 2");
    EvalResult ev = evaluate(m, spec, eval_seed, l, batches, batch_size);
    out.push_back({run_id, seed, -1, "eval", l, ev.loss, ev.accuracy});
  }
  return out;
}

}  // namespace rotla::training
