#include "rotla/tasks.hpp"

#include <algorithm>

#include "rotla/tensor.hpp"

namespace rotla::tasks {

std::int64_t TaskSpec::vocab_size() const {
  switch (kind) {
    case TaskKind::parity:
      return 2;
    case TaskKind::a3:
      return 3;
    case TaskKind::mqar:
      return 1 + num_keys + num_values;
    case TaskKind::copy:
      return copy_vocab + 2;
  }
  return 0;
}

AccuracyKind TaskSpec::accuracy_kind() const {
  switch (kind) {
    case TaskKind::parity:
    case TaskKind::a3:
      return AccuracyKind::per_token;
    case TaskKind::mqar:
      return AccuracyKind::per_answer;
    case TaskKind::copy:
      return AccuracyKind::exact_sequence;
  }
  return AccuracyKind::per_token;
}

std::int64_t TaskSpec::sequence_length(std::int64_t task_len) const {
  return kind == TaskKind::copy ? 2 * task_len + 1 : task_len;
}

void TaskSpec::validate() const {
  check(train_min_len >= 1 && train_min_len <= train_max_len, "train length bounds are inverted");
  check(eval_max_len > train_max_len, "eval lengths must exceed the training lengths (extrapolation)");
  if (kind == TaskKind::mqar) {
    check(num_kv >= 1 && num_kv <= num_keys, "mqar needs at least as many keys as bindings");
    check(train_min_len >= 3 * num_kv, "mqar sequences must fit bindings plus queries");
  }
  if (kind == TaskKind::copy) check(copy_vocab >= 2, "copy alphabet must have at least two letters");
}

namespace {

LabeledBatch make_batch(std::int64_t batch, std::int64_t seq_len) {
  LabeledBatch b;
  b.batch = batch;
  b.seq_len = seq_len;
  b.inputs.assign(static_cast<std::size_t>(batch * seq_len), 0);
  b.targets.assign(static_cast<std::size_t>(batch * seq_len), 0);
  b.mask.assign(static_cast<std::size_t>(batch * seq_len), 0);
  return b;
}

void gen_parity(Rng& rng, std::int64_t T, std::int64_t base, LabeledBatch& b) {
  std::int64_t acc = 0;
  for (std::int64_t t = 0; t < T; ++t) {
    const std::int64_t x = static_cast<std::int64_t>(rng.next_below(2));
    acc ^= x;
    b.inputs[static_cast<std::size_t>(base + t)] = x;
    b.targets[static_cast<std::size_t>(base + t)] = acc;
    b.mask[static_cast<std::size_t>(base + t)] = 1;
  }
}

void gen_a3(Rng& rng, std::int64_t T, std::int64_t base, LabeledBatch& b) {
  std::int64_t acc = 0;
  for (std::int64_t t = 0; t < T; ++t) {
    const std::int64_t x = static_cast<std::int64_t>(rng.next_below(3));
    acc = (acc + x) % 3;
    b.inputs[static_cast<std::size_t>(base + t)] = x;
    b.targets[static_cast<std::size_t>(base + t)] = acc;
    b.mask[static_cast<std::size_t>(base + t)] = 1;
  }
}

void gen_mqar(const TaskSpec& spec, Rng& rng, std::int64_t T, std::int64_t base, LabeledBatch& b) {
  const std::int64_t n = spec.num_kv;
  // distinct keys by rejection
  std::vector<std::int64_t> keys;
  keys.reserve(static_cast<std::size_t>(n));
  while (static_cast<std::int64_t>(keys.size()) < n) {
    const std::int64_t cand = 1 + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(spec.num_keys)));
    if (std::find(keys.begin(), keys.end(), cand) == keys.end()) keys.push_back(cand);
  }
  std::vector<std::int64_t> values(static_cast<std::size_t>(n));
  for (auto& v : values)
    v = 1 + spec.num_keys + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(spec.num_values)));

  for (std::int64_t i = 0; i < n; ++i) {
    b.inputs[static_cast<std::size_t>(base + 2 * i)] = keys[static_cast<std::size_t>(i)];
    b.inputs[static_cast<std::size_t>(base + 2 * i + 1)] = values[static_cast<std::size_t>(i)];
  }
  // distinct query slots in the tail, by rejection
  std::vector<std::int64_t> slots;
  while (static_cast<std::int64_t>(slots.size()) < n) {
    const std::int64_t cand =
        2 * n + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(T - 2 * n)));
    if (std::find(slots.begin(), slots.end(), cand) == slots.end()) slots.push_back(cand);
  }
  std::sort(slots.begin(), slots.end());
  // query each binding exactly once, in random order
  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
  for (std::int64_t i = n - 1; i > 0; --i) {
    const std::int64_t j = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(i + 1)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t which = order[static_cast<std::size_t>(i)];
    const std::int64_t pos = slots[static_cast<std::size_t>(i)];
    b.inputs[static_cast<std::size_t>(base + pos)] = keys[static_cast<std::size_t>(which)];
    // the value is the token that must follow the repeated key
    b.targets[static_cast<std::size_t>(base + pos)] = values[static_cast<std::size_t>(which)];
    b.mask[static_cast<std::size_t>(base + pos)] = 1;
  }
}

void gen_copy(const TaskSpec& spec, Rng& rng, std::int64_t payload_len, std::int64_t T, std::int64_t base,
              LabeledBatch& b) {
  const std::int64_t copy_tok = spec.copy_vocab;
  const std::int64_t pad_tok = spec.copy_vocab + 1;
  std::vector<std::int64_t> payload(static_cast<std::size_t>(payload_len));
  for (auto& x : payload) x = static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(spec.copy_vocab)));
  for (std::int64_t i = 0; i < T; ++i) b.inputs[static_cast<std::size_t>(base + i)] = pad_tok;
  for (std::int64_t i = 0; i < payload_len; ++i)
    b.inputs[static_cast<std::size_t>(base + i)] = payload[static_cast<std::size_t>(i)];
  b.inputs[static_cast<std::size_t>(base + payload_len)] = copy_tok;
  // supervised region: predict payload[j] at position payload_len + j,
  // with the true prefix teacher-forced in the input
  for (std::int64_t j = 0; j < payload_len; ++j) {
    const std::int64_t pos = payload_len + j;
    b.targets[static_cast<std::size_t>(base + pos)] = payload[static_cast<std::size_t>(j)];
    b.mask[static_cast<std::size_t>(base + pos)] = 1;
    if (j >= 1)
      b.inputs[static_cast<std::size_t>(base + pos)] = payload[static_cast<std::size_t>(j - 1)];
  }
}

}  // namespace

LabeledBatch generate(const TaskSpec& spec, Rng& rng, std::int64_t batch, std::int64_t task_len) {
  spec.validate();
  check(batch >= 1 && task_len >= 1, "generate needs a positive batch and length");
  if (spec.kind == TaskKind::mqar) check(task_len >= 3 * spec.num_kv, "mqar length too short for the bindings");
  const std::int64_t T = spec.sequence_length(task_len);
  LabeledBatch b = make_batch(batch, T);
  for (std::int64_t s = 0; s < batch; ++s) {
    const std::int64_t base = s * T;
    switch (spec.kind) {
      case TaskKind::parity:
        gen_parity(rng, T, base, b);
        break;
      case TaskKind::a3:
        gen_a3(rng, T, base, b);
        break;
      case TaskKind::mqar:
        gen_mqar(spec, rng, T, base, b);
        break;
      case TaskKind::copy:
        gen_copy(spec, rng, task_len, T, base, b);
        break;
    }
  }
  return b;
}

LabeledBatch train_batch(const TaskSpec& spec, Rng& rng, std::int64_t batch) {
  const std::int64_t span = spec.train_max_len - spec.train_min_len + 1;
  const std::int64_t len =
      spec.train_min_len + static_cast<std::int64_t>(rng.next_below(static_cast<std::uint64_t>(span)));
  return generate(spec, rng, batch, len);
}

}  // namespace rotla::tasks
