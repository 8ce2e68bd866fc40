#pragma once

#include <cstdint>
#include <vector>

#include "rotla/rng.hpp"

namespace rotla::tasks {

enum class TaskKind { parity, a3, mqar, copy };

/// Accuracy convention per task: every position (state tracking), masked
/// answers (recall), or all-or-nothing per sequence (copying).
enum class AccuracyKind { per_token, per_answer, exact_sequence };

struct TaskSpec {
  TaskKind kind = TaskKind::parity;
  std::int64_t train_min_len = 64;
  std::int64_t train_max_len = 64;
  std::int64_t eval_max_len = 256;  // extrapolation bound; must exceed train_max_len
  // mqar: filler token 0, keys 1..num_keys, values num_keys+1..num_keys+num_values
  std::int64_t num_kv = 8;
  std::int64_t num_keys = 31;
  std::int64_t num_values = 32;
  // copy: letters 0..copy_vocab-1, <copy> = copy_vocab, <pad> = copy_vocab+1
  std::int64_t copy_vocab = 26;

  std::int64_t vocab_size() const;
  AccuracyKind accuracy_kind() const;
  /// Sequence length needed to hold a sample of the given task length
  /// (payload length for copy, position count otherwise).
  std::int64_t sequence_length(std::int64_t task_len) const;
  void validate() const;
};

struct LabeledBatch {
  std::int64_t batch = 0;
  std::int64_t seq_len = 0;
  std::vector<std::int64_t> inputs;   // [B*T]
  std::vector<std::int64_t> targets;  // [B*T]
  std::vector<std::uint8_t> mask;     // [B*T], 1 = supervised
};

/// One batch at an explicit task length. Deterministic in (spec, rng
/// state); eval-length batches come from the same process as training
/// ones, never from truncation or padding of them.
LabeledBatch generate(const TaskSpec& spec, Rng& rng, std::int64_t batch, std::int64_t task_len);

/// Training batch; the task length is drawn once per batch from
/// [train_min_len, train_max_len].
LabeledBatch train_batch(const TaskSpec& spec, Rng& rng, std::int64_t batch);

}  // namespace rotla::tasks
