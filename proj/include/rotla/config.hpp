#pragma once

#include <cstdint>
#include <string>

#include "rotla/model.hpp"
#include "rotla/tasks.hpp"
#include "rotla/training.hpp"

namespace rotla::config {

/// Parse/validation failure; the message carries the line number and key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

/// Everything one experiment needs, bound from a sectioned key = value
/// file. Unknown sections or keys are rejected.
struct ExperimentConfig {
  model::ModelConfig model;  // vocab_size is derived from the task
  tasks::TaskSpec task;
  training::TrainConfig train;
  std::string run_id = "run";
  std::string out_dir = "runs";
  std::uint64_t root_seed = 1;
  ad::Precision precision = ad::Precision::f64;

  /// Model config with the task vocabulary resolved in.
  model::ModelConfig resolved_model() const;
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

/// Canonical full serialization; parsing it back yields the same text.
std::string resolved_text(const ExperimentConfig& cfg);

/// FNV-1a hash of the resolved text, hex-encoded; stored in manifests.
std::string config_hash(const ExperimentConfig& cfg);

}  // namespace rotla::config
