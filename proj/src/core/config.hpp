#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace lpcsm {

struct Toggles {
  bool slow_memory = true;
  bool predictive_coding = true;
  bool ont = true;
  bool stop_head = true;
  bool mhc = true;

  bool operator==(const Toggles&) const = default;
};

struct ControllerConfig {
  double ratio_min = 0.05;
  double ratio_max = 0.95;
  double ratio_init = 0.25;
  double temperature = 1.0;
  // false freezes ratio_raw at its initial value.
  bool adaptive = true;

  bool operator==(const ControllerConfig&) const = default;
};

struct MhcConfig {
  int streams = 4;
  int iters = 20;

  bool operator==(const MhcConfig&) const = default;
};

struct ModelConfig {
  int vocab_size = 32;
  int width = 32;
  int layers = 2;
  int window = 16;
  int heads = 4;
  std::optional<int> latent_dim;
  int chunk_size = 64;
  int refine_steps = 2;
  double alpha_n = 0.5;
  int max_seq_len = 256;
  double norm_eps = 1e-6;
  ControllerConfig controller;
  MhcConfig mhc;
  Toggles toggles;

  int head_dim() const { return width / heads; }
  int eos_token() const { return vocab_size - 1; }
  // Throws Error(kConfig) on any violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LossWeights {
  double lambda_pred = 0.1;
  double lambda_sparse = 0.01;
  double lambda_mem = 0.001;
  double lambda_stop = 0.1;

  bool operator==(const LossWeights&) const = default;
};

struct OptimizerConfig {
  double lr = 3e-4;
  double momentum = 0.9;
  double clip = 1.0;

  bool operator==(const OptimizerConfig&) const = default;
};

enum class TaskKind { kCopy, kKeyRecall };

struct TaskConfig {
  TaskKind kind = TaskKind::kCopy;
  int vocab_size = 32;
  int seq_len = 64;
  int key_len = 8;
  int distractor_len = 0;
  std::uint64_t seed = 1;

  bool operator==(const TaskConfig&) const = default;
};

struct TrainConfig {
  int batch_size = 8;
  int log_every = 1;

  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  LossWeights loss;
  OptimizerConfig optimizer;
  TaskConfig task;
  TrainConfig train;

  void validate() const;
};

// JSON text with sections "model", "loss", "optimizer", "task", "train".
// Missing keys take defaults; unknown keys are rejected.
RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
TaskConfig parse_task_config(const std::string& json_text);

// Canonical single-line JSON of the model section, used inside checkpoints.
std::string model_config_to_text(const ModelConfig& cfg);
ModelConfig model_config_from_text(const std::string& text);

// FNV-1a of the canonical model text, as 16 hex digits.
std::string config_fingerprint(const ModelConfig& cfg);

}  // namespace lpcsm
