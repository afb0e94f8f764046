#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "config.hpp"
#include "numerics.hpp"
#include "objective.hpp"
#include "tasks.hpp"

namespace lpcsm::harness {

struct StepMetrics {
  int step = 0;
  objective::LossBreakdown loss;
  double effective_ratio = 0.0;  // realised mask density, mean over layers and batch
  double ratio = 0.0;            // clamped controller ratio, mean over layers
  double tokens_per_second = 0.0;
  double grad_norm = 0.0;
};

inline constexpr const char* kMetricsHeader =
    "step,lm,pred,sparse,mem,stop,total,effective_ratio,tokens_per_second";
std::string metrics_row(const StepMetrics& m);

// Mean loss and diagnostics of a batch under teacher forcing. With
// `grads` set, also back-propagates the batch-mean total loss.
StepMetrics batch_loss(const ParameterStore& params, const RunConfig& cfg, const Batch& batch,
                       ad::GradMap* grads = nullptr);

// One optimisation run. Parameters come from `seed`; batch t comes from
// stream (seed, t) of the task generator.
class Trainer {
 public:
  Trainer(RunConfig cfg, std::uint64_t seed);
  Trainer(RunConfig cfg, std::uint64_t seed, ParameterStore initial);

  // Runs the next step; throws Error(kNumeric) on a non-finite loss.
  StepMetrics step();

  int steps_done() const noexcept { return step_; }
  const ParameterStore& params() const noexcept { return params_; }
  const RunConfig& config() const noexcept { return cfg_; }
  void set_timing(bool on) { timing_ = on; }
  // Where to write the parameters when a non-finite loss aborts training.
  void set_dump_path(std::string path) { dump_path_ = std::move(path); }

 private:
  RunConfig cfg_;
  std::uint64_t seed_;
  ParameterStore params_;
  objective::Sgd opt_;
  int step_ = 0;
  bool timing_ = true;
  std::string dump_path_;
};

struct TrainOptions {
  int steps = 0;
  std::uint64_t seed = 0;
  bool timing = true;
  std::ostream* metrics = nullptr;  // CSV sink, header written first
  std::string dump_path;
  std::function<void(const StepMetrics&)> on_step;
};

struct TrainResult {
  ParameterStore params;
  std::vector<StepMetrics> history;
};

TrainResult train(const RunConfig& cfg, const TrainOptions& options);

// Held-out batches for evaluation use streams disjoint from training steps.
inline constexpr std::uint64_t kEvalStreamBase = 1ULL << 40;

StepMetrics evaluate(const ParameterStore& params, const RunConfig& cfg, const TaskConfig& task,
                     int batch_size, std::uint64_t stream = kEvalStreamBase);

}  // namespace lpcsm::harness
