#include "train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "error.hpp"
#include "checkpoint.hpp"
#include "model.hpp"

namespace lpcsm::harness {

namespace {

std::uint64_t train_stream(std::uint64_t seed, int step) {
  return (seed << 41) ^ static_cast<std::uint64_t>(step);
}

}  // namespace

std::string metrics_row(const StepMetrics& m) {
  char buf[512];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.6g", m.step,
                m.loss.lm, m.loss.pred, m.loss.sparse, m.loss.mem, m.loss.stop, m.loss.total,
                m.effective_ratio, m.tokens_per_second);
  return buf;
}

StepMetrics batch_loss(const ParameterStore& params, const RunConfig& cfg, const Batch& batch,
                       ad::GradMap* grads) {
  require(!batch.examples.empty(), ErrorCode::kInvalidArgument, "empty batch");
  ad::Tape tape;
  const double inv = 1.0 / static_cast<double>(batch.examples.size());
  StepMetrics m;
  ad::Var total;
  double ratio_sum = 0.0, eff_sum = 0.0;
  std::size_t layer_records = 0;
  for (const auto& ex : batch.examples) {
    ad::Tape& tp = tape;
    model::ForwardResult fwd = model::model_forward(tp, params, cfg.model, ex.inputs);
    objective::LossTerms terms = objective::aux_losses(fwd, ex.targets, cfg.model);
    terms.lm = objective::lm_loss(fwd.logits.lm, ex.targets);
    terms = objective::total_loss(terms, cfg.loss);
    const auto v = terms.values();
    m.loss.lm += v.lm * inv;
    m.loss.pred += v.pred * inv;
    m.loss.sparse += v.sparse * inv;
    m.loss.mem += v.mem * inv;
    m.loss.stop += v.stop * inv;
    m.loss.total += v.total * inv;
    for (const auto& aux : fwd.aux) {
      if (!aux.has_correction) continue;
      eff_sum += aux.effective_ratio;
      ratio_sum += aux.ratio;
      ++layer_records;
    }
    ad::Var scaled = ad::scale(terms.total, inv);
    total = total.valid() ? ad::add(total, scaled) : scaled;
  }
  if (layer_records) {
    m.effective_ratio = eff_sum / static_cast<double>(layer_records);
    m.ratio = ratio_sum / static_cast<double>(layer_records);
  }
  if (grads && std::isfinite(m.loss.total)) *grads = tape.backward(total);
  return m;
}

Trainer::Trainer(RunConfig cfg, std::uint64_t seed)
    : Trainer(cfg, seed, model::init_parameters(cfg.model, seed)) {}

Trainer::Trainer(RunConfig cfg, std::uint64_t seed, ParameterStore initial)
    : cfg_(std::move(cfg)), seed_(seed), params_(std::move(initial)), opt_(cfg_.optimizer) {
  cfg_.validate();
  validate_task(cfg_.task, cfg_.model);
}

StepMetrics Trainer::step() {
  const auto start = std::chrono::steady_clock::now();
  const Batch batch = make_batch(cfg_.task, cfg_.train.batch_size, train_stream(seed_, step_));
  ad::GradMap grads;
  StepMetrics m = batch_loss(params_, cfg_, batch, &grads);
  m.step = step_;
  if (!std::isfinite(m.loss.total)) {
    std::string where;
    if (!dump_path_.empty()) {
      try {
        save_checkpoint(params_, cfg_.model, dump_path_);
        where = "; parameters written to " + dump_path_;
      } catch (const Error&) {
        where = "; parameter dump to " + dump_path_ + " failed";
      }
    }
    fail(ErrorCode::kNumeric, "non-finite loss at step " + std::to_string(step_) +
                                  " (row: " + metrics_row(m) + ")" + where);
  }
  m.grad_norm = opt_.step(params_, grads);
  ++step_;
  if (timing_) {
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const double tokens = static_cast<double>(cfg_.train.batch_size) * cfg_.task.seq_len;
    m.tokens_per_second = secs > 0.0 ? tokens / secs : 0.0;
  }
  return m;
}

TrainResult train(const RunConfig& cfg, const TrainOptions& options) {
  require(options.steps >= 0, ErrorCode::kInvalidArgument, "steps must be nonnegative");
  Trainer trainer(cfg, options.seed);
  trainer.set_timing(options.timing);
  trainer.set_dump_path(options.dump_path);
  TrainResult result;
  if (options.metrics) *options.metrics << kMetricsHeader << '\n';
  for (int s = 0; s < options.steps; ++s) {
    StepMetrics m = trainer.step();
    if (options.metrics && (s % cfg.train.log_every == 0 || s + 1 == options.steps)) {
      *options.metrics << metrics_row(m) << '\n';
      options.metrics->flush();
    }
    if (options.on_step) options.on_step(m);
    result.history.push_back(m);
  }
  result.params = trainer.params();
  return result;
}

StepMetrics evaluate(const ParameterStore& params, const RunConfig& cfg, const TaskConfig& task,
                     int batch_size, std::uint64_t stream) {
  validate_task(task, cfg.model);
  return batch_loss(params, cfg, make_batch(task, batch_size, stream));
}

}  // namespace lpcsm::harness
