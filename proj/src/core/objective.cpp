#include "objective.hpp"

#include <cmath>

#include "error.hpp"

namespace lpcsm::objective {

namespace {

double value_or_zero(const ad::Var& v) { return v.valid() ? v.item() : 0.0; }

ad::Var mean_over_layers(const std::vector<ad::Var>& terms) {
  ad::Var acc;
  for (const auto& t : terms) acc = acc.valid() ? ad::add(acc, t) : t;
  return ad::scale(acc, 1.0 / static_cast<double>(terms.size()));
}

}  // namespace

LossBreakdown LossTerms::values() const {
  return {value_or_zero(lm),  value_or_zero(pred), value_or_zero(sparse),
          value_or_zero(mem), value_or_zero(stop), value_or_zero(total)};
}

ad::Var lm_loss(ad::Var logits, std::span<const int> targets) {
  return ad::cross_entropy(logits, targets);
}

LossTerms aux_losses(const model::ForwardResult& forward, std::span<const int> targets,
                     const ModelConfig& cfg) {
  LossTerms terms;
  std::vector<ad::Var> pred, sparse, mem;
  const double d = static_cast<double>(cfg.width);
  for (std::size_t l = 0; l < forward.aux.size(); ++l) {
    const auto& aux = forward.aux[l];
    if (cfg.toggles.predictive_coding) {
      require(aux.has_correction, ErrorCode::kState,
              "layer " + std::to_string(l) + ": predictive coding on but no error record");
      pred.push_back(ad::mean(ad::square(aux.error_norms)));
      sparse.push_back(ad::square(ad::mean(aux.mask)));
    }
    ad::Var m = ad::add(ad::sum(ad::square(aux.fast_final)), ad::sum(ad::square(aux.slow_final)));
    mem.push_back(ad::scale(m, 1.0 / d));
  }
  if (!pred.empty()) {
    terms.pred = mean_over_layers(pred);
    terms.sparse = mean_over_layers(sparse);
  }
  if (!mem.empty()) terms.mem = mean_over_layers(mem);
  if (cfg.toggles.stop_head) {
    require(forward.logits.stop.valid(), ErrorCode::kState, "stop head on but no stop scores");
    std::vector<double> labels(targets.size());
    for (std::size_t i = 0; i < targets.size(); ++i) labels[i] = targets[i] == cfg.eos_token() ? 1.0 : 0.0;
    terms.stop = ad::bce_with_logits(forward.logits.stop, labels);
  }
  return terms;
}

LossTerms total_loss(LossTerms terms, const LossWeights& weights) {
  require(weights.lambda_pred >= 0 && weights.lambda_sparse >= 0 && weights.lambda_mem >= 0 &&
              weights.lambda_stop >= 0,
          ErrorCode::kConfig, "loss weights must be nonnegative");
  ad::Var total = terms.lm;
  auto add_term = [&total](const ad::Var& term, double weight) {
    if (term.valid() && weight != 0.0) total = ad::add(total, ad::scale(term, weight));
  };
  add_term(terms.pred, weights.lambda_pred);
  add_term(terms.sparse, weights.lambda_sparse);
  add_term(terms.mem, weights.lambda_mem);
  add_term(terms.stop, weights.lambda_stop);
  terms.total = total;
  return terms;
}

LossBreakdown total_loss(LossBreakdown parts, const LossWeights& weights) {
  parts.total = parts.lm + weights.lambda_pred * parts.pred + weights.lambda_sparse * parts.sparse +
                weights.lambda_mem * parts.mem + weights.lambda_stop * parts.stop;
  return parts;
}

LossTerms sequence_loss(ad::Tape& tape, const ParameterStore& params, const ModelConfig& cfg,
                        const LossWeights& weights, std::span<const int> inputs,
                        std::span<const int> targets, const model::ForwardOptions& options) {
  require(inputs.size() == targets.size(), ErrorCode::kShapeMismatch,
          "inputs and targets differ in length");
  model::ForwardResult fwd = model::model_forward(tape, params, cfg, inputs, options);
  LossTerms terms = aux_losses(fwd, targets, cfg);
  terms.lm = lm_loss(fwd.logits.lm, targets);
  return total_loss(terms, weights);
}

Sgd::Sgd(const OptimizerConfig& cfg) : cfg_(cfg) {
  require(cfg.lr > 0 && std::isfinite(cfg.lr), ErrorCode::kConfig, "lr must be positive");
  require(cfg.momentum >= 0 && cfg.momentum < 1, ErrorCode::kConfig, "momentum must lie in [0, 1)");
  require(cfg.clip > 0, ErrorCode::kConfig, "clip must be positive");
}

double Sgd::step(ParameterStore& params, const ad::GradMap& grads) {
  auto& entries = params.entries();
  if (velocity_.empty()) {
    for (const auto& e : entries) velocity_.push_back(Tensor::zeros_like(e.value));
  }
  require(velocity_.size() == entries.size(), ErrorCode::kState,
          "optimizer state does not match the parameter store");

  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += squared_norm(g.data());
  const double norm = std::sqrt(sq);
  require(std::isfinite(norm), ErrorCode::kNumeric, "non-finite gradient norm");
  const double factor = norm > cfg_.clip ? cfg_.clip / norm : 1.0;

  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    if (!e.trainable) continue;
    auto it = grads.find(e.name);
    Tensor& v = velocity_[i];
    for (std::size_t k = 0; k < v.numel(); ++k) {
      const double g = it == grads.end() ? 0.0 : it->second[k] * factor;
      v[k] = cfg_.momentum * v[k] + g;
      e.value[k] -= cfg_.lr * v[k];
    }
  }
  return norm;
}

}  // namespace lpcsm::objective
