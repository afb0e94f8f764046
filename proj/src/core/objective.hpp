#pragma once

#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "model.hpp"
#include "numerics.hpp"

namespace lpcsm::objective {

struct LossBreakdown {
  double lm = 0.0;
  double pred = 0.0;
  double sparse = 0.0;
  double mem = 0.0;
  double stop = 0.0;
  double total = 0.0;
};

// Differentiable terms. A term whose mechanism is toggled off stays unbound
// and contributes exactly 0.
struct LossTerms {
  ad::Var lm;
  ad::Var pred;
  ad::Var sparse;
  ad::Var mem;
  ad::Var stop;
  ad::Var total;

  LossBreakdown values() const;
};

// Mean over positions of -log softmax(logits)[target].
ad::Var lm_loss(ad::Var logits, std::span<const int> targets);

// Auxiliary terms from a forward pass; `targets` are the next-token targets
// whose EOS positions form the stop-head labels.
LossTerms aux_losses(const model::ForwardResult& forward, std::span<const int> targets,
                     const ModelConfig& cfg);

// Weighted sum; terms with zero weight are left out of the graph entirely.
LossTerms total_loss(LossTerms terms, const LossWeights& weights);
LossBreakdown total_loss(LossBreakdown parts, const LossWeights& weights);

// Forward + every term for one sequence.
LossTerms sequence_loss(ad::Tape& tape, const ParameterStore& params, const ModelConfig& cfg,
                        const LossWeights& weights, std::span<const int> inputs,
                        std::span<const int> targets, const model::ForwardOptions& options = {});

// SGD with momentum and global gradient-norm clipping. Parameters without a
// gradient in a step are treated as having a zero gradient.
class Sgd {
 public:
  explicit Sgd(const OptimizerConfig& cfg);

  // Returns the global gradient norm before clipping.
  double step(ParameterStore& params, const ad::GradMap& grads);
  const OptimizerConfig& config() const noexcept { return cfg_; }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> velocity_;
};

}  // namespace lpcsm::objective
