#pragma once

#include <string>

#include "autodiff.hpp"
#include "layers.hpp"
#include "numerics.hpp"

// Predictive correction: estimate the block input from the attention and
// memory reads, then refine the estimate with the explicit mismatch.
namespace lpcsm::correction {

struct PredictionState {
  ad::Var estimate;    // [T x d]
  int step = 0;
  ad::Var last_error;  // h - estimate
};

struct ErrorStats {
  ad::Var per_token_error_norm;  // [T x 1]
  double mean_error = 0.0;
};

// pred.{fc1,fc2}: [2d -> d -> d]; refine.{fc1,fc2}: [3d -> d -> d].
void init_parameters(ParameterStore& store, const std::string& prefix, std::size_t width,
                     Initializer& init);

PredictionState predict_init(ad::Var a, ad::Var r, ad::Var h, ParamBinder& params,
                             const std::string& prefix);

// One additive step; throws once `max_steps` refinements have been applied.
PredictionState refine_step(ad::Var a, ad::Var r, ad::Var h, const PredictionState& state,
                            int max_steps, ParamBinder& params, const std::string& prefix);

// predict_init followed by `steps` refinements.
PredictionState predict_and_refine(ad::Var a, ad::Var r, ad::Var h, int steps, ParamBinder& params,
                                   const std::string& prefix);

ErrorStats error_stats(ad::Var h, ad::Var estimates);

}  // namespace lpcsm::correction
