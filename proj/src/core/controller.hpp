#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "numerics.hpp"

// Sparse event controller. Error statistics are normalised, passed through a
// learned scale/bias and a temperature, and thresholded at the (1 - ratio)
// quantile. The hard mask is exactly binary with ceil(ratio * T) ones; its
// gradient is that of the soft gate sigma(score - threshold).
namespace lpcsm::controller {

struct ControllerParams {
  ad::Var bias;       // scalar
  ad::Var scale;      // scalar
  ad::Var ratio_raw;  // scalar, frozen when not adaptive
  double temperature = 1.0;
  double ratio_min = 0.05;
  double ratio_max = 0.95;
  bool adaptive = true;
};

struct EventMask {
  Tensor hard;           // [T] in {0,1}
  ad::Var soft;          // [T x 1]
  ad::Var mask;          // [T x 1]; value == hard, gradient of soft
  double effective_ratio = 0.0;
};

// Straight-through constants frozen at a reference point. Substituting them
// turns the piecewise-constant hard mask into a smooth surrogate whose
// gradient at the reference equals the straight-through gradient.
struct FrozenMask {
  std::vector<double> hard;
  std::vector<double> soft;
};

// ctrl.bias = 0, ctrl.scale = 1, ctrl.ratio_raw = logit of the initial ratio.
void init_parameters(ParameterStore& store, const std::string& prefix, const ControllerConfig& cfg);
ControllerParams bind(ParamBinder& params, const std::string& prefix, const ControllerConfig& cfg);

// Inverse of the ratio clamp at the configured initial ratio.
double initial_ratio_raw(const ControllerConfig& cfg);

// ratio = min + (max - min) * sigma(ratio_raw).
ad::Var clamp_ratio(const ControllerParams& p);

// z = (e - mean e) / (std e + 1e-6) with population std;
// score = (scale * z + bias) / temperature.
ad::Var event_scores(ad::Var errors, const ControllerParams& p);

// ceil(ratio * n) computed without rounding drift.
std::size_t mask_cardinality(double ratio, std::size_t n);

// Exactly k ones at the k largest scores; ties go to the lower index.
std::vector<double> top_k(std::span<const double> scores, std::size_t k);

EventMask hard_mask(ad::Var scores, ad::Var ratio, const FrozenMask* frozen = nullptr);

// Causal form used inside the block: token t is normalised and thresholded
// against the prefix 0..t only, so its decision never depends on later tokens.
EventMask causal_event_mask(ad::Var errors, const ControllerParams& p,
                            const FrozenMask* frozen = nullptr);

}  // namespace lpcsm::controller
