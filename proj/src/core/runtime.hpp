#pragma once

#include <deque>
#include <optional>
#include <span>
#include <vector>

#include "config.hpp"
#include "numerics.hpp"
#include "tensor.hpp"

// Incremental decoding. Each step runs the block equations on a single row
// with the recurrent state restored from the cache, reusing the graph
// functions of teacher forcing so both regimes perform identical arithmetic.
namespace lpcsm::runtime {

struct LayerCache {
  std::deque<Tensor> history;  // post-norm block inputs, oldest first, at most `window`
  Tensor fast;                 // [1 x d]
  Tensor slow;                 // [1 x d]
  int chunk_index = 0;         // completed slow writes
  Tensor chunk_sum;            // [1 x d], meaningful while chunk_count > 0
  int chunk_count = 0;
  std::vector<double> errors;  // per-token error norms seen so far (controller prefix)
};

struct DecodeCache {
  std::vector<LayerCache> layers;
  std::size_t position = 0;

  bool bit_equal(const DecodeCache& other) const;
};

struct StepLogits {
  Tensor lm;                  // [V]
  std::optional<double> stop; // stop-head logit when the head exists
};

DecodeCache init_cache(const ModelConfig& cfg);

// Consumes `token` at cache.position and advances the cache in place.
StepLogits step_decode(int token, DecodeCache& cache, const ParameterStore& params,
                       const ModelConfig& cfg);

struct StopPolicy {
  std::optional<int> eos_token;         // halt after emitting this token
  std::optional<double> stop_threshold; // halt when sigmoid(stop logit) > threshold
};

struct Generation {
  std::vector<int> tokens;  // prompt followed by generated tokens
  DecodeCache cache;
};

// Greedy decoding. The prompt's partial chunk is carried into generation.
Generation generate(std::span<const int> prompt, int max_new, const ParameterStore& params,
                    const ModelConfig& cfg, const StopPolicy& policy);

}  // namespace lpcsm::runtime
