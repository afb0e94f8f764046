#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "controller.hpp"
#include "numerics.hpp"

namespace lpcsm::model {

// Per-layer diagnostics and the quantities the auxiliary losses read.
struct LayerAux {
  bool has_correction = false;
  ad::Var error_norms;      // [T x 1], ||n_t - h^_t|| after the last refinement
  ad::Var mask;             // [T x 1], straight-through event mask
  Tensor hard_mask;         // [T]
  Tensor soft_mask;         // [T x 1], sigmoid(score - threshold)
  double effective_ratio = 0.0;
  double ratio = 0.0;       // clamped learnable ratio
  ad::Var fast_final;       // [1 x d]
  ad::Var slow_final;       // [1 x d]
  int write_count = 0;
  std::vector<int> write_positions;
  std::vector<Tensor> slow_before_write;
  std::vector<Tensor> chunk_means;
  std::vector<Tensor> transported;
  Tensor slow_trace;        // [T x d], slow state visible to each token's read
  Tensor fast_trace;        // [T x d]
};

struct BlockOutput {
  ad::Var hidden;  // [T x d]
  LayerAux aux;
};

struct Logits {
  ad::Var lm;    // [T x V]
  ad::Var stop;  // [T]; unbound without the stop head
};

struct ForwardOptions {
  // One entry per layer; replaces the live hard mask with frozen
  // straight-through constants (used by finite-difference checks).
  const std::vector<controller::FrozenMask>* frozen_masks = nullptr;
};

struct ForwardResult {
  Logits logits;
  std::vector<LayerAux> aux;
};

std::string layer_prefix(int layer);

ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed);

BlockOutput block_forward(ad::Var h, int layer, ParamBinder& params, const ModelConfig& cfg,
                          const controller::FrozenMask* frozen = nullptr);

// Embedding (token + learned position) -> blocks -> RMSNorm -> heads.
ForwardResult model_forward(ad::Tape& tape, const ParameterStore& params, const ModelConfig& cfg,
                            std::span<const int> tokens, const ForwardOptions& options = {});

// Frozen straight-through constants of a completed forward pass.
std::vector<controller::FrozenMask> freeze_masks(const ForwardResult& result);

// Pieces shared by teacher forcing and the incremental decoder.
ad::Var embed(ParamBinder& params, std::span<const int> tokens, std::size_t first_position,
              const ModelConfig& cfg);
ad::Var fuse(ParamBinder& params, const std::string& prefix, ad::Var attn, ad::Var read,
             ad::Var corrected);
ad::Var residual_ffn(ParamBinder& params, const std::string& prefix, const ModelConfig& cfg,
                     ad::Var h, ad::Var fused);
Logits heads(ParamBinder& params, const ModelConfig& cfg, ad::Var hidden);

}  // namespace lpcsm::model
