#pragma once

#include <optional>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "layers.hpp"
#include "numerics.hpp"

namespace lpcsm::attention {

struct AttentionConfig {
  int window = 16;
  int heads = 4;
  int head_dim = 8;
  std::optional<int> latent_dim;

  int width() const { return heads * head_dim; }
  void validate() const;
};

struct AttentionOutput {
  ad::Var read;  // [T x d]
  // [heads x T x T] softmax weights when requested, otherwise empty.
  std::optional<Tensor> weights;
};

struct Projections {
  ad::Var q, k, v;  // [T x d] each
};

// Parameter layout under `prefix`:
//   shared:  qkv.{weight,bias} [d x 3d], out.{weight,bias} [d x d]
//   latent:  q.{weight,bias}, z.weight [d x L], k_up.{weight,bias} [L x d],
//            v_up.{weight,bias}, out.{weight,bias}
void init_parameters(ParameterStore& store, const std::string& prefix, const AttentionConfig& cfg,
                     Initializer& init);

Projections project(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                    const std::string& prefix);

// Multi-head scaled dot-product read: queries [Tq x d] against keys/values
// [Tk x d] where allowed[i*Tk + j] admits key j for query i, followed by the
// output projection.
AttentionOutput attend(const Projections& proj, const std::vector<std::uint8_t>& allowed,
                       const AttentionConfig& cfg, ParamBinder& params, const std::string& prefix,
                       bool keep_weights);

// Causal window mask: position t admits [max(0, t-w+1), t].
std::vector<std::uint8_t> window_mask(std::size_t length, int window);

AttentionOutput local_attention(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                                const std::string& prefix, bool keep_weights = false);
AttentionOutput latent_attention(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                                 const std::string& prefix, bool keep_weights = false);

}  // namespace lpcsm::attention
