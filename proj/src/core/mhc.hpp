#pragma once

#include <string>

#include "autodiff.hpp"
#include "config.hpp"
#include "layers.hpp"
#include "numerics.hpp"

// Multi-stream residual router: lift the residual into S scaled streams, mix
// the streams with a Sinkhorn-normalised transport matrix, collapse with
// learned post coefficients and add the block update.
namespace lpcsm::mhc {

struct MixWeights {
  ad::Var pre_mix;           // [S]
  ad::Var post_mix;          // [S]
  ad::Var transport_logits;  // [S x S]
};

struct TransportMatrix {
  Tensor matrix;  // [S x S], positive, doubly stochastic after enough passes
};

// pre = 1 + noise, post = 1/S + noise, logits = noise.
void init_parameters(ParameterStore& store, const std::string& prefix, const MhcConfig& cfg,
                     Initializer& init);
MixWeights bind(ParamBinder& params, const std::string& prefix);

// exp(logits), then `iters` passes of row normalisation followed by column
// normalisation. Gradients flow through every pass.
ad::Var sinkhorn(ad::Var logits, int iters);
TransportMatrix sinkhorn_normalize(const Tensor& logits, int iters);

// h_out = sum_i post_i * (M * streams)_i + update, streams_i = pre_i * h_in.
ad::Var mhc_route(ad::Var h_in, ad::Var update, const MixWeights& w, int iters);

}  // namespace lpcsm::mhc
