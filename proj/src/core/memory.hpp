#pragma once

#include <string>

#include "autodiff.hpp"
#include "layers.hpp"
#include "numerics.hpp"

// Dual-timescale memory. The fast state is a gated recurrence updated every
// token; the slow state is written once per chunk from the chunk mean of the
// fast state, optionally transported by ONT against the previous slow state.
namespace lpcsm::memory {

struct FastState {
  ad::Var value;  // [1 x d]
};

struct SlowState {
  ad::Var value;  // [1 x d]
  int chunk_index = 0;
};

struct ChunkAccumulator {
  ad::Var running_sum;  // unbound while count == 0
  int count = 0;
  int chunk_size = 1;

  bool full() const { return count >= chunk_size; }
};

struct MemoryReadout {
  ad::Var value;  // [rows x d]
};

// Parameter layout under `prefix` (all [d x d] unless noted):
//   decay, write            fast gate W_d and candidate W_u
//   query_fast              W_qf
//   read                    W_r [2d x d]
//   query_slow, slow_gate, slow_write   only with slow memory
void init_parameters(ParameterStore& store, const std::string& prefix, std::size_t width,
                     bool slow_memory, Initializer& init);

struct FastGates {
  ad::Var decay;  // d = sigma(W_d h)
  ad::Var write;  // u = tanh(W_u h)
};

// Gates for every row of h at once.
FastGates fast_gates(ad::Var h, ParamBinder& params, const std::string& prefix);
// m' = d * m + (1 - d) * u for one row.
FastState fast_step(ad::Var decay_row, ad::Var write_row, const FastState& prev);
FastState fast_update(ad::Var h, const FastState& prev, ParamBinder& params, const std::string& prefix);

// r = W_r [ sigma(W_qf h) * fast || sigma(W_qs h) * slow ], row-wise. Without
// query_slow parameters the slow half is zero.
MemoryReadout memory_read(ad::Var h, ad::Var fast, ad::Var slow, ParamBinder& params,
                          const std::string& prefix);

ChunkAccumulator accumulate(const ChunkAccumulator& acc, const FastState& fast);
ad::Var chunk_mean(const ChunkAccumulator& acc);

// c = chunk mean, c* = ONT(alpha, c, slow) if enabled else c,
// u = tanh(W_c c*), g = sigma(W_g h), slow' = g * slow + (1 - g) * u.
SlowState slow_write(ad::Var h_boundary, const ChunkAccumulator& acc, const SlowState& slow,
                     double alpha_n, bool ont_enabled, ParamBinder& params,
                     const std::string& prefix, ad::Var* transported = nullptr);

}  // namespace lpcsm::memory
