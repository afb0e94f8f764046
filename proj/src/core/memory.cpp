#include "memory.hpp"

#include "error.hpp"
#include "ont.hpp"

namespace lpcsm::memory {

void init_parameters(ParameterStore& store, const std::string& prefix, std::size_t width,
                     bool slow_memory, Initializer& init) {
  init.linear(store, prefix + ".decay", width, width);
  init.linear(store, prefix + ".write", width, width);
  init.linear(store, prefix + ".query_fast", width, width);
  init.linear(store, prefix + ".read", 2 * width, width);
  if (slow_memory) {
    init.linear(store, prefix + ".query_slow", width, width);
    init.linear(store, prefix + ".slow_gate", width, width);
    init.linear(store, prefix + ".slow_write", width, width);
  }
}

FastGates fast_gates(ad::Var h, ParamBinder& params, const std::string& prefix) {
  h = as_row(h);
  return {ad::sigmoid(Linear::bind(params, prefix + ".decay")(h)),
          ad::tanh(Linear::bind(params, prefix + ".write")(h))};
}

FastState fast_step(ad::Var decay_row, ad::Var write_row, const FastState& prev) {
  require(decay_row.value().numel() == prev.value.value().numel(), ErrorCode::kShapeMismatch,
          "fast_update: state width differs from gate width");
  ad::Var keep = ad::mul(decay_row, prev.value);
  ad::Var fresh = ad::mul(ad::add_scalar(ad::neg(decay_row), 1.0), write_row);
  return {ad::add(keep, fresh)};
}

FastState fast_update(ad::Var h, const FastState& prev, ParamBinder& params,
                      const std::string& prefix) {
  FastGates g = fast_gates(h, params, prefix);
  return fast_step(g.decay, g.write, FastState{as_row(prev.value)});
}

MemoryReadout memory_read(ad::Var h, ad::Var fast, ad::Var slow, ParamBinder& params,
                          const std::string& prefix) {
  h = as_row(h);
  fast = as_row(fast);
  slow = as_row(slow);
  require(fast.rows() == h.rows() && slow.rows() == h.rows(), ErrorCode::kShapeMismatch,
          "memory_read: row counts of h, fast and slow differ");
  ad::Var qf = ad::sigmoid(Linear::bind(params, prefix + ".query_fast")(h));
  ad::Var fast_half = ad::mul(qf, fast);
  ad::Var slow_half;
  if (params.has(prefix + ".query_slow.weight")) {
    slow_half = ad::mul(ad::sigmoid(Linear::bind(params, prefix + ".query_slow")(h)), slow);
  } else {
    slow_half = h.tape()->constant(Tensor(fast_half.shape()));
  }
  const ad::Var halves[] = {fast_half, slow_half};
  return {Linear::bind(params, prefix + ".read")(ad::concat_cols(halves))};
}

ChunkAccumulator accumulate(const ChunkAccumulator& acc, const FastState& fast) {
  require(acc.count < acc.chunk_size, ErrorCode::kState,
          "accumulate: chunk is full; flush before accumulating");
  ChunkAccumulator next = acc;
  next.running_sum = acc.count == 0 ? fast.value : ad::add(acc.running_sum, fast.value);
  next.count = acc.count + 1;
  return next;
}

ad::Var chunk_mean(const ChunkAccumulator& acc) {
  require(acc.count >= 1, ErrorCode::kState, "chunk mean of an empty accumulator");
  return ad::scale(acc.running_sum, 1.0 / static_cast<double>(acc.count));
}

SlowState slow_write(ad::Var h_boundary, const ChunkAccumulator& acc, const SlowState& slow,
                     double alpha_n, bool ont_enabled, ParamBinder& params,
                     const std::string& prefix, ad::Var* transported) {
  ad::Var c = chunk_mean(acc);
  ad::Var target = ont_enabled ? ont::transport(alpha_n, c, slow.value) : c;
  if (transported) *transported = target;
  ad::Var candidate = ad::tanh(Linear::bind(params, prefix + ".slow_write")(target));
  ad::Var gate = ad::sigmoid(Linear::bind(params, prefix + ".slow_gate")(as_row(h_boundary)));
  ad::Var keep = ad::mul(gate, slow.value);
  ad::Var fresh = ad::mul(ad::add_scalar(ad::neg(gate), 1.0), candidate);
  return {ad::add(keep, fresh), slow.chunk_index + 1};
}

}  // namespace lpcsm::memory
