#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "autodiff.hpp"
#include "config.hpp"
#include "numerics.hpp"
#include "tensor.hpp"

namespace lpcsm::testing {

inline Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = u(rng);
  return t;
}

inline Tensor normal_tensor(std::mt19937_64& rng, Shape shape, double stddev = 1.0) {
  std::normal_distribution<double> n(0.0, stddev);
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = n(rng);
  return t;
}

// Finite-difference check of an op over the given inputs. The loss is
// sum(op(inputs) * W) for a fixed random W, so every output coordinate
// carries a distinct upstream gradient.
inline GradReport check_op(const std::function<ad::Var(std::vector<ad::Var>&)>& op,
                           const std::vector<Tensor>& inputs, std::uint64_t seed,
                           double tol = 1e-5) {
  ParameterStore store;
  for (std::size_t i = 0; i < inputs.size(); ++i) store.add("x" + std::to_string(i), inputs[i]);
  Tensor weights;
  {
    ad::Tape probe;
    ParamBinder b(probe, store);
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(b.get("x" + std::to_string(i)));
    const Shape out_shape = op(vars).shape();
    std::mt19937_64 rng(seed ^ 0x5eedULL);
    weights = random_tensor(rng, out_shape, -1.0, 1.0);
  }
  LossBuilder loss = [&](ad::Tape& tape, const ParameterStore& ps) {
    ParamBinder b(tape, ps);
    std::vector<ad::Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(b.get("x" + std::to_string(i)));
    ad::Var out = op(vars);
    return ad::sum(ad::mul(out, tape.constant(weights)));
  };
  GradCheckOptions opts;
  opts.tol = tol;
  return grad_check(loss, store, opts);
}

inline ModelConfig tiny_model(int width = 16, int layers = 2) {
  ModelConfig c;
  c.vocab_size = 12;
  c.width = width;
  c.layers = layers;
  c.window = 4;
  c.heads = 2;
  c.chunk_size = 3;
  c.refine_steps = 2;
  c.max_seq_len = 64;
  c.mhc.iters = 6;
  return c;
}

inline Toggles toggles_from_bits(unsigned bits) {
  Toggles t;
  t.slow_memory = bits & 1u;
  t.predictive_coding = bits & 2u;
  t.ont = bits & 4u;
  t.stop_head = bits & 8u;
  t.mhc = bits & 16u;
  return t;
}

inline std::vector<int> random_tokens(std::mt19937_64& rng, std::size_t n, int vocab) {
  std::uniform_int_distribution<int> d(0, vocab - 1);
  std::vector<int> t(n);
  for (auto& x : t) x = d(rng);
  return t;
}

}  // namespace lpcsm::testing
