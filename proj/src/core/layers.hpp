#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "autodiff.hpp"
#include "numerics.hpp"

namespace lpcsm {

// Seeded parameter initialisation.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor normal(Shape shape, double stddev) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> dist(0.0, stddev);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = dist(rng_);
    return t;
  }

  // Adds prefix.weight ~ N(0, 1/in) and, optionally, a zero prefix.bias.
  void linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
              bool with_bias = true, double gain = 1.0) {
    store.add(prefix + ".weight",
              normal(Shape{in, out}, gain / std::sqrt(static_cast<double>(in))));
    if (with_bias) store.add(prefix + ".bias", Tensor(Shape{out}));
  }

  void mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t hidden,
           std::size_t out) {
    linear(store, prefix + ".fc1", in, hidden);
    linear(store, prefix + ".fc2", hidden, out);
  }

 private:
  std::mt19937_64 rng_;
};

// x W + b with W stored [in x out].
struct Linear {
  ad::Var weight;
  ad::Var bias;  // unbound when the layer has no bias

  ad::Var operator()(ad::Var x) const {
    ad::Var y = ad::matmul(x, weight);
    return bias.valid() ? ad::add(y, bias) : y;
  }

  static Linear bind(ParamBinder& binder, const std::string& prefix) {
    Linear l;
    l.weight = binder.get(prefix + ".weight");
    if (binder.has(prefix + ".bias")) l.bias = binder.get(prefix + ".bias");
    return l;
  }
};

// Two-layer tanh perceptron.
struct Mlp {
  Linear fc1;
  Linear fc2;

  ad::Var operator()(ad::Var x) const { return fc2(ad::tanh(fc1(x))); }

  static Mlp bind(ParamBinder& binder, const std::string& prefix) {
    return Mlp{Linear::bind(binder, prefix + ".fc1"), Linear::bind(binder, prefix + ".fc2")};
  }
};

// Row-matrix view of a vector: [n] -> [1 x n]. Matrices pass through.
inline ad::Var as_row(ad::Var v) {
  return v.value().rank() <= 1 ? ad::reshape(v, Shape{1, v.value().numel()}) : v;
}

}  // namespace lpcsm
