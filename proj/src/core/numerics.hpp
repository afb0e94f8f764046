#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "autodiff.hpp"
#include "tensor.hpp"

namespace lpcsm {

// Named tensors in insertion order. Iteration order is part of the
// checkpoint format and of optimizer determinism.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    bool trainable = true;
  };

  void add(std::string name, Tensor value, bool trainable = true);
  bool contains(std::string_view name) const;
  const Entry& entry(std::string_view name) const;
  Tensor& value(std::string_view name);
  const Tensor& value(std::string_view name) const;
  void set_trainable(std::string_view name, bool trainable);

  std::size_t size() const noexcept { return entries_.size(); }
  std::size_t total_elements() const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }

  bool bit_equal(const ParameterStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Places parameters on a tape lazily, one node per name.
class ParamBinder {
 public:
  ParamBinder(ad::Tape& tape, const ParameterStore& store) : tape_(tape), store_(store) {}

  ad::Var get(std::string_view name);
  bool has(std::string_view name) const { return store_.contains(name); }
  ad::Tape& tape() noexcept { return tape_; }

 private:
  ad::Tape& tape_;
  const ParameterStore& store_;
  std::unordered_map<std::string, ad::Var> bound_;
};

// y = gain * x / sqrt(mean(x^2) + eps), row-wise over the last axis.
ad::Var rmsnorm(ad::Var x, ad::Var gain, double eps);

struct GradReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t coordinates_checked = 0;
  double epsilon = 0.0;
  bool pass = false;
  std::vector<std::pair<std::string, double>> per_parameter;
};

struct GradCheckOptions {
  double eps = 1e-5;
  double tol = 1e-4;
  // 0 checks every coordinate; otherwise a seeded sample of at most this many
  // coordinates per tensor.
  std::size_t max_coords_per_tensor = 0;
  std::uint64_t seed = 0;
};

// Builds the scalar loss on the given tape from the given parameters.
using LossBuilder = std::function<ad::Var(ad::Tape&, const ParameterStore&)>;

// Compares reverse-mode gradients of every trainable parameter against
// central differences. Relative error is |a-n| / max(1, |a|, |n|).
GradReport grad_check(const LossBuilder& loss, const ParameterStore& params,
                      const GradCheckOptions& options);

// Evaluates the loss without recording gradients for anyone else.
double evaluate_loss(const LossBuilder& loss, const ParameterStore& params);

}  // namespace lpcsm
