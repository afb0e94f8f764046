#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tensor.hpp"

namespace lpcsm::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape() const noexcept { return tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  double item() const;

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

// Reverse-mode recording context. One tape per forward/backward pair; a tape
// is never shared between threads.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  Var parameter(std::string name, Tensor value, bool trainable);
  Var record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> parents, BackwardFn fn);

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool needs_grad(std::size_t id) const { return nodes_[id].needs_grad; }
  // Gradient accumulator for a node, zero-initialised on first access.
  Tensor& grad(std::size_t id);

  // Runs the reverse sweep from a scalar root and returns the gradient of
  // every trainable parameter the root depends on. Frozen and unreachable
  // parameters are absent from the map.
  GradMap backward(Var root);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool needs_grad = false;
    bool is_parameter = false;
    std::string name;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;
  bool swept_ = false;
};

// Elementwise arithmetic with matrix-view broadcasting: each operand's row
// and column extents must either match or be 1.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var maximum(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double k);
Var add_scalar(Var a, double k);

Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
// sqrt(0) has gradient 0 rather than +inf.
Var sqrt(Var a);
Var reciprocal(Var a);
Var square(Var a);

Var matmul(Var a, Var b);
Var transpose(Var a);
Var reshape(Var a, Shape shape);
Var concat_cols(std::span<const Var> parts);
Var concat_rows(std::span<const Var> parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);

Var sum(Var a);
Var mean(Var a);
Var row_sum(Var a);   // [R x C] -> [R x 1]
Var row_mean(Var a);  // [R x C] -> [R x 1]

// Row-wise softmax over the last axis. When `allowed` is given (row-major,
// same size as a) only allowed entries receive probability mass; every row
// must allow at least one entry.
Var softmax_rows(Var a, const std::vector<std::uint8_t>* allowed = nullptr);

Var gather_rows(Var table, std::span<const int> indices);

// Mean over rows of -log softmax(logits)[target].
Var cross_entropy(Var logits, std::span<const int> targets);
// Mean binary cross-entropy of logits against {0,1} targets.
Var bce_with_logits(Var logits, std::span<const double> targets);

// Linearly interpolated `level` quantile of all entries of x (scalar).
Var quantile(Var x, Var level);

// For each row t of a square matrix, the linearly interpolated `level`
// quantile of entries 0..t of that row. Returns [T x 1].
Var causal_row_quantile(Var scores, Var level);

}  // namespace lpcsm::ad
