#include "autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "error.hpp"

namespace lpcsm::ad {

const Tensor& Var::value() const {
  require(valid(), ErrorCode::kState, "use of an unbound Var");
  return tape_->value(id_);
}

double Var::item() const {
  const Tensor& v = value();
  require(v.numel() == 1, ErrorCode::kShapeMismatch,
          "item() on non-scalar tensor " + shape_to_string(v.shape()));
  return v[0];
}

Var Tape::constant(Tensor value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(std::string name, Tensor value, bool trainable) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = trainable;
  node.is_parameter = true;
  node.name = std::move(name);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  return record(std::move(value), std::span<const Var>(parents.begin(), parents.size()),
                std::move(fn));
}

Var Tape::record(Tensor value, std::span<const Var> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (const Var& p : parents) {
    require(p.tape() == this, ErrorCode::kState, "operands recorded on different tapes");
    node.needs_grad = node.needs_grad || nodes_[p.id()].needs_grad;
  }
  if (node.needs_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

GradMap Tape::backward(Var root) {
  require(root.tape() == this, ErrorCode::kState, "root belongs to another tape");
  require(root.value().numel() == 1, ErrorCode::kShapeMismatch,
          "backward requires a scalar root, got " + shape_to_string(root.shape()));
  require(!swept_, ErrorCode::kState, "tape has already been swept");
  swept_ = true;
  grad(root.id())[0] = 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
  GradMap out;
  for (Node& n : nodes_) {
    if (n.is_parameter && n.needs_grad && n.has_grad) {
      auto [it, inserted] = out.emplace(n.name, n.grad);
      if (!inserted) {
        for (std::size_t k = 0; k < n.grad.numel(); ++k) it->second[k] += n.grad[k];
      }
    }
  }
  return out;
}

namespace {

Tape& tape_of(Var a, Var b) {
  require(a.tape() == b.tape() && a.valid(), ErrorCode::kState,
          "operands recorded on different tapes");
  return *a.tape();
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t ar, ac, br, bc;
  Shape shape;
};

Broadcast broadcast(const Tensor& a, const Tensor& b, const char* op) {
  Broadcast r{};
  r.ar = a.rows();
  r.ac = a.cols();
  r.br = b.rows();
  r.bc = b.cols();
  auto merge = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    fail(ErrorCode::kShapeMismatch, std::string(op) + ": cannot broadcast " +
                                        shape_to_string(a.shape()) + " with " +
                                        shape_to_string(b.shape()));
  };
  r.rows = merge(r.ar, r.br);
  r.cols = merge(r.ac, r.bc);
  if (r.rows == r.ar && r.cols == r.ac && a.numel() >= b.numel()) {
    r.shape = a.shape();
  } else if (r.rows == r.br && r.cols == r.bc) {
    r.shape = b.shape();
  } else {
    r.shape = Shape{r.rows, r.cols};
  }
  return r;
}

// Elementwise binary op. f(x, y) is the value; da(x, y, z) and db(x, y, z)
// are the partial derivatives given the output z.
template <class F, class DA, class DB>
Var binary(Var a, Var b, const char* name, F f, DA da, DB db) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  const Broadcast bc = broadcast(x, y, name);
  Tensor out(bc.shape);
  const bool same = x.numel() == y.numel() && bc.ar == bc.br && bc.ac == bc.bc;
  if (same) {
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = f(x[i], y[i]);
  } else {
    for (std::size_t i = 0; i < bc.rows; ++i) {
      const std::size_t xi = (bc.ar == 1 ? 0 : i) * bc.ac;
      const std::size_t yi = (bc.br == 1 ? 0 : i) * bc.bc;
      for (std::size_t j = 0; j < bc.cols; ++j) {
        out[i * bc.cols + j] = f(x[xi + (bc.ac == 1 ? 0 : j)], y[yi + (bc.bc == 1 ? 0 : j)]);
      }
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, bc, same, da, db](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& z = t.value(self);
    const Tensor& x = t.value(ia);
    const Tensor& y = t.value(ib);
    const bool need_a = t.needs_grad(ia);
    const bool need_b = t.needs_grad(ib);
    Tensor* gx = need_a ? &t.grad(ia) : nullptr;
    Tensor* gy = need_b ? &t.grad(ib) : nullptr;
    if (same) {
      for (std::size_t i = 0; i < g.numel(); ++i) {
        if (gx) (*gx)[i] += g[i] * da(x[i], y[i], z[i]);
        if (gy) (*gy)[i] += g[i] * db(x[i], y[i], z[i]);
      }
      return;
    }
    for (std::size_t i = 0; i < bc.rows; ++i) {
      const std::size_t xi = (bc.ar == 1 ? 0 : i) * bc.ac;
      const std::size_t yi = (bc.br == 1 ? 0 : i) * bc.bc;
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t o = i * bc.cols + j;
        const std::size_t xo = xi + (bc.ac == 1 ? 0 : j);
        const std::size_t yo = yi + (bc.bc == 1 ? 0 : j);
        if (gx) (*gx)[xo] += g[o] * da(x[xo], y[yo], z[o]);
        if (gy) (*gy)[yo] += g[o] * db(x[xo], y[yo], z[o]);
      }
    }
  });
}

// d(x, z) is the derivative given input x and output z.
template <class F, class D>
Var unary(Var a, F f, D d) {
  Tape& tape = *a.tape();
  const Tensor& x = a.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
  const std::size_t ia = a.id();
  return tape.record(std::move(out), {a}, [ia, d](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& z = t.value(self);
    const Tensor& x = t.value(ia);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i] * d(x[i], z[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double z) { return -z / y; });
}

Var maximum(Var a, Var b) {
  // Ties send the gradient to the first operand.
  return binary(
      a, b, "maximum", [](double x, double y) { return x >= y ? x : y; },
      [](double x, double y, double) { return x >= y ? 1.0 : 0.0; },
      [](double x, double y, double) { return x >= y ? 0.0 : 1.0; });
}

Var neg(Var a) {
  return unary(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(Var a, double k) {
  return unary(a, [k](double x) { return k * x; }, [k](double, double) { return k; });
}

Var add_scalar(Var a, double k) {
  return unary(a, [k](double x) { return x + k; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary(a, [](double x) { return std::tanh(x); },
               [](double, double z) { return 1.0 - z * z; });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double z) { return z * (1.0 - z); });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double z) { return z; });
}

Var log(Var a) {
  for (double x : a.value().data()) {
    require(x > 0.0, ErrorCode::kNumeric, "log: non-positive input " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  for (double x : a.value().data()) {
    require(x >= 0.0, ErrorCode::kNumeric, "sqrt: negative input " + std::to_string(x));
  }
  return unary(a, [](double x) { return std::sqrt(x); },
               [](double, double z) { return z > 0.0 ? 0.5 / z : 0.0; });
}

Var reciprocal(Var a) {
  return unary(a, [](double x) { return 1.0 / x; }, [](double, double z) { return -z * z; });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var matmul(Var a, Var b) {
  Tape& tape = tape_of(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require(x.rank() == 2 && y.rank() == 2, ErrorCode::kShapeMismatch,
          "matmul expects matrices, got " + shape_to_string(x.shape()) + " and " +
              shape_to_string(y.shape()));
  const std::size_t n = x.rows(), k = x.cols(), m = y.cols();
  require(y.rows() == k, ErrorCode::kShapeMismatch,
          "matmul inner extents differ: " + shape_to_string(x.shape()) + " * " +
              shape_to_string(y.shape()));
  Tensor out(Shape{n, m});
  {
    const double* xp = x.data().data();
    const double* yp = y.data().data();
    double* op = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
      double* orow = op + i * m;
      for (std::size_t p = 0; p < k; ++p) {
        const double s = xp[i * k + p];
        const double* yrow = yp + p * m;
        for (std::size_t j = 0; j < m; ++j) orow[j] += s * yrow[j];
      }
    }
  }
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(std::move(out), {a, b}, [ia, ib, n, k, m](Tape& t, std::size_t self) {
    const double* gp = t.grad(self).data().data();
    const double* xp = t.value(ia).data().data();
    const double* yp = t.value(ib).data().data();
    if (t.needs_grad(ia)) {
      double* gx = t.grad(ia).data().data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = gp + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double* yrow = yp + p * m;
          double s = 0.0;
          for (std::size_t j = 0; j < m; ++j) s += grow[j] * yrow[j];
          gx[i * k + p] += s;
        }
      }
    }
    if (t.needs_grad(ib)) {
      double* gy = t.grad(ib).data().data();
      for (std::size_t i = 0; i < n; ++i) {
        const double* grow = gp + i * m;
        for (std::size_t p = 0; p < k; ++p) {
          const double s = xp[i * k + p];
          double* gyrow = gy + p * m;
          for (std::size_t j = 0; j < m; ++j) gyrow[j] += s * grow[j];
        }
      }
    }
  });
}

Var transpose(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x[i * c + j];
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

Var reshape(Var a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
  });
}

Var concat_cols(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_cols of nothing");
  Tape& tape = *parts[0].tape();
  const std::size_t r = parts[0].rows();
  std::vector<std::size_t> ids, widths;
  std::size_t total = 0;
  for (const Var& p : parts) {
    require(p.tape() == &tape, ErrorCode::kState, "operands recorded on different tapes");
    require(p.rows() == r, ErrorCode::kShapeMismatch, "concat_cols: row counts differ");
    ids.push_back(p.id());
    widths.push_back(p.cols());
    total += p.cols();
  }
  Tensor out(parts[0].value().rank() <= 1 ? Shape{total} : Shape{r, total});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& x = parts[k].value();
    const std::size_t w = widths[k];
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(x.data().data() + i * w, w, out.data().data() + i * total + offset);
    offset += w;
  }
  return tape.record(std::move(out), parts, [ids, widths, r, total](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const std::size_t w = widths[k];
      if (t.needs_grad(ids[k])) {
        Tensor& gx = t.grad(ids[k]);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) gx[i * w + j] += g[i * total + offset + j];
      }
      offset += w;
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  require(!parts.empty(), ErrorCode::kInvalidArgument, "concat_rows of nothing");
  Tape& tape = *parts[0].tape();
  const std::size_t c = parts[0].cols();
  std::vector<std::size_t> ids, sizes;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    require(p.tape() == &tape, ErrorCode::kState, "operands recorded on different tapes");
    require(p.cols() == c, ErrorCode::kShapeMismatch, "concat_rows: column counts differ");
    ids.push_back(p.id());
    sizes.push_back(p.value().numel());
    rows += p.rows();
  }
  std::vector<double> data;
  data.reserve(rows * c);
  for (const Var& p : parts) {
    const auto v = p.value().data();
    data.insert(data.end(), v.begin(), v.end());
  }
  Tensor out(Shape{rows, c}, std::move(data));
  return tape.record(std::move(out), parts, [ids, sizes](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.needs_grad(ids[k])) {
        Tensor& gx = t.grad(ids[k]);
        for (std::size_t i = 0; i < sizes[k]; ++i) gx[i] += g[offset + i];
      }
      offset += sizes[k];
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  require(begin < end && end <= c, ErrorCode::kShapeMismatch,
          "slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
              shape_to_string(x.shape()));
  const std::size_t w = end - begin;
  Tensor out(x.rank() <= 1 ? Shape{w} : Shape{r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.data().data() + i * c + begin, w, out.data().data() + i * w);
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c, w, begin](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  require(begin < end && end <= r, ErrorCode::kShapeMismatch,
          "slice_rows [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
              shape_to_string(x.shape()));
  Tensor out(Shape{end - begin, c},
             std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                                 x.data().begin() + static_cast<std::ptrdiff_t>(end * c)));
  const std::size_t ia = a.id();
  const std::size_t offset = begin * c;
  return a.tape()->record(std::move(out), {a}, [ia, offset](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < g.numel(); ++i) gx[offset + i] += g[i];
  });
}

Var sum(Var a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (double v : x.data()) s += v;
  const std::size_t ia = a.id();
  return a.tape()->record(Tensor::scalar(s), {a}, [ia](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < gx.numel(); ++i) gx[i] += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().numel())); }

Var row_sum(Var a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out(Shape{r, 1});
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j];
    out[i] = s;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
  });
}

Var row_mean(Var a) { return scale(row_sum(a), 1.0 / static_cast<double>(a.cols())); }

Var softmax_rows(Var a, const std::vector<std::uint8_t>* allowed) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (allowed) {
    require(allowed->size() == x.numel(), ErrorCode::kShapeMismatch,
            "softmax_rows: mask size differs from input");
  }
  Tensor out(x.shape());
  for (std::size_t i = 0; i < r; ++i) {
    const double* xr = x.data().data() + i * c;
    double* yr = out.data().data() + i * c;
    const std::uint8_t* mr = allowed ? allowed->data() + i * c : nullptr;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j)
      if (!mr || mr[j]) mx = std::max(mx, xr[j]);
    require(std::isfinite(mx), ErrorCode::kNumeric, "softmax_rows: row without admissible entries");
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      yr[j] = (!mr || mr[j]) ? std::exp(xr[j] - mx) : 0.0;
      s += yr[j];
    }
    for (std::size_t j = 0; j < c; ++j) yr[j] /= s;
  }
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), {a}, [ia, r, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(ia);
    for (std::size_t i = 0; i < r; ++i) {
      double dotgy = 0.0;
      for (std::size_t j = 0; j < c; ++j) dotgy += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dotgy);
    }
  });
}

Var gather_rows(Var table, std::span<const int> indices) {
  const Tensor& w = table.value();
  const std::size_t v = w.rows(), c = w.cols();
  std::vector<int> idx(indices.begin(), indices.end());
  require(!idx.empty(), ErrorCode::kInvalidArgument, "gather_rows: no indices");
  Tensor out(Shape{idx.size(), c});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && static_cast<std::size_t>(idx[i]) < v, ErrorCode::kInvalidArgument,
            "gather_rows: index " + std::to_string(idx[i]) + " out of range [0," +
                std::to_string(v) + ")");
    std::copy_n(w.data().data() + static_cast<std::size_t>(idx[i]) * c, c,
                out.data().data() + i * c);
  }
  const std::size_t it = table.id();
  return table.tape()->record(std::move(out), {table}, [it, idx, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gw = t.grad(it);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t j = 0; j < c; ++j)
        gw[static_cast<std::size_t>(idx[i]) * c + j] += g[i * c + j];
  });
}

Var cross_entropy(Var logits, std::span<const int> targets) {
  const Tensor& x = logits.value();
  const std::size_t r = x.rows(), c = x.cols();
  require(targets.size() == r, ErrorCode::kShapeMismatch,
          "cross_entropy: " + std::to_string(targets.size()) + " targets for " +
              std::to_string(r) + " rows");
  std::vector<int> tgt(targets.begin(), targets.end());
  Tensor probs(Shape{r, c});
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    require(tgt[i] >= 0 && static_cast<std::size_t>(tgt[i]) < c, ErrorCode::kInvalidArgument,
            "cross_entropy: target " + std::to_string(tgt[i]) + " outside vocabulary");
    const double* xr = x.data().data() + i * c;
    double mx = xr[0];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(xr[j] - mx);
      s += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= s;
    total += -(xr[static_cast<std::size_t>(tgt[i])] - mx - std::log(s));
  }
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(total / static_cast<double>(r)), {logits},
      [il, tgt, probs = std::move(probs), r, c](Tape& t, std::size_t self) {
        const double g = t.grad(self)[0] / static_cast<double>(r);
        Tensor& gx = t.grad(il);
        for (std::size_t i = 0; i < r; ++i) {
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g * probs[i * c + j];
          gx[i * c + static_cast<std::size_t>(tgt[i])] -= g;
        }
      });
}

Var bce_with_logits(Var logits, std::span<const double> targets) {
  const Tensor& x = logits.value();
  const std::size_t n = x.numel();
  require(targets.size() == n, ErrorCode::kShapeMismatch, "bce_with_logits: target count mismatch");
  std::vector<double> y(targets.begin(), targets.end());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    total += std::max(v, 0.0) - v * y[i] + std::log1p(std::exp(-std::abs(v)));
  }
  const std::size_t il = logits.id();
  return logits.tape()->record(Tensor::scalar(total / static_cast<double>(n)), {logits},
                               [il, y, n](Tape& t, std::size_t self) {
                                 const double g = t.grad(self)[0] / static_cast<double>(n);
                                 const Tensor& x = t.value(il);
                                 Tensor& gx = t.grad(il);
                                 for (std::size_t i = 0; i < n; ++i)
                                   gx[i] += g * (stable_sigmoid(x[i]) - y[i]);
                               });
}

Var causal_row_quantile(Var scores, Var level) {
  Tape& tape = tape_of(scores, level);
  const Tensor& s = scores.value();
  const std::size_t n = s.rows();
  require(s.cols() == n, ErrorCode::kShapeMismatch,
          "causal_row_quantile expects a square matrix, got " + shape_to_string(s.shape()));
  const double q = level.item();
  require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "quantile level outside [0,1]");
  struct Pick {
    std::size_t lo, hi;
    double frac;
  };
  std::vector<Pick> picks(n);
  Tensor out(Shape{n, 1});
  std::vector<std::size_t> order;
  for (std::size_t t = 0; t < n; ++t) {
    const double* row = s.data().data() + t * n;
    order.resize(t + 1);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [row](std::size_t a, std::size_t b) {
      return row[a] < row[b] || (row[a] == row[b] && a < b);
    });
    const double pos = q * static_cast<double>(t);
    const auto lo_rank = std::min(static_cast<std::size_t>(std::floor(pos)), t);
    const auto hi_rank = std::min(lo_rank + 1, t);
    const double frac = pos - static_cast<double>(lo_rank);
    picks[t] = {order[lo_rank], order[hi_rank], frac};
    out[t] = row[order[lo_rank]] + frac * (row[order[hi_rank]] - row[order[lo_rank]]);
  }
  const std::size_t is = scores.id(), il = level.id();
  return tape.record(std::move(out), {scores, level}, [is, il, n, picks](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& s = t.value(is);
    if (t.needs_grad(is)) {
      Tensor& gs = t.grad(is);
      for (std::size_t r = 0; r < n; ++r) {
        gs[r * n + picks[r].lo] += g[r] * (1.0 - picks[r].frac);
        gs[r * n + picks[r].hi] += g[r] * picks[r].frac;
      }
    }
    if (t.needs_grad(il)) {
      double acc = 0.0;
      for (std::size_t r = 0; r < n; ++r) {
        if (picks[r].hi == picks[r].lo) continue;
        acc += g[r] * static_cast<double>(r) * (s[r * n + picks[r].hi] - s[r * n + picks[r].lo]);
      }
      t.grad(il)[0] += acc;
    }
  });
}

}  // namespace lpcsm::ad

namespace lpcsm::ad {

Var quantile(Var x, Var level) {
  Tape& tape = tape_of(x, level);
  const Tensor& v = x.value();
  const double q = level.item();
  require(q >= 0.0 && q <= 1.0, ErrorCode::kInvalidArgument, "quantile level outside [0,1]");
  const std::size_t n = v.numel();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&v](std::size_t a, std::size_t b) { return v[a] < v[b] || (v[a] == v[b] && a < b); });
  const double pos = q * static_cast<double>(n - 1);
  const auto lo_rank = std::min(static_cast<std::size_t>(std::floor(pos)), n - 1);
  const auto hi_rank = std::min(lo_rank + 1, n - 1);
  const double frac = pos - static_cast<double>(lo_rank);
  const std::size_t lo = order[lo_rank], hi = order[hi_rank];
  const double out = v[lo] + frac * (v[hi] - v[lo]);
  const std::size_t ix = x.id(), il = level.id();
  return tape.record(Tensor::scalar(out), {x, level}, [ix, il, lo, hi, frac, n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    if (t.needs_grad(ix)) {
      Tensor& gx = t.grad(ix);
      gx[lo] += g * (1.0 - frac);
      gx[hi] += g * frac;
    }
    if (t.needs_grad(il) && hi != lo) {
      const Tensor& v = t.value(ix);
      t.grad(il)[0] += g * static_cast<double>(n - 1) * (v[hi] - v[lo]);
    }
  });
}

}  // namespace lpcsm::ad
