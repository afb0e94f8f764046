#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "memory.hpp"
#include "model.hpp"
#include "ont.hpp"
#include "test_support.hpp"

using namespace lpcsm;
using namespace lpcsm::memory;
using lpcsm::testing::normal_tensor;

namespace {

ParameterStore params(std::size_t d, bool slow, std::uint64_t seed) {
  ParameterStore s;
  Initializer init(seed);
  init_parameters(s, "mem", d, slow, init);
  return s;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Row vector x times stored [in x out] weight plus bias.
std::vector<double> affine(const ParameterStore& s, const std::string& name,
                           std::span<const double> x) {
  const Tensor& w = s.value(name + ".weight");
  std::vector<double> y(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    for (std::size_t i = 0; i < w.rows(); ++i) y[j] += x[i] * w.at(i, j);
    if (s.contains(name + ".bias")) y[j] += s.value(name + ".bias")[j];
  }
  return y;
}

ChunkAccumulator fill(ad::Tape& tape, const std::vector<Tensor>& rows, int chunk) {
  ChunkAccumulator acc{{}, 0, chunk};
  for (const auto& r : rows) acc = accumulate(acc, FastState{tape.constant(r)});
  return acc;
}

}  // namespace

TEST(Memory, ZeroWeightsHalvePreviousState) {
  ParameterStore s = params(3, true, 1);
  for (auto& e : s.entries()) e.value = Tensor::zeros_like(e.value);
  ad::Tape tape;
  ParamBinder b(tape, s);
  FastState prev{tape.constant(Tensor::matrix(1, 3, {2, -4, 0.5}))};
  FastState next = fast_update(tape.constant(Tensor::matrix(1, 3, {1, 2, 3})), prev, b, "mem");
  EXPECT_EQ(next.value.value()[0], 1.0);
  EXPECT_EQ(next.value.value()[1], -2.0);
  EXPECT_EQ(next.value.value()[2], 0.25);
}

TEST(Memory, SaturatedDecayWritesCandidate) {
  ParameterStore s = params(2, false, 2);
  s.value("mem.decay.weight") = Tensor(Shape{2, 2});
  s.value("mem.decay.bias") = Tensor::vector({-60, -60});
  ad::Tape tape;
  ParamBinder b(tape, s);
  Tensor h = Tensor::matrix(1, 2, {0.4, -0.9});
  FastState next = fast_update(tape.constant(h), FastState{tape.constant(Tensor::matrix(1, 2, {5, 5}))}, b, "mem");
  auto u = affine(s, "mem.write", h.data());
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(next.value.value()[j], std::tanh(u[j]), 1e-12);
}

TEST(Memory, FastUpdateMatchesFormula) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore s = params(5, true, trial);
    Tensor h = normal_tensor(rng, Shape{1, 5});
    Tensor m = normal_tensor(rng, Shape{1, 5});
    ad::Tape tape;
    ParamBinder b(tape, s);
    Tensor got = fast_update(tape.constant(h), FastState{tape.constant(m)}, b, "mem").value.value();
    auto dz = affine(s, "mem.decay", h.data());
    auto uz = affine(s, "mem.write", h.data());
    for (std::size_t j = 0; j < 5; ++j) {
      const double dj = sigmoid(dz[j]);
      EXPECT_NEAR(got[j], dj * m[j] + (1 - dj) * std::tanh(uz[j]), 1e-13);
    }
  }
}

TEST(Memory, ReadMatchesFormula) {
  std::mt19937_64 rng(4);
  for (bool slow_enabled : {true, false}) {
    ParameterStore s = params(4, slow_enabled, 4);
    Tensor h = normal_tensor(rng, Shape{1, 4});
    Tensor f = normal_tensor(rng, Shape{1, 4});
    Tensor sl = normal_tensor(rng, Shape{1, 4});
    ad::Tape tape;
    ParamBinder b(tape, s);
    Tensor got = memory_read(tape.constant(h), tape.constant(f), tape.constant(sl), b, "mem").value.value();
    auto qf = affine(s, "mem.query_fast", h.data());
    std::vector<double> cat(8, 0.0);
    for (std::size_t j = 0; j < 4; ++j) cat[j] = sigmoid(qf[j]) * f[j];
    if (slow_enabled) {
      auto qs = affine(s, "mem.query_slow", h.data());
      for (std::size_t j = 0; j < 4; ++j) cat[4 + j] = sigmoid(qs[j]) * sl[j];
    }
    auto want = affine(s, "mem.read", cat);
    for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(got[j], want[j], 1e-13);
  }
}

TEST(Memory, AccumulateAndMean) {
  ad::Tape tape;
  ChunkAccumulator acc = fill(tape, {Tensor::matrix(1, 2, {1, 2}), Tensor::matrix(1, 2, {3, 6})}, 2);
  EXPECT_EQ(acc.count, 2);
  EXPECT_TRUE(acc.full());
  Tensor mean = chunk_mean(acc).value();
  EXPECT_EQ(mean[0], 2.0);
  EXPECT_EQ(mean[1], 4.0);
  EXPECT_THROW(accumulate(acc, FastState{tape.constant(Tensor::matrix(1, 2, {0, 0}))}), Error);
  EXPECT_THROW(chunk_mean(ChunkAccumulator{{}, 0, 2}), Error);

  ChunkAccumulator one = fill(tape, {Tensor::matrix(1, 3, {7, -1, 0.5})}, 4);
  EXPECT_FALSE(one.full());
  EXPECT_TRUE(chunk_mean(one).value().bit_equal(Tensor::matrix(1, 3, {7, -1, 0.5})));
}

TEST(Memory, SlowWriteMatchesFormula) {
  std::mt19937_64 rng(5);
  for (bool ont_on : {true, false}) {
    ParameterStore s = params(4, true, 5);
    ad::Tape tape;
    ParamBinder b(tape, s);
    Tensor r1 = normal_tensor(rng, Shape{1, 4}), r2 = normal_tensor(rng, Shape{1, 4});
    Tensor prev = normal_tensor(rng, Shape{1, 4}), hb = normal_tensor(rng, Shape{1, 4});
    ChunkAccumulator acc = fill(tape, {r1, r2}, 2);
    ad::Var transported;
    SlowState next = slow_write(tape.constant(hb), acc, SlowState{tape.constant(prev), 3}, 0.5,
                                ont_on, b, "mem", &transported);
    EXPECT_EQ(next.chunk_index, 4);
    Tensor c(Shape{4});
    for (std::size_t j = 0; j < 4; ++j) c[j] = (r1[j] + r2[j]) * 0.5;
    Tensor target = ont_on ? ont::ont_transport(0.5, c, prev.reshaped(Shape{4})).transported : c;
    EXPECT_LE(max_abs_diff(transported.value().reshaped(Shape{4}), target), 1e-14);
    auto uz = affine(s, "mem.slow_write", target.data());
    auto gz = affine(s, "mem.slow_gate", hb.data());
    for (std::size_t j = 0; j < 4; ++j) {
      const double g = sigmoid(gz[j]);
      EXPECT_NEAR(next.value.value()[j], g * prev[j] + (1 - g) * std::tanh(uz[j]), 1e-13);
    }
  }
}

TEST(Memory, ZeroAlphaTransportEqualsPlainWrite) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    ParameterStore s = params(5, true, trial);
    ad::Tape tape;
    ParamBinder b(tape, s);
    ChunkAccumulator acc = fill(tape, {normal_tensor(rng, Shape{1, 5}), normal_tensor(rng, Shape{1, 5})}, 2);
    SlowState prev{tape.constant(trial % 4 == 0 ? Tensor(Shape{1, 5}) : normal_tensor(rng, Shape{1, 5})), 0};
    ad::Var hb = tape.constant(normal_tensor(rng, Shape{1, 5}));
    Tensor a = slow_write(hb, acc, prev, 0.0, true, b, "mem").value.value();
    Tensor c = slow_write(hb, acc, prev, 0.0, false, b, "mem").value.value();
    EXPECT_TRUE(a.bit_equal(c));
  }
}

TEST(Memory, TransportPreservesAlignedComponent) {
  // <T, m> == <c, m>: the write only amplifies what is orthogonal to memory.
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    ParameterStore s = params(6, true, trial);
    ad::Tape tape;
    ParamBinder b(tape, s);
    Tensor c = normal_tensor(rng, Shape{1, 6});
    Tensor m = normal_tensor(rng, Shape{1, 6});
    ChunkAccumulator acc = fill(tape, {c}, 1);
    ad::Var transported;
    slow_write(tape.constant(c), acc, SlowState{tape.constant(m), 0}, 1.7, true, b, "mem", &transported);
    const double want = dot(c.data(), m.data());
    EXPECT_NEAR(dot(transported.value().data(), m.data()), want, 1e-11 * (1 + std::abs(want)));
  }
}

TEST(Memory, StatesStayBounded) {
  // Both states are convex combinations of the previous state and a tanh
  // candidate, so starting inside [-1, 1] they never leave it.
  std::mt19937_64 rng(8);
  ParameterStore s = params(4, true, 8);
  ad::Tape tape;
  ParamBinder b(tape, s);
  FastState fast{tape.constant(Tensor(Shape{1, 4}))};
  SlowState slow{tape.constant(Tensor(Shape{1, 4})), 0};
  ChunkAccumulator acc{{}, 0, 3};
  for (int t = 0; t < 200; ++t) {
    ad::Var h = tape.constant(normal_tensor(rng, Shape{1, 4}, 5.0));
    fast = fast_update(h, fast, b, "mem");
    acc = accumulate(acc, fast);
    if (acc.full()) {
      slow = slow_write(h, acc, slow, 3.0, true, b, "mem");
      acc = ChunkAccumulator{{}, 0, 3};
    }
    for (double v : fast.value.value().data()) EXPECT_LE(std::abs(v), 1.0);
    for (double v : slow.value.value().data()) EXPECT_LE(std::abs(v), 1.0);
  }
  EXPECT_EQ(slow.chunk_index, 66);
}

TEST(Memory, BlockWritesOncePerFullChunk) {
  ModelConfig cfg = lpcsm::testing::tiny_model(8, 1);
  std::mt19937_64 rng(9);
  for (int chunk : {1, 3, 4, 7}) {
    for (std::size_t T : {1u, 6u, 13u}) {
      cfg.chunk_size = chunk;
      ParameterStore p = model::init_parameters(cfg, 1);
      ad::Tape tape;
      auto r = model::model_forward(tape, p, cfg, lpcsm::testing::random_tokens(rng, T, cfg.vocab_size));
      EXPECT_EQ(r.aux[0].write_count, static_cast<int>(T) / chunk);
      for (int pos : r.aux[0].write_positions) EXPECT_EQ((pos + 1) % chunk, 0);
    }
  }
}

TEST(Memory, ChainGradientCheck) {
  // Gradients through several fast steps, a chunk mean, the transport and a
  // slow write, reaching every memory parameter.
  std::mt19937_64 rng(10);
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    ParameterStore s = params(3, true, seed);
    s.add("h", normal_tensor(rng, Shape{4, 3}));
    s.add("slow0", normal_tensor(rng, Shape{1, 3}, 0.5));
    Tensor w = normal_tensor(rng, Shape{4, 3});
    LossBuilder loss = [&](ad::Tape& tape, const ParameterStore& ps) {
      ParamBinder b(tape, ps);
      ad::Var h = b.get("h");
      FastState fast{tape.constant(Tensor(Shape{1, 3}))};
      SlowState slow{b.get("slow0"), 0};
      ChunkAccumulator acc{{}, 0, 2};
      std::vector<ad::Var> fr, sr;
      for (std::size_t t = 0; t < 4; ++t) {
        ad::Var row = ad::slice_rows(h, t, t + 1);
        fast = fast_update(row, fast, b, "mem");
        fr.push_back(fast.value);
        sr.push_back(slow.value);
        acc = accumulate(acc, fast);
        if (acc.full()) {
          slow = slow_write(row, acc, slow, 0.8, true, b, "mem");
          acc = ChunkAccumulator{{}, 0, 2};
        }
      }
      ad::Var r = memory_read(h, ad::concat_rows(fr), ad::concat_rows(sr), b, "mem").value;
      return ad::add(ad::sum(ad::mul(r, tape.constant(w))), ad::sum(slow.value));
    };
    GradReport rep = grad_check(loss, s, {});
    EXPECT_TRUE(rep.pass) << rep.worst_parameter << " " << rep.max_rel_error;
  }
}
