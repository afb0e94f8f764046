#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>

#include "error.hpp"
#include "mhc.hpp"
#include "test_support.hpp"

using namespace lpcsm;
using namespace lpcsm::mhc;
using lpcsm::testing::normal_tensor;

namespace {

Tensor route(const Tensor& h, const Tensor& u, const Tensor& pre, const Tensor& post,
             const Tensor& logits, int iters) {
  ad::Tape tape;
  MixWeights w{tape.constant(pre), tape.constant(post), tape.constant(logits)};
  return mhc_route(tape.constant(h), tape.constant(u), w, iters).value();
}

}  // namespace

TEST(Sinkhorn, ZeroLogitsGiveUniform) {
  Tensor m = sinkhorn_normalize(Tensor(Shape{2, 2}), 5).matrix;
  for (double v : m.data()) EXPECT_EQ(v, 0.5);
}

TEST(Sinkhorn, DominantDiagonalApproachesIdentity) {
  Tensor logits(Shape{3, 3});
  for (std::size_t i = 0; i < 3; ++i) logits.at(i, i) = 50.0;
  Tensor m = sinkhorn_normalize(logits, 20).matrix;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(m.at(i, j), i == j ? 1.0 : 0.0, 1e-12);
}

TEST(Sinkhorn, RandomLogitsBecomeDoublyStochastic) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t s = 2 + rng() % 4;
    Tensor m = sinkhorn_normalize(normal_tensor(rng, Shape{s, s}), 50).matrix;
    for (std::size_t i = 0; i < s; ++i) {
      double row = 0.0, col = 0.0;
      for (std::size_t j = 0; j < s; ++j) {
        row += m.at(i, j);
        col += m.at(j, i);
        EXPECT_GT(m.at(i, j), 0.0);
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
      EXPECT_NEAR(col, 1.0, 1e-12);
    }
  }
}

TEST(Sinkhorn, Errors) {
  EXPECT_THROW(sinkhorn_normalize(Tensor(Shape{2, 3}), 3), Error);
  EXPECT_THROW(sinkhorn_normalize(Tensor(Shape{2, 2}), 0), Error);
  Tensor bad(Shape{2, 2});
  bad[1] = std::numeric_limits<double>::infinity();
  EXPECT_THROW(sinkhorn_normalize(bad, 3), Error);
}

TEST(Sinkhorn, GradientCheck) {
  std::mt19937_64 rng(2);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const std::size_t s = 2 + rng() % 3;
    auto report = lpcsm::testing::check_op([](auto& v) { return sinkhorn(v[0], 7); },
                                           {normal_tensor(rng, Shape{s, s})}, seed);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
  }
}

TEST(MhcRoute, DegenerateWeightsGivePlainResidual) {
  std::mt19937_64 rng(3);
  Tensor logits(Shape{4, 4});
  for (std::size_t i = 0; i < 4; ++i) logits.at(i, i) = 50.0;
  for (int trial = 0; trial < 20; ++trial) {
    Tensor h = normal_tensor(rng, Shape{5, 6}), u = normal_tensor(rng, Shape{5, 6});
    Tensor out = route(h, u, Tensor::vector({1, 0, 0, 0}), Tensor::vector({1, 0, 0, 0}), logits, 20);
    for (std::size_t i = 0; i < out.numel(); ++i) EXPECT_NEAR(out[i], h[i] + u[i], 1e-12);
  }
}

TEST(MhcRoute, UniformTransportExample) {
  // pre (1,1), post (1/2,1/2), M = 1/2 everywhere: out = h + u.
  Tensor h = Tensor::matrix(1, 2, {2, -1});
  Tensor u = Tensor::matrix(1, 2, {0.5, 0.25});
  Tensor out = route(h, u, Tensor::vector({1, 1}), Tensor::vector({0.5, 0.5}), Tensor(Shape{2, 2}), 3);
  EXPECT_EQ(out[0], 2.5);
  EXPECT_EQ(out[1], -0.75);
}

TEST(MhcRoute, MatchesDirectMatrixEvaluation) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t s = 2 + rng() % 4;
    Tensor pre = normal_tensor(rng, Shape{s}), post = normal_tensor(rng, Shape{s});
    Tensor logits = normal_tensor(rng, Shape{s, s});
    Tensor h = normal_tensor(rng, Shape{3, 4}), u = normal_tensor(rng, Shape{3, 4});
    Tensor m = sinkhorn_normalize(logits, 9).matrix;
    double coef = 0.0;  // sum_i post_i sum_j M_ij pre_j
    for (std::size_t i = 0; i < s; ++i)
      for (std::size_t j = 0; j < s; ++j) coef += post[i] * m.at(i, j) * pre[j];
    Tensor out = route(h, u, pre, post, logits, 9);
    for (std::size_t k = 0; k < out.numel(); ++k) EXPECT_NEAR(out[k], u[k] + coef * h[k], 1e-12);
  }
}

TEST(MhcRoute, Errors) {
  Tensor h(Shape{2, 3});
  EXPECT_THROW(route(h, h, Tensor::vector({1}), Tensor::vector({1}), Tensor(Shape{1, 1}), 2), Error);
  EXPECT_THROW(route(h, h, Tensor::vector({1, 1}), Tensor::vector({1, 1, 1}), Tensor(Shape{2, 2}), 2), Error);
  EXPECT_THROW(route(h, Tensor(Shape{2, 2}), Tensor::vector({1, 1}), Tensor::vector({1, 1}), Tensor(Shape{2, 2}), 2), Error);
}

TEST(MhcRoute, GradientCheck) {
  std::mt19937_64 rng(5);
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    auto report = lpcsm::testing::check_op(
        [](auto& v) { return mhc_route(v[0], v[1], MixWeights{v[2], v[3], v[4]}, 5); },
        {normal_tensor(rng, Shape{2, 3}), normal_tensor(rng, Shape{2, 3}), normal_tensor(rng, Shape{3}),
         normal_tensor(rng, Shape{3}), normal_tensor(rng, Shape{3, 3})},
        seed);
    EXPECT_TRUE(report.pass) << report.max_rel_error;
  }
}

TEST(MhcInit, NonDegenerateAtStart) {
  ParameterStore s;
  Initializer init(7);
  MhcConfig cfg;
  init_parameters(s, "mhc", cfg, init);
  EXPECT_EQ(s.value("mhc.pre").numel(), 4u);
  EXPECT_EQ(s.value("mhc.transport").shape(), (Shape{4, 4}));
  double spread = 0.0;
  for (double v : s.value("mhc.pre").data()) spread += std::abs(v - 1.0);
  EXPECT_GT(spread, 0.0);
}
