#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "error.hpp"
#include "model.hpp"
#include "model_oracle.hpp"
#include "objective.hpp"
#include "test_support.hpp"

using namespace lpcsm;
using lpcsm::testing::random_tokens;
using lpcsm::testing::tiny_model;
using lpcsm::testing::toggles_from_bits;

namespace {

Tensor logits_of(const ParameterStore& p, const ModelConfig& cfg, const std::vector<int>& tokens) {
  ad::Tape tape;
  return model::model_forward(tape, p, cfg, tokens).logits.lm.value();
}

// Moves ratio_raw off its initial value, whose quantile level can sit on a
// kink of the interpolated quantile.
void jitter_ratio(ParameterStore& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.3, 1.3);
  for (auto& e : p.entries())
    if (e.name.find("ratio_raw") != std::string::npos) e.value[0] = u(rng);
}

}  // namespace

TEST(Model, MatchesStraightLineOracle) {
  std::mt19937_64 rng(1);
  for (unsigned bits = 0; bits < 32; ++bits) {
    ModelConfig cfg = tiny_model(8, 2);
    cfg.toggles = toggles_from_bits(bits);
    if (bits % 3 == 0) cfg.latent_dim = 3;
    ParameterStore p = model::init_parameters(cfg, bits);
    jitter_ratio(p, rng);
    auto tokens = random_tokens(rng, 11, cfg.vocab_size);
    ad::Tape tape;
    auto r = model::model_forward(tape, p, cfg, tokens);
    auto want = lpcsm::testing::oracle::forward(p, cfg, tokens);
    const Tensor& lm = r.logits.lm.value();
    double worst = 0.0;
    for (std::size_t t = 0; t < tokens.size(); ++t)
      for (std::size_t v = 0; v < 12; ++v) worst = std::max(worst, std::abs(lm.at(t, v) - want.lm[t][v]));
    EXPECT_LE(worst, 1e-10) << "toggle bits " << bits;
    if (cfg.toggles.stop_head) {
      for (std::size_t t = 0; t < tokens.size(); ++t)
        EXPECT_NEAR(r.logits.stop.value()[t], want.stop[t], 1e-10);
    } else {
      EXPECT_FALSE(r.logits.stop.valid());
    }
  }
}

TEST(Model, OutputShapes) {
  ModelConfig cfg = tiny_model();
  ParameterStore p = model::init_parameters(cfg, 2);
  ad::Tape tape;
  std::vector<int> tokens{1, 2, 3, 4, 5};
  auto r = model::model_forward(tape, p, cfg, tokens);
  EXPECT_EQ(r.logits.lm.shape(), (Shape{5, 12}));
  EXPECT_EQ(r.logits.stop.shape(), (Shape{5}));
  ASSERT_EQ(r.aux.size(), 2u);
  EXPECT_EQ(r.aux[0].write_count, 1);
  EXPECT_EQ(r.aux[0].hard_mask.numel(), 5u);
}

TEST(Model, Causal) {
  std::mt19937_64 rng(3);
  for (unsigned bits : {0u, 31u, 7u, 19u}) {
    ModelConfig cfg = tiny_model();
    cfg.toggles = toggles_from_bits(bits);
    ParameterStore p = model::init_parameters(cfg, bits);
    for (int trial = 0; trial < 5; ++trial) {
      auto tokens = random_tokens(rng, 14, cfg.vocab_size);
      const std::size_t j = rng() % tokens.size();
      auto other = tokens;
      other[j] = (other[j] + 1) % cfg.vocab_size;
      Tensor a = logits_of(p, cfg, tokens), b = logits_of(p, cfg, other);
      for (std::size_t t = 0; t < j; ++t)
        for (std::size_t v = 0; v < 12; ++v) EXPECT_EQ(a.at(t, v), b.at(t, v));
    }
  }
}

TEST(Model, DeterministicBitForBit) {
  ModelConfig cfg = tiny_model();
  ParameterStore p1 = model::init_parameters(cfg, 9), p2 = model::init_parameters(cfg, 9);
  EXPECT_TRUE(p1.bit_equal(p2));
  std::vector<int> tokens{3, 1, 4, 1, 5, 9, 2, 6};
  EXPECT_TRUE(logits_of(p1, cfg, tokens).bit_equal(logits_of(p2, cfg, tokens)));
  ParameterStore p3 = model::init_parameters(cfg, 10);
  EXPECT_FALSE(p1.bit_equal(p3));
}

TEST(Model, ZeroLayersIsEmbeddingThroughHeads) {
  ModelConfig cfg = tiny_model(8, 0);
  ParameterStore p = model::init_parameters(cfg, 4);
  std::vector<int> tokens{0, 5, 7};
  auto want = lpcsm::testing::oracle::forward(p, cfg, tokens);
  Tensor got = logits_of(p, cfg, tokens);
  for (std::size_t t = 0; t < 3; ++t)
    for (std::size_t v = 0; v < 12; ++v) EXPECT_NEAR(got.at(t, v), want.lm[t][v], 1e-13);
}

TEST(Model, ChunkLengthSequenceWritesOnce) {
  ModelConfig cfg = tiny_model();
  cfg.chunk_size = 6;
  ParameterStore p = model::init_parameters(cfg, 5);
  ad::Tape tape;
  std::vector<int> tokens{1, 2, 3, 4, 5, 6};
  auto r = model::model_forward(tape, p, cfg, tokens);
  for (const auto& aux : r.aux) {
    EXPECT_EQ(aux.write_count, 1);
    EXPECT_EQ(aux.write_positions, std::vector<int>{5});
    // Every token reads the slow state before the write, which is zero.
    for (double v : aux.slow_trace.data()) EXPECT_EQ(v, 0.0);
    double moved = 0.0;
    for (double v : aux.slow_final.value().data()) moved += std::abs(v);
    EXPECT_GT(moved, 0.0);
  }
}

TEST(Model, TogglesChangeLogits) {
  ModelConfig base = tiny_model();
  std::vector<int> tokens{1, 2, 3, 4, 5, 6, 7, 8};
  ParameterStore pb = model::init_parameters(base, 6);
  const Tensor full = logits_of(pb, base, tokens);
  for (unsigned bit = 0; bit < 5; ++bit) {
    if (bit == 3) continue;  // the stop head does not touch LM logits
    ModelConfig cfg = base;
    cfg.toggles = toggles_from_bits(31u & ~(1u << bit));
    ParameterStore p = model::init_parameters(cfg, 6);
    EXPECT_FALSE(logits_of(p, cfg, tokens).bit_equal(full)) << "bit " << bit;
  }
}

TEST(Model, ZeroBlockUpdatesReduceToEmbeddingPath) {
  ModelConfig cfg = tiny_model();
  cfg.toggles.mhc = false;
  ParameterStore p = model::init_parameters(cfg, 7);
  for (auto& e : p.entries()) {
    const bool fuse = e.name.find(".fuse.") != std::string::npos;
    const bool ffn_out = e.name.find(".ffn.fc2.") != std::string::npos;
    if (fuse || ffn_out) e.value = Tensor::zeros_like(e.value);
  }
  ModelConfig none = cfg;
  none.layers = 0;
  ParameterStore p0 = model::init_parameters(none, 0);
  for (auto& e : p0.entries()) e.value = p.value(e.name);
  std::vector<int> tokens{2, 4, 6, 8, 10};
  EXPECT_TRUE(logits_of(p, cfg, tokens).bit_equal(logits_of(p0, none, tokens)));
}

TEST(Model, ParameterLayoutFollowsToggles) {
  ModelConfig cfg = tiny_model();
  cfg.toggles = toggles_from_bits(0);
  ParameterStore p = model::init_parameters(cfg, 1);
  for (const auto& e : p.entries()) {
    EXPECT_EQ(e.name.find("mhc"), std::string::npos);
    EXPECT_EQ(e.name.find("corr"), std::string::npos);
    EXPECT_EQ(e.name.find("ctrl"), std::string::npos);
    EXPECT_EQ(e.name.find("slow"), std::string::npos);
    EXPECT_EQ(e.name.find("stop_head"), std::string::npos);
  }
  EXPECT_EQ(p.value("layers.0.fuse.weight").shape(), (Shape{32, 16}));
}

TEST(Model, InputErrors) {
  ModelConfig cfg = tiny_model();
  ParameterStore p = model::init_parameters(cfg, 1);
  ad::Tape tape;
  EXPECT_THROW(model::model_forward(tape, p, cfg, std::vector<int>{}), Error);
  EXPECT_THROW(model::model_forward(tape, p, cfg, std::vector<int>{1, 12}), Error);
  EXPECT_THROW(model::model_forward(tape, p, cfg, std::vector<int>(65, 1)), Error);
  std::vector<controller::FrozenMask> wrong(1);
  model::ForwardOptions o{&wrong};
  EXPECT_THROW(model::model_forward(tape, p, cfg, std::vector<int>{1, 2}, o), Error);
}

TEST(Model, GradientCheckAcrossToggles) {
  std::mt19937_64 rng(8);
  for (unsigned bits : {0u, 1u, 3u, 7u, 31u, 26u, 21u}) {
    ModelConfig cfg = tiny_model(4, 1);
    cfg.heads = 2;
    cfg.window = 3;
    cfg.chunk_size = 2;
    cfg.vocab_size = 6;
    cfg.toggles = toggles_from_bits(bits);
    if (bits == 26u) cfg.latent_dim = 2;
    ParameterStore p = model::init_parameters(cfg, bits + 100);
    jitter_ratio(p, rng);
    auto tokens = random_tokens(rng, 5, cfg.vocab_size);
    std::vector<int> targets(tokens.begin() + 1, tokens.end());
    targets.push_back(cfg.eos_token());
    LossWeights w;
    std::vector<controller::FrozenMask> frozen;
    {
      ad::Tape tape;
      frozen = model::freeze_masks(model::model_forward(tape, p, cfg, tokens));
    }
    LossBuilder loss = [&](ad::Tape& tape, const ParameterStore& ps) {
      return objective::sequence_loss(tape, ps, cfg, w, tokens, targets, {&frozen}).total;
    };
    GradCheckOptions o;
    o.max_coords_per_tensor = 6;
    o.seed = bits;
    GradReport r = grad_check(loss, p, o);
    EXPECT_TRUE(r.pass) << "bits " << bits << ": " << r.worst_parameter << " " << r.max_rel_error;
  }
}
