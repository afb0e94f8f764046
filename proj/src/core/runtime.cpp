#include "runtime.hpp"

#include <algorithm>
#include <cmath>

#include "attention.hpp"
#include "controller.hpp"
#include "correction.hpp"
#include "error.hpp"
#include "memory.hpp"
#include "model.hpp"

namespace lpcsm::runtime {

namespace {

Tensor stack(const std::deque<Tensor>& rows) {
  const std::size_t d = rows.front().numel();
  std::vector<double> data;
  data.reserve(rows.size() * d);
  for (const auto& r : rows) data.insert(data.end(), r.data().begin(), r.data().end());
  return Tensor(Shape{rows.size(), d}, std::move(data));
}

ad::Var decode_layer(ad::Var h, int layer, LayerCache& lc, ParamBinder& params,
                     const ModelConfig& cfg) {
  const std::string p = model::layer_prefix(layer);
  ad::Tape& tape = params.tape();
  try {
    ad::Var n = rmsnorm(h, params.get(p + ".norm1.gain"), cfg.norm_eps);

    lc.history.push_back(n.value());
    if (lc.history.size() > static_cast<std::size_t>(cfg.window)) lc.history.pop_front();
    const attention::AttentionConfig acfg{cfg.window, cfg.heads, cfg.head_dim(), cfg.latent_dim};
    ad::Var hist = tape.constant(stack(lc.history));
    attention::Projections proj = attention::project(hist, acfg, params, p + ".attn");
    const std::size_t m = lc.history.size();
    proj.q = ad::slice_rows(proj.q, m - 1, m);
    ad::Var a = attention::attend(proj, std::vector<std::uint8_t>(m, 1), acfg, params,
                                  p + ".attn", false)
                    .read;

    memory::FastGates gates = memory::fast_gates(n, params, p + ".mem");
    memory::FastState fast =
        memory::fast_step(gates.decay, gates.write, {tape.constant(lc.fast)});
    memory::SlowState slow{tape.constant(lc.slow), lc.chunk_index};
    ad::Var r = memory::memory_read(n, fast.value, slow.value, params, p + ".mem").value;
    lc.fast = fast.value.value();

    if (cfg.toggles.slow_memory) {
      memory::ChunkAccumulator acc{lc.chunk_count > 0 ? tape.constant(lc.chunk_sum) : ad::Var{},
                                   lc.chunk_count, cfg.chunk_size};
      acc = memory::accumulate(acc, fast);
      if (acc.full()) {
        slow = memory::slow_write(n, acc, slow, cfg.alpha_n, cfg.toggles.ont, params, p + ".mem");
        lc.slow = slow.value.value();
        lc.chunk_index = slow.chunk_index;
        lc.chunk_count = 0;
        lc.chunk_sum = Tensor::zeros_like(lc.fast);
      } else {
        lc.chunk_sum = acc.running_sum.value();
        lc.chunk_count = acc.count;
      }
    }

    ad::Var corrected;
    if (cfg.toggles.predictive_coding) {
      auto pred = correction::predict_and_refine(a, r, n, cfg.refine_steps, params, p + ".corr");
      auto stats = correction::error_stats(n, pred.estimate);
      lc.errors.push_back(stats.per_token_error_norm.item());
      auto ctrl = controller::bind(params, p + ".ctrl", cfg.controller);
      ad::Var errs = tape.constant(Tensor(Shape{lc.errors.size(), 1}, lc.errors));
      auto mask = controller::causal_event_mask(errs, ctrl);
      const double last = mask.mask.value()[lc.errors.size() - 1];
      corrected = ad::mul(pred.estimate, tape.constant(Tensor(Shape{1, 1}, last)));
    }
    return model::residual_ffn(params, p, cfg, h, model::fuse(params, p, a, r, corrected));
  } catch (const Error& e) {
    throw Error(e.code(), "layer " + std::to_string(layer) + ": " + e.what());
  }
}

}  // namespace

bool DecodeCache::bit_equal(const DecodeCache& other) const {
  if (position != other.position || layers.size() != other.layers.size()) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.history.size() != b.history.size() || a.chunk_index != b.chunk_index ||
        a.chunk_count != b.chunk_count || a.errors != b.errors)
      return false;
    for (std::size_t i = 0; i < a.history.size(); ++i)
      if (!a.history[i].bit_equal(b.history[i])) return false;
    if (!a.fast.bit_equal(b.fast) || !a.slow.bit_equal(b.slow) || !a.chunk_sum.bit_equal(b.chunk_sum))
      return false;
  }
  return true;
}

DecodeCache init_cache(const ModelConfig& cfg) {
  cfg.validate();
  DecodeCache cache;
  const auto d = static_cast<std::size_t>(cfg.width);
  for (int l = 0; l < cfg.layers; ++l) {
    LayerCache lc;
    lc.fast = Tensor(Shape{1, d});
    lc.slow = Tensor(Shape{1, d});
    lc.chunk_sum = Tensor(Shape{1, d});
    cache.layers.push_back(std::move(lc));
  }
  return cache;
}

StepLogits step_decode(int token, DecodeCache& cache, const ParameterStore& params,
                       const ModelConfig& cfg) {
  require(cache.layers.size() == static_cast<std::size_t>(cfg.layers), ErrorCode::kState,
          "decode cache was built for a different layer count");
  require(cache.position < static_cast<std::size_t>(cfg.max_seq_len), ErrorCode::kInvalidArgument,
          "decode position " + std::to_string(cache.position) + " reaches max_seq_len");
  // Work on a copy so a failing step leaves the caller's cache untouched.
  DecodeCache next = cache;
  ad::Tape tape;
  ParamBinder binder(tape, params);
  const int tok[1] = {token};
  ad::Var h = model::embed(binder, tok, next.position, cfg);
  for (int l = 0; l < cfg.layers; ++l) {
    h = decode_layer(h, l, next.layers[static_cast<std::size_t>(l)], binder, cfg);
  }
  model::Logits logits = model::heads(binder, cfg, h);
  next.position += 1;
  cache = std::move(next);

  StepLogits out;
  out.lm = logits.lm.value().reshaped(Shape{static_cast<std::size_t>(cfg.vocab_size)});
  if (logits.stop.valid()) out.stop = logits.stop.item();
  return out;
}

Generation generate(std::span<const int> prompt, int max_new, const ParameterStore& params,
                    const ModelConfig& cfg, const StopPolicy& policy) {
  require(!prompt.empty(), ErrorCode::kInvalidArgument, "generate: empty prompt");
  require(max_new >= 0, ErrorCode::kInvalidArgument, "generate: max_new must be nonnegative");
  if (policy.stop_threshold) {
    require(cfg.toggles.stop_head, ErrorCode::kInvalidArgument,
            "stop threshold requires the stop head");
  }
  Generation g{std::vector<int>(prompt.begin(), prompt.end()), init_cache(cfg)};
  if (max_new == 0) return g;

  StepLogits last;
  for (int t : prompt) last = step_decode(t, g.cache, params, cfg);
  for (int i = 0; i < max_new; ++i) {
    const auto lm = last.lm.data();
    const int next = static_cast<int>(std::max_element(lm.begin(), lm.end()) - lm.begin());
    g.tokens.push_back(next);
    if (policy.eos_token && next == *policy.eos_token) break;
    if (policy.stop_threshold && last.stop &&
        1.0 / (1.0 + std::exp(-*last.stop)) > *policy.stop_threshold)
      break;
    if (i + 1 == max_new) break;
    if (g.cache.position >= static_cast<std::size_t>(cfg.max_seq_len)) break;
    last = step_decode(next, g.cache, params, cfg);
  }
  return g;
}

}  // namespace lpcsm::runtime
