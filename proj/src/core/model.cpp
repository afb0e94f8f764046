#include "model.hpp"

#include <cmath>

#include "attention.hpp"
#include "correction.hpp"
#include "error.hpp"
#include "layers.hpp"
#include "memory.hpp"
#include "mhc.hpp"

namespace lpcsm::model {

namespace {

attention::AttentionConfig attention_config(const ModelConfig& cfg) {
  return {cfg.window, cfg.heads, cfg.head_dim(), cfg.latent_dim};
}

Tensor stack_rows(const std::vector<ad::Var>& rows) {
  const std::size_t c = rows.front().cols();
  std::vector<double> data;
  data.reserve(rows.size() * c);
  for (const auto& r : rows) data.insert(data.end(), r.value().data().begin(), r.value().data().end());
  return Tensor(Shape{rows.size(), c}, std::move(data));
}

}  // namespace

std::string layer_prefix(int layer) { return "layers." + std::to_string(layer); }

ParameterStore init_parameters(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Initializer init(seed);
  ParameterStore store;
  const auto d = static_cast<std::size_t>(cfg.width);
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  store.add("embed.token", init.normal(Shape{v, d}, 1.0));
  store.add("embed.position",
            init.normal(Shape{static_cast<std::size_t>(cfg.max_seq_len), d}, 1.0));
  for (int l = 0; l < cfg.layers; ++l) {
    const std::string p = layer_prefix(l);
    store.add(p + ".norm1.gain", Tensor(Shape{d}, 1.0));
    attention::init_parameters(store, p + ".attn", attention_config(cfg), init);
    memory::init_parameters(store, p + ".mem", d, cfg.toggles.slow_memory, init);
    if (cfg.toggles.predictive_coding) {
      correction::init_parameters(store, p + ".corr", d, init);
      controller::init_parameters(store, p + ".ctrl", cfg.controller);
    }
    init.linear(store, p + ".fuse", (cfg.toggles.predictive_coding ? 3 : 2) * d, d);
    store.add(p + ".norm2.gain", Tensor(Shape{d}, 1.0));
    init.mlp(store, p + ".ffn", d, 4 * d, d);
    if (cfg.toggles.mhc) mhc::init_parameters(store, p + ".mhc", cfg.mhc, init);
  }
  store.add("final_norm.gain", Tensor(Shape{d}, 1.0));
  store.add("lm_head.weight", init.normal(Shape{d, v}, 1.0 / std::sqrt(static_cast<double>(d))));
  store.add("lm_head.bias", Tensor(Shape{v}));
  if (cfg.toggles.stop_head) {
    store.add("stop_head.weight", init.normal(Shape{d, 1}, 0.02));
    store.add("stop_head.bias", Tensor(Shape{1}));
  }
  return store;
}

ad::Var embed(ParamBinder& params, std::span<const int> tokens, std::size_t first_position,
              const ModelConfig& cfg) {
  require(!tokens.empty(), ErrorCode::kInvalidArgument, "empty token sequence");
  require(first_position + tokens.size() <= static_cast<std::size_t>(cfg.max_seq_len),
          ErrorCode::kInvalidArgument,
          "sequence of length " + std::to_string(first_position + tokens.size()) +
              " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  for (int t : tokens) {
    require(t >= 0 && t < cfg.vocab_size, ErrorCode::kInvalidArgument,
            "token " + std::to_string(t) + " outside vocabulary");
  }
  std::vector<int> positions(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) positions[i] = static_cast<int>(first_position + i);
  return ad::add(ad::gather_rows(params.get("embed.token"), tokens),
                 ad::gather_rows(params.get("embed.position"), positions));
}

ad::Var fuse(ParamBinder& params, const std::string& prefix, ad::Var attn, ad::Var read,
             ad::Var corrected) {
  std::vector<ad::Var> parts{attn, read};
  if (corrected.valid()) parts.push_back(corrected);
  return Linear::bind(params, prefix + ".fuse")(ad::concat_cols(parts));
}

ad::Var residual_ffn(ParamBinder& params, const std::string& prefix, const ModelConfig& cfg,
                     ad::Var h, ad::Var fused) {
  ad::Var mid = ad::add(h, fused);
  ad::Var update =
      Mlp::bind(params, prefix + ".ffn")(rmsnorm(mid, params.get(prefix + ".norm2.gain"), cfg.norm_eps));
  if (cfg.toggles.mhc) return mhc::mhc_route(mid, update, mhc::bind(params, prefix + ".mhc"), cfg.mhc.iters);
  return ad::add(mid, update);
}

Logits heads(ParamBinder& params, const ModelConfig& cfg, ad::Var hidden) {
  ad::Var x = rmsnorm(hidden, params.get("final_norm.gain"), cfg.norm_eps);
  Logits out;
  out.lm = Linear::bind(params, "lm_head")(x);
  if (cfg.toggles.stop_head) {
    ad::Var s = Linear::bind(params, "stop_head")(x);
    out.stop = ad::reshape(s, Shape{s.rows()});
  }
  return out;
}

BlockOutput block_forward(ad::Var h, int layer, ParamBinder& params, const ModelConfig& cfg,
                          const controller::FrozenMask* frozen) {
  const std::string p = layer_prefix(layer);
  ad::Tape& tape = *h.tape();
  const std::size_t T = h.rows();
  const auto d = static_cast<std::size_t>(cfg.width);
  require(T >= 1, ErrorCode::kInvalidArgument, "block_forward: empty sequence");
  try {
    BlockOutput out;
    LayerAux& aux = out.aux;
    ad::Var n = rmsnorm(h, params.get(p + ".norm1.gain"), cfg.norm_eps);

    const auto acfg = attention_config(cfg);
    ad::Var a = acfg.latent_dim ? attention::latent_attention(n, acfg, params, p + ".attn").read
                                : attention::local_attention(n, acfg, params, p + ".attn").read;

    memory::FastGates gates = memory::fast_gates(n, params, p + ".mem");
    memory::FastState fast{tape.constant(Tensor(Shape{1, d}))};
    memory::SlowState slow{tape.constant(Tensor(Shape{1, d})), 0};
    memory::ChunkAccumulator acc{{}, 0, cfg.chunk_size};
    std::vector<ad::Var> fast_rows, slow_rows;
    fast_rows.reserve(T);
    slow_rows.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      fast = memory::fast_step(ad::slice_rows(gates.decay, t, t + 1),
                               ad::slice_rows(gates.write, t, t + 1), fast);
      fast_rows.push_back(fast.value);
      slow_rows.push_back(slow.value);
      if (!cfg.toggles.slow_memory) continue;
      acc = memory::accumulate(acc, fast);
      if (acc.full()) {
        aux.slow_before_write.push_back(slow.value.value());
        aux.chunk_means.push_back(memory::chunk_mean(acc).value());
        ad::Var transported;
        slow = memory::slow_write(ad::slice_rows(n, t, t + 1), acc, slow, cfg.alpha_n,
                                  cfg.toggles.ont, params, p + ".mem", &transported);
        aux.transported.push_back(transported.value());
        aux.write_positions.push_back(static_cast<int>(t));
        acc = memory::ChunkAccumulator{{}, 0, cfg.chunk_size};
      }
    }
    aux.write_count = static_cast<int>(aux.write_positions.size());
    aux.fast_final = fast.value;
    aux.slow_final = slow.value;
    aux.fast_trace = stack_rows(fast_rows);
    aux.slow_trace = stack_rows(slow_rows);
    ad::Var r = memory::memory_read(n, ad::concat_rows(fast_rows), ad::concat_rows(slow_rows),
                                    params, p + ".mem").value;

    ad::Var corrected;
    if (cfg.toggles.predictive_coding) {
      auto pred = correction::predict_and_refine(a, r, n, cfg.refine_steps, params, p + ".corr");
      auto stats = correction::error_stats(n, pred.estimate);
      auto ctrl = controller::bind(params, p + ".ctrl", cfg.controller);
      auto mask = controller::causal_event_mask(stats.per_token_error_norm, ctrl, frozen);
      corrected = ad::mul(pred.estimate, mask.mask);
      aux.has_correction = true;
      aux.error_norms = stats.per_token_error_norm;
      aux.mask = mask.mask;
      aux.hard_mask = mask.hard;
      aux.soft_mask = mask.soft.value();
      aux.effective_ratio = mask.effective_ratio;
      aux.ratio = controller::clamp_ratio(ctrl).item();
    }
    out.hidden = residual_ffn(params, p, cfg, h, fuse(params, p, a, r, corrected));
    return out;
  } catch (const Error& e) {
    throw Error(e.code(), "layer " + std::to_string(layer) + ": " + e.what());
  }
}

ForwardResult model_forward(ad::Tape& tape, const ParameterStore& params, const ModelConfig& cfg,
                            std::span<const int> tokens, const ForwardOptions& options) {
  ParamBinder binder(tape, params);
  ad::Var h = embed(binder, tokens, 0, cfg);
  ForwardResult result;
  if (options.frozen_masks) {
    require(options.frozen_masks->size() == static_cast<std::size_t>(cfg.layers),
            ErrorCode::kInvalidArgument, "frozen mask count differs from layer count");
  }
  for (int l = 0; l < cfg.layers; ++l) {
    const controller::FrozenMask* frozen =
        options.frozen_masks ? &(*options.frozen_masks)[static_cast<std::size_t>(l)] : nullptr;
    BlockOutput b = block_forward(h, l, binder, cfg, frozen);
    h = b.hidden;
    result.aux.push_back(std::move(b.aux));
  }
  result.logits = heads(binder, cfg, h);
  return result;
}

std::vector<controller::FrozenMask> freeze_masks(const ForwardResult& result) {
  std::vector<controller::FrozenMask> out;
  for (const auto& aux : result.aux) {
    controller::FrozenMask f;
    if (aux.has_correction) {
      f.hard.assign(aux.hard_mask.data().begin(), aux.hard_mask.data().end());
      f.soft.assign(aux.soft_mask.data().begin(), aux.soft_mask.data().end());
    }
    out.push_back(std::move(f));
  }
  return out;
}

}  // namespace lpcsm::model
