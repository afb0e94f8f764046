#include "attention.hpp"

#include <cmath>

#include "error.hpp"

namespace lpcsm::attention {

void AttentionConfig::validate() const {
  require(window >= 1, ErrorCode::kConfig, "attention window must be at least 1");
  require(heads >= 1 && head_dim >= 1, ErrorCode::kConfig, "attention heads/head_dim must be positive");
  require(!latent_dim || *latent_dim >= 1, ErrorCode::kConfig, "latent_dim must be positive");
}

void init_parameters(ParameterStore& store, const std::string& prefix, const AttentionConfig& cfg,
                     Initializer& init) {
  const auto d = static_cast<std::size_t>(cfg.width());
  if (cfg.latent_dim) {
    const auto l = static_cast<std::size_t>(*cfg.latent_dim);
    init.linear(store, prefix + ".q", d, d);
    init.linear(store, prefix + ".z", d, l, /*with_bias=*/false);
    init.linear(store, prefix + ".k_up", l, d);
    init.linear(store, prefix + ".v_up", l, d);
  } else {
    init.linear(store, prefix + ".qkv", d, 3 * d);
  }
  init.linear(store, prefix + ".out", d, d);
}

Projections project(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                    const std::string& prefix) {
  const auto d = static_cast<std::size_t>(cfg.width());
  require(hidden.cols() == d, ErrorCode::kShapeMismatch,
          "attention: hidden width " + std::to_string(hidden.cols()) + " != " + std::to_string(d));
  if (cfg.latent_dim) {
    Linear wq = Linear::bind(params, prefix + ".q");
    Linear wz = Linear::bind(params, prefix + ".z");
    ad::Var z = wz(hidden);
    return {wq(hidden), Linear::bind(params, prefix + ".k_up")(z),
            Linear::bind(params, prefix + ".v_up")(z)};
  }
  ad::Var qkv = Linear::bind(params, prefix + ".qkv")(hidden);
  return {ad::slice_cols(qkv, 0, d), ad::slice_cols(qkv, d, 2 * d), ad::slice_cols(qkv, 2 * d, 3 * d)};
}

std::vector<std::uint8_t> window_mask(std::size_t length, int window) {
  std::vector<std::uint8_t> allowed(length * length, 0);
  for (std::size_t t = 0; t < length; ++t) {
    const std::size_t first = t + 1 >= static_cast<std::size_t>(window) ? t + 1 - window : 0;
    for (std::size_t s = first; s <= t; ++s) allowed[t * length + s] = 1;
  }
  return allowed;
}

AttentionOutput attend(const Projections& proj, const std::vector<std::uint8_t>& allowed,
                       const AttentionConfig& cfg, ParamBinder& params, const std::string& prefix,
                       bool keep_weights) {
  const auto hd = static_cast<std::size_t>(cfg.head_dim);
  const std::size_t tq = proj.q.rows(), tk = proj.k.rows();
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<ad::Var> heads;
  AttentionOutput out;
  if (keep_weights) out.weights = Tensor(Shape{static_cast<std::size_t>(cfg.heads), tq, tk});
  for (std::size_t h = 0; h < static_cast<std::size_t>(cfg.heads); ++h) {
    ad::Var qh = ad::slice_cols(proj.q, h * hd, (h + 1) * hd);
    ad::Var kh = ad::slice_cols(proj.k, h * hd, (h + 1) * hd);
    ad::Var vh = ad::slice_cols(proj.v, h * hd, (h + 1) * hd);
    ad::Var scores = ad::scale(ad::matmul(qh, ad::transpose(kh)), inv_scale);
    ad::Var probs = ad::softmax_rows(scores, &allowed);
    if (keep_weights) {
      const Tensor& p = probs.value();
      std::copy(p.data().begin(), p.data().end(), out.weights->data().begin() + h * tq * tk);
    }
    heads.push_back(ad::matmul(probs, vh));
  }
  out.read = Linear::bind(params, prefix + ".out")(ad::concat_cols(heads));
  return out;
}

AttentionOutput local_attention(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                                const std::string& prefix, bool keep_weights) {
  cfg.validate();
  require(hidden.rows() >= 1, ErrorCode::kShapeMismatch, "attention: empty sequence");
  AttentionConfig shared = cfg;
  shared.latent_dim.reset();
  return attend(project(hidden, shared, params, prefix), window_mask(hidden.rows(), cfg.window),
                shared, params, prefix, keep_weights);
}

AttentionOutput latent_attention(ad::Var hidden, const AttentionConfig& cfg, ParamBinder& params,
                                 const std::string& prefix, bool keep_weights) {
  cfg.validate();
  require(cfg.latent_dim.has_value(), ErrorCode::kConfig, "latent_attention requires latent_dim");
  require(hidden.rows() >= 1, ErrorCode::kShapeMismatch, "attention: empty sequence");
  return attend(project(hidden, cfg, params, prefix), window_mask(hidden.rows(), cfg.window), cfg,
                params, prefix, keep_weights);
}

}  // namespace lpcsm::attention
