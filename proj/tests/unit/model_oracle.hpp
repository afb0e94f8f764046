#pragma once

// Straight-line reference of the full model on plain vectors, written
// independently of the tape so the graph wiring can be checked against it.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "config.hpp"
#include "numerics.hpp"

namespace lpcsm::testing::oracle {

using Row = std::vector<double>;
using Rows = std::vector<Row>;

inline double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Row linear(const ParameterStore& s, const std::string& name, const Row& x) {
  const Tensor& w = s.value(name + ".weight");
  Row y(w.cols(), 0.0);
  for (std::size_t j = 0; j < w.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) acc += x[i] * w.at(i, j);
    y[j] = acc + (s.contains(name + ".bias") ? s.value(name + ".bias")[j] : 0.0);
  }
  return y;
}

inline Row mlp(const ParameterStore& s, const std::string& name, const Row& x) {
  Row h = linear(s, name + ".fc1", x);
  for (auto& v : h) v = std::tanh(v);
  return linear(s, name + ".fc2", h);
}

inline Row rmsnorm(const Row& x, const Tensor& gain, double eps) {
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const double inv = 1.0 / std::sqrt(ms + eps);
  Row y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = gain[i] * x[i] * inv;
  return y;
}

inline Row cat(std::initializer_list<const Row*> parts) {
  Row out;
  for (const Row* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

inline Row slice(const Row& x, std::size_t b, std::size_t e) { return Row(x.begin() + b, x.begin() + e); }

inline Row transport(double alpha, const Row& c, const Row& m) {
  double mm = 0.0, cm = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    mm += m[i] * m[i];
    cm += c[i] * m[i];
  }
  Row out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double novelty = mm > 1e-300 ? c[i] - cm / mm * m[i] : c[i];
    out[i] = c[i] + alpha * novelty;
  }
  return out;
}

inline double mhc_coefficient(const ParameterStore& s, const std::string& p, int iters) {
  const Tensor& pre = s.value(p + ".pre");
  const Tensor& post = s.value(p + ".post");
  const Tensor& lg = s.value(p + ".transport");
  const std::size_t n = pre.numel();
  Rows m(n, Row(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i][j] = std::exp(lg.at(i, j));
  for (int it = 0; it < iters; ++it) {
    for (auto& row : m) {
      const double z = std::accumulate(row.begin(), row.end(), 0.0);
      for (auto& v : row) v /= z;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double z = 0.0;
      for (std::size_t i = 0; i < n; ++i) z += m[i][j];
      for (std::size_t i = 0; i < n; ++i) m[i][j] /= z;
    }
  }
  double coef = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) coef += post[i] * m[i][j] * pre[j];
  return coef;
}

// Prefix-causal event mask of token t.
inline double event_mask(const Row& errors, std::size_t t, const ParameterStore& s, const std::string& p,
                         const ControllerConfig& cc) {
  const std::size_t n = t + 1;
  double mu = 0.0;
  for (std::size_t j = 0; j < n; ++j) mu += errors[j];
  mu /= static_cast<double>(n);
  double var = 0.0;
  for (std::size_t j = 0; j < n; ++j) var += (errors[j] - mu) * (errors[j] - mu);
  const double sd = std::sqrt(var / static_cast<double>(n));
  const double scale = s.value(p + ".scale")[0], bias = s.value(p + ".bias")[0];
  Row score(n);
  for (std::size_t j = 0; j < n; ++j)
    score[j] = (scale * (errors[j] - mu) / (sd + 1e-6) + bias) / cc.temperature;
  const double ratio = cc.ratio_min + (cc.ratio_max - cc.ratio_min) * sig(s.value(p + ".ratio_raw")[0]);
  const auto k = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(n) - 1e-12));
  // Rank of token t: entries strictly greater, plus equal entries at lower index.
  std::size_t ahead = 0;
  for (std::size_t j = 0; j < n; ++j)
    if (score[j] > score[t] || (score[j] == score[t] && j < t)) ++ahead;
  return ahead < k ? 1.0 : 0.0;
}

inline Rows attention(const ParameterStore& s, const std::string& p, const ModelConfig& cfg, const Rows& n) {
  const std::size_t T = n.size(), d = static_cast<std::size_t>(cfg.width);
  const std::size_t H = static_cast<std::size_t>(cfg.heads), hd = d / H;
  Rows q(T), k(T), v(T);
  for (std::size_t t = 0; t < T; ++t) {
    if (cfg.latent_dim) {
      q[t] = linear(s, p + ".q", n[t]);
      Row z = linear(s, p + ".z", n[t]);
      k[t] = linear(s, p + ".k_up", z);
      v[t] = linear(s, p + ".v_up", z);
    } else {
      Row qkv = linear(s, p + ".qkv", n[t]);
      q[t] = slice(qkv, 0, d);
      k[t] = slice(qkv, d, 2 * d);
      v[t] = slice(qkv, 2 * d, 3 * d);
    }
  }
  Rows out(T);
  for (std::size_t t = 0; t < T; ++t) {
    Row heads(d, 0.0);
    const std::size_t first = t + 1 >= static_cast<std::size_t>(cfg.window) ? t + 1 - cfg.window : 0;
    for (std::size_t h = 0; h < H; ++h) {
      Row logits;
      for (std::size_t u = first; u <= t; ++u) {
        double acc = 0.0;
        for (std::size_t c = 0; c < hd; ++c) acc += q[t][h * hd + c] * k[u][h * hd + c];
        logits.push_back(acc / std::sqrt(static_cast<double>(hd)));
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      for (std::size_t u = first; u <= t; ++u)
        for (std::size_t c = 0; c < hd; ++c) heads[h * hd + c] += logits[u - first] / z * v[u][h * hd + c];
    }
    out[t] = linear(s, p + ".out", heads);
  }
  return out;
}

inline Rows block(const ParameterStore& s, int layer, const ModelConfig& cfg, const Rows& h) {
  const std::string p = "layers." + std::to_string(layer);
  const std::size_t T = h.size(), d = static_cast<std::size_t>(cfg.width);
  Rows n(T);
  for (std::size_t t = 0; t < T; ++t) n[t] = rmsnorm(h[t], s.value(p + ".norm1.gain"), cfg.norm_eps);
  Rows a = attention(s, p + ".attn", cfg, n);

  Row fast(d, 0.0), slow(d, 0.0), sum(d, 0.0);
  int count = 0;
  Rows r(T);
  for (std::size_t t = 0; t < T; ++t) {
    Row dg = linear(s, p + ".mem.decay", n[t]), ug = linear(s, p + ".mem.write", n[t]);
    for (std::size_t i = 0; i < d; ++i) {
      const double g = sig(dg[i]);
      fast[i] = g * fast[i] + (1 - g) * std::tanh(ug[i]);
    }
    Row qf = linear(s, p + ".mem.query_fast", n[t]);
    Row halves(2 * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) halves[i] = sig(qf[i]) * fast[i];
    if (cfg.toggles.slow_memory) {
      Row qs = linear(s, p + ".mem.query_slow", n[t]);
      for (std::size_t i = 0; i < d; ++i) halves[d + i] = sig(qs[i]) * slow[i];
      for (std::size_t i = 0; i < d; ++i) sum[i] += fast[i];
      if (++count == cfg.chunk_size) {
        Row c(d);
        for (std::size_t i = 0; i < d; ++i) c[i] = sum[i] / cfg.chunk_size;
        Row target = cfg.toggles.ont ? transport(cfg.alpha_n, c, slow) : c;
        Row cand = linear(s, p + ".mem.slow_write", target);
        Row gate = linear(s, p + ".mem.slow_gate", n[t]);
        for (std::size_t i = 0; i < d; ++i) {
          const double g = sig(gate[i]);
          slow[i] = g * slow[i] + (1 - g) * std::tanh(cand[i]);
        }
        std::fill(sum.begin(), sum.end(), 0.0);
        count = 0;
      }
    }
    r[t] = linear(s, p + ".mem.read", halves);
  }

  Rows corrected(T);
  if (cfg.toggles.predictive_coding) {
    Row errors(T);
    for (std::size_t t = 0; t < T; ++t) {
      Row est = mlp(s, p + ".corr.pred", cat({&a[t], &r[t]}));
      Row err(d);
      for (int k = 0; k <= cfg.refine_steps; ++k) {
        for (std::size_t i = 0; i < d; ++i) err[i] = n[t][i] - est[i];
        if (k == cfg.refine_steps) break;
        Row delta = mlp(s, p + ".corr.refine", cat({&a[t], &r[t], &err}));
        for (std::size_t i = 0; i < d; ++i) est[i] += delta[i];
      }
      double e2 = 0.0;
      for (double v : err) e2 += v * v;
      errors[t] = std::sqrt(e2);
      corrected[t] = est;
    }
    for (std::size_t t = 0; t < T; ++t) {
      const double m = event_mask(errors, t, s, p + ".ctrl", cfg.controller);
      for (auto& v : corrected[t]) v *= m;
    }
  }

  const double coef = cfg.toggles.mhc ? mhc_coefficient(s, p + ".mhc", cfg.mhc.iters) : 1.0;
  Rows out(T);
  for (std::size_t t = 0; t < T; ++t) {
    Row in = cfg.toggles.predictive_coding ? cat({&a[t], &r[t], &corrected[t]}) : cat({&a[t], &r[t]});
    Row fused = linear(s, p + ".fuse", in);
    Row mid(d);
    for (std::size_t i = 0; i < d; ++i) mid[i] = h[t][i] + fused[i];
    Row upd = mlp(s, p + ".ffn", rmsnorm(mid, s.value(p + ".norm2.gain"), cfg.norm_eps));
    out[t].resize(d);
    for (std::size_t i = 0; i < d; ++i) out[t][i] = coef * mid[i] + upd[i];
  }
  return out;
}

struct Output {
  Rows lm;
  Row stop;
};

inline Output forward(const ParameterStore& s, const ModelConfig& cfg, const std::vector<int>& tokens) {
  const std::size_t d = static_cast<std::size_t>(cfg.width);
  Rows h(tokens.size(), Row(d));
  for (std::size_t t = 0; t < tokens.size(); ++t)
    for (std::size_t i = 0; i < d; ++i)
      h[t][i] = s.value("embed.token").at(tokens[t], i) + s.value("embed.position").at(t, i);
  for (int l = 0; l < cfg.layers; ++l) h = block(s, l, cfg, h);
  Output out;
  for (const auto& row : h) {
    Row x = rmsnorm(row, s.value("final_norm.gain"), cfg.norm_eps);
    out.lm.push_back(linear(s, "lm_head", x));
    if (cfg.toggles.stop_head) out.stop.push_back(linear(s, "stop_head", x)[0]);
  }
  return out;
}

}  // namespace lpcsm::testing::oracle
