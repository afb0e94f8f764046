#include "controller.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "error.hpp"
#include "layers.hpp"

namespace lpcsm::controller {

namespace {

constexpr double kStdFloor = 1e-6;

ad::Var straight_through(ad::Var soft, const std::vector<double>& hard,
                         const std::vector<double>& soft_ref) {
  Tensor offset(soft.shape());
  for (std::size_t i = 0; i < offset.numel(); ++i) offset[i] = hard[i] - soft_ref[i];
  return ad::add(soft, soft.tape()->constant(std::move(offset)));
}

EventMask finish(ad::Var soft, std::vector<double> hard, const FrozenMask* frozen) {
  EventMask m;
  const std::size_t n = hard.size();
  if (frozen) {
    require(frozen->hard.size() == n && frozen->soft.size() == n, ErrorCode::kShapeMismatch,
            "frozen mask length differs from sequence length");
    hard = frozen->hard;
  }
  const std::vector<double> soft_ref =
      frozen ? frozen->soft : std::vector<double>(soft.value().data().begin(), soft.value().data().end());
  m.soft = soft;
  m.mask = straight_through(soft, hard, soft_ref);
  m.effective_ratio = std::accumulate(hard.begin(), hard.end(), 0.0) / static_cast<double>(n);
  m.hard = Tensor(Shape{n}, std::move(hard));
  return m;
}

}  // namespace

double initial_ratio_raw(const ControllerConfig& cfg) {
  const double u = (cfg.ratio_init - cfg.ratio_min) / (cfg.ratio_max - cfg.ratio_min);
  return std::log(u / (1.0 - u));
}

void init_parameters(ParameterStore& store, const std::string& prefix, const ControllerConfig& cfg) {
  store.add(prefix + ".bias", Tensor::scalar(0.0));
  store.add(prefix + ".scale", Tensor::scalar(1.0));
  store.add(prefix + ".ratio_raw", Tensor::scalar(initial_ratio_raw(cfg)), cfg.adaptive);
}

ControllerParams bind(ParamBinder& params, const std::string& prefix, const ControllerConfig& cfg) {
  ControllerParams p;
  p.bias = params.get(prefix + ".bias");
  p.scale = params.get(prefix + ".scale");
  p.ratio_raw = params.get(prefix + ".ratio_raw");
  p.temperature = cfg.temperature;
  p.ratio_min = cfg.ratio_min;
  p.ratio_max = cfg.ratio_max;
  p.adaptive = cfg.adaptive;
  return p;
}

ad::Var clamp_ratio(const ControllerParams& p) {
  return ad::add_scalar(ad::scale(ad::sigmoid(p.ratio_raw), p.ratio_max - p.ratio_min), p.ratio_min);
}

ad::Var event_scores(ad::Var errors, const ControllerParams& p) {
  require(p.temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  ad::Var e = ad::reshape(errors, Shape{errors.value().numel(), 1});
  ad::Var centred = ad::sub(e, ad::mean(e));
  ad::Var sd = ad::sqrt(ad::mean(ad::square(centred)));
  ad::Var z = ad::div(centred, ad::add_scalar(sd, kStdFloor));
  return ad::scale(ad::add(ad::mul(z, p.scale), p.bias), 1.0 / p.temperature);
}

std::size_t mask_cardinality(double ratio, std::size_t n) {
  require(ratio > 0.0 && ratio <= 1.0, ErrorCode::kInvalidArgument,
          "mask ratio must lie in (0, 1]");
  const double nd = static_cast<double>(n);
  const double p = ratio * nd;
  const double err = std::fma(ratio, nd, -p);  // exact product = p + err
  double k = std::ceil(p);
  if (k == p && err > 0.0) k += 1.0;
  return std::min(n, static_cast<std::size_t>(k));
}

std::vector<double> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<double> hard(scores.size(), 0.0);
  for (std::size_t i = 0; i < std::min(k, order.size()); ++i) hard[order[i]] = 1.0;
  return hard;
}

EventMask hard_mask(ad::Var scores, ad::Var ratio, const FrozenMask* frozen) {
  const std::size_t n = scores.value().numel();
  const double r = ratio.item();
  const std::size_t k = mask_cardinality(r, n);
  ad::Var column = ad::reshape(scores, Shape{n, 1});
  ad::Var threshold = ad::quantile(column, ad::add_scalar(ad::neg(ratio), 1.0));
  ad::Var soft = ad::sigmoid(ad::sub(column, threshold));
  return finish(soft, top_k(scores.value().data(), k), frozen);
}

EventMask causal_event_mask(ad::Var errors, const ControllerParams& p, const FrozenMask* frozen) {
  require(p.temperature > 0.0, ErrorCode::kInvalidArgument, "temperature must be positive");
  ad::Tape& tape = *errors.tape();
  const std::size_t n = errors.value().numel();
  ad::Var e = ad::reshape(errors, Shape{n, 1});
  ad::Var e_row = ad::reshape(errors, Shape{1, n});

  Tensor lower(Shape{n, n}), eye(Shape{n, n}), counts(Shape{n, 1});
  for (std::size_t t = 0; t < n; ++t) {
    for (std::size_t j = 0; j <= t; ++j) lower.at(t, j) = 1.0;
    eye.at(t, t) = 1.0;
    counts[t] = static_cast<double>(t + 1);
  }
  ad::Var lower_v = tape.constant(std::move(lower));
  ad::Var counts_v = tape.constant(std::move(counts));

  // Row t holds token j's score under the statistics of prefix 0..t.
  ad::Var mu = ad::div(ad::matmul(lower_v, e), counts_v);
  ad::Var centred = ad::mul(ad::sub(e_row, mu), lower_v);
  ad::Var sd = ad::sqrt(ad::div(ad::row_sum(ad::square(centred)), counts_v));
  ad::Var z = ad::div(centred, ad::add_scalar(sd, kStdFloor));
  ad::Var scores = ad::scale(ad::add(ad::mul(z, p.scale), p.bias), 1.0 / p.temperature);

  ad::Var ratio = clamp_ratio(p);
  const double r = ratio.item();
  ad::Var threshold = ad::causal_row_quantile(scores, ad::add_scalar(ad::neg(ratio), 1.0));
  ad::Var own = ad::row_sum(ad::mul(scores, tape.constant(std::move(eye))));
  ad::Var soft = ad::sigmoid(ad::sub(own, threshold));

  std::vector<double> hard(n, 0.0);
  const Tensor& s = scores.value();
  for (std::size_t t = 0; t < n; ++t) {
    const auto prefix = std::span<const double>(s.data().data() + t * n, t + 1);
    hard[t] = top_k(prefix, mask_cardinality(r, t + 1))[t];
  }
  return finish(soft, std::move(hard), frozen);
}

}  // namespace lpcsm::controller
