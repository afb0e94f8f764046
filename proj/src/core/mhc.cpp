#include "mhc.hpp"

#include "error.hpp"

namespace lpcsm::mhc {

void init_parameters(ParameterStore& store, const std::string& prefix, const MhcConfig& cfg,
                     Initializer& init) {
  const auto s = static_cast<std::size_t>(cfg.streams);
  Tensor pre = init.normal(Shape{s}, 0.1);
  Tensor post = init.normal(Shape{s}, 0.1 / static_cast<double>(s));
  for (std::size_t i = 0; i < s; ++i) {
    pre[i] += 1.0;
    post[i] += 1.0 / static_cast<double>(s);
  }
  store.add(prefix + ".pre", std::move(pre));
  store.add(prefix + ".post", std::move(post));
  store.add(prefix + ".transport", init.normal(Shape{s, s}, 0.1));
}

MixWeights bind(ParamBinder& params, const std::string& prefix) {
  return {params.get(prefix + ".pre"), params.get(prefix + ".post"),
          params.get(prefix + ".transport")};
}

ad::Var sinkhorn(ad::Var logits, int iters) {
  const Tensor& l = logits.value();
  require(iters >= 1, ErrorCode::kInvalidArgument, "sinkhorn: iters must be at least 1");
  require(l.rank() == 2 && l.rows() == l.cols(), ErrorCode::kShapeMismatch,
          "sinkhorn: logits must be square, got " + shape_to_string(l.shape()));
  require(l.all_finite(), ErrorCode::kNumeric, "sinkhorn: non-finite logits");
  ad::Var ones = logits.tape()->constant(Tensor(Shape{1, l.rows()}, 1.0));
  ad::Var m = ad::exp(logits);
  for (int i = 0; i < iters; ++i) {
    m = ad::div(m, ad::row_sum(m));
    m = ad::div(m, ad::matmul(ones, m));
  }
  return m;
}

TransportMatrix sinkhorn_normalize(const Tensor& logits, int iters) {
  ad::Tape tape;
  return {sinkhorn(tape.constant(logits), iters).value()};
}

ad::Var mhc_route(ad::Var h_in, ad::Var update, const MixWeights& w, int iters) {
  const std::size_t s = w.pre_mix.value().numel();
  require(s >= 2, ErrorCode::kInvalidArgument, "mhc_route: need at least two streams");
  require(w.post_mix.value().numel() == s && w.transport_logits.value().numel() == s * s,
          ErrorCode::kShapeMismatch, "mhc_route: mixing weight shapes disagree");
  require(h_in.shape() == update.shape(), ErrorCode::kShapeMismatch,
          "mhc_route: residual and update shapes differ");
  ad::Var transport = ad::reshape(sinkhorn(w.transport_logits, iters), Shape{s * s});
  ad::Var pre = ad::reshape(w.pre_mix, Shape{s});
  ad::Var post = ad::reshape(w.post_mix, Shape{s});

  std::vector<ad::Var> streams;
  for (std::size_t j = 0; j < s; ++j) streams.push_back(ad::mul(h_in, ad::slice_cols(pre, j, j + 1)));

  ad::Var out = update;
  for (std::size_t i = 0; i < s; ++i) {
    ad::Var routed;
    for (std::size_t j = 0; j < s; ++j) {
      ad::Var term = ad::mul(streams[j], ad::slice_cols(transport, i * s + j, i * s + j + 1));
      routed = routed.valid() ? ad::add(routed, term) : term;
    }
    out = ad::add(out, ad::mul(routed, ad::slice_cols(post, i, i + 1)));
  }
  return out;
}

}  // namespace lpcsm::mhc
