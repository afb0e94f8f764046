#include "correction.hpp"

#include "error.hpp"

namespace lpcsm::correction {

void init_parameters(ParameterStore& store, const std::string& prefix, std::size_t width,
                     Initializer& init) {
  init.mlp(store, prefix + ".pred", 2 * width, width, width);
  init.mlp(store, prefix + ".refine", 3 * width, width, width);
}

PredictionState predict_init(ad::Var a, ad::Var r, ad::Var h, ParamBinder& params,
                             const std::string& prefix) {
  a = as_row(a);
  r = as_row(r);
  h = as_row(h);
  require(a.rows() == r.rows() && a.rows() == h.rows(), ErrorCode::kShapeMismatch,
          "predict_init: row counts differ");
  const ad::Var parts[] = {a, r};
  ad::Var estimate = Mlp::bind(params, prefix + ".pred")(ad::concat_cols(parts));
  require(estimate.cols() == h.cols(), ErrorCode::kShapeMismatch,
          "predict_init: predictor width differs from hidden width");
  return {estimate, 0, ad::sub(h, estimate)};
}

PredictionState refine_step(ad::Var a, ad::Var r, ad::Var h, const PredictionState& state,
                            int max_steps, ParamBinder& params, const std::string& prefix) {
  require(state.step < max_steps, ErrorCode::kState, "refine_step: refinement budget exhausted");
  a = as_row(a);
  r = as_row(r);
  h = as_row(h);
  const ad::Var parts[] = {a, r, state.last_error};
  ad::Var delta = Mlp::bind(params, prefix + ".refine")(ad::concat_cols(parts));
  ad::Var estimate = ad::add(state.estimate, delta);
  return {estimate, state.step + 1, ad::sub(h, estimate)};
}

PredictionState predict_and_refine(ad::Var a, ad::Var r, ad::Var h, int steps, ParamBinder& params,
                                   const std::string& prefix) {
  PredictionState s = predict_init(a, r, h, params, prefix);
  for (int i = 0; i < steps; ++i) s = refine_step(a, r, h, s, steps, params, prefix);
  return s;
}

ErrorStats error_stats(ad::Var h, ad::Var estimates) {
  require(h.shape() == estimates.shape(), ErrorCode::kShapeMismatch,
          "error_stats: shapes " + shape_to_string(h.shape()) + " and " +
              shape_to_string(estimates.shape()) + " differ");
  ErrorStats s;
  s.per_token_error_norm = ad::sqrt(ad::row_sum(ad::square(ad::sub(as_row(h), as_row(estimates)))));
  double total = 0.0;
  const Tensor& e = s.per_token_error_norm.value();
  for (std::size_t i = 0; i < e.numel(); ++i) total += e[i];
  s.mean_error = total / static_cast<double>(e.numel());
  return s;
}

}  // namespace lpcsm::correction
