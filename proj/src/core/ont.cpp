#include "ont.hpp"

#include <cmath>

#include "error.hpp"

namespace lpcsm::ont {
namespace {

void check_lengths(const Tensor& a, const Tensor& b, const char* op) {
  require(a.numel() == b.numel(), ErrorCode::kShapeMismatch,
          std::string(op) + ": vector lengths differ (" + std::to_string(a.numel()) + " vs " +
              std::to_string(b.numel()) + ")");
}

bool is_zero_reference(double norm_sq) {
  return norm_sq == 0.0 || std::sqrt(norm_sq) < kZeroReferenceNorm;
}

}  // namespace

NoveltyDecomposition decompose(const Tensor& c, const Tensor& m) {
  check_lengths(c, m, "ont");
  NoveltyDecomposition d;
  d.reference_norm_sq = squared_norm(m.data());
  d.aligned = Tensor(c.shape());
  if (!is_zero_reference(d.reference_norm_sq)) {
    const double coef = dot(c.data(), m.data()) / d.reference_norm_sq;
    for (std::size_t i = 0; i < c.numel(); ++i) d.aligned[i] = coef * m[i];
  }
  d.novelty = Tensor(c.shape());
  for (std::size_t i = 0; i < c.numel(); ++i) d.novelty[i] = c[i] - d.aligned[i];
  return d;
}

Tensor ont_proj(const Tensor& c, const Tensor& m) { return decompose(c, m).aligned; }

Tensor ont_novelty(const Tensor& c, const Tensor& m) { return decompose(c, m).novelty; }

TransportResult ont_transport(double alpha, const Tensor& c, const Tensor& m) {
  TransportResult r;
  r.alpha = alpha;
  r.decomposition = decompose(c, m);
  if (is_zero_reference(r.decomposition.reference_norm_sq)) {
    // Same rounding as the comparison target, so T(c, 0) == (1+a) c exactly.
    r.transported = ont_target(alpha, c);
    return r;
  }
  r.transported = Tensor(c.shape());
  for (std::size_t i = 0; i < c.numel(); ++i)
    r.transported[i] = c[i] + alpha * r.decomposition.novelty[i];
  return r;
}

Tensor ont_target(double alpha, const Tensor& c) {
  Tensor y(c.shape());
  for (std::size_t i = 0; i < c.numel(); ++i) y[i] = (1.0 + alpha) * c[i];
  return y;
}

Tensor ont_oracle_min(double alpha, const Tensor& c, const Tensor& m) {
  check_lengths(c, m, "ont_oracle_min");
  Tensor y = ont_target(alpha, c);
  const double mm = squared_norm(m.data());
  if (is_zero_reference(mm)) return y;
  const double shift = (dot(c.data(), m.data()) - dot(y.data(), m.data())) / mm;
  for (std::size_t i = 0; i < y.numel(); ++i) y[i] += shift * m[i];
  return y;
}

double ont_write_objective(double alpha, const Tensor& c, const Tensor& m, const Tensor& x) {
  check_lengths(c, x, "ont_write_objective");
  const Tensor n = ont_novelty(c, m);
  double half_sq = 0.0, inner = 0.0;
  for (std::size_t i = 0; i < c.numel(); ++i) {
    const double d = x[i] - c[i];
    half_sq += d * d;
    inner += d * n[i];
  }
  return 0.5 * half_sq - alpha * inner;
}

ad::Var transport(double alpha, ad::Var c, ad::Var m) {
  require(c.value().numel() == m.value().numel(), ErrorCode::kShapeMismatch,
          "ont transport: vector lengths differ");
  ad::Var mm = ad::sum(ad::square(m));
  if (is_zero_reference(mm.item())) return ad::scale(c, 1.0 + alpha);
  ad::Var coef = ad::div(ad::sum(ad::mul(c, m)), mm);
  ad::Var novelty = ad::sub(c, ad::mul(m, coef));
  return ad::add(c, ad::scale(novelty, alpha));
}

}  // namespace lpcsm::ont
