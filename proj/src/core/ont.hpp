#pragma once

#include "autodiff.hpp"
#include "tensor.hpp"

// Orthogonal novelty transport: the slow-memory write geometry.
//
// For a chunk summary c and reference state m,
//   aligned  P_m(c) = (<c,m>/|m|^2) m    (0 when m == 0)
//   novelty  N_m(c) = c - P_m(c)
//   transport T_a(c,m) = c + a N_m(c) = P_m(c) + (1+a) N_m(c)
// T_a(c,m) is the point of {x : <x,m> = <c,m>} nearest to (1+a)c.
namespace lpcsm::ont {

// Reference norms below this are treated as the zero reference.
inline constexpr double kZeroReferenceNorm = 1e-30;

struct NoveltyDecomposition {
  Tensor aligned;
  Tensor novelty;
  double reference_norm_sq = 0.0;
};

struct TransportResult {
  Tensor transported;
  double alpha = 0.0;
  NoveltyDecomposition decomposition;
};

NoveltyDecomposition decompose(const Tensor& c, const Tensor& m);
Tensor ont_proj(const Tensor& c, const Tensor& m);
Tensor ont_novelty(const Tensor& c, const Tensor& m);
TransportResult ont_transport(double alpha, const Tensor& c, const Tensor& m);

// Y_a(c) = (1+a) c.
Tensor ont_target(double alpha, const Tensor& c);

// Closed-form projection of Y_a(c) onto the affine set {x : <x,m> = <c,m>},
// computed without reference to the novelty decomposition.
Tensor ont_oracle_min(double alpha, const Tensor& c, const Tensor& m);

// J(x) = 1/2 |x-c|^2 - a <x-c, N_m(c)>.
double ont_write_objective(double alpha, const Tensor& c, const Tensor& m, const Tensor& x);

// Differentiable transport used by the slow-memory write. The zero-reference
// branch is selected from the value of m.
ad::Var transport(double alpha, ad::Var c, ad::Var m);

}  // namespace lpcsm::ont
