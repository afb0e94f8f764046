#include "ont_suite.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>

#include "error.hpp"
#include "ont.hpp"

namespace lpcsm::harness {

namespace {

Tensor axpy(double a, const Tensor& x, const Tensor& y) {
  Tensor out = y;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += a * x[i];
  return out;
}

double dist_sq(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

struct Tracker {
  OntCheck check;
  void observe(double err) {
    if (!(err <= check.worst)) check.worst = err;  // NaN sticks
  }
};

}  // namespace

OntSuiteReport run_ont_suite(int trials, std::uint64_t seed, const OntTolerances& tol) {
  require(trials >= 1, ErrorCode::kInvalidArgument, "ONT suite needs at least one trial");
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> dim_dist(1, 64);
  std::uniform_real_distribution<double> alpha_dist(-2.0, 4.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> kind(0, 9);

  Tracker feas{{"feasibility", 0, tol.feasibility}}, decomp{{"decomposition", 0, tol.decomposition}},
      pyth{{"pythagorean", 0, tol.pythagorean}}, oracle{{"oracle_equivalence", 0, tol.oracle}},
      vari{{"variational_identity", 0, tol.variational}}, gap{{"aligned_gap", 0, tol.aligned_gap}},
      zero{{"zero_reference", 0, 0.0}};

  OntSuiteReport report;
  report.trials = trials;
  for (int trial = 0; trial < trials; ++trial) {
    const auto n = static_cast<std::size_t>(dim_dist(rng));
    const int k = kind(rng);
    const double alpha = k == 0 ? 0.0 : alpha_dist(rng);
    Tensor c(Shape{n}), m(Shape{n}), x(Shape{n}), w(Shape{n});
    for (std::size_t i = 0; i < n; ++i) c[i] = normal(rng);
    const bool zero_ref = k == 1;
    if (!zero_ref) {
      for (std::size_t i = 0; i < n; ++i) m[i] = normal(rng);
    }
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = 3.0 * normal(rng);
      w[i] = normal(rng);
    }
    report.zero_reference_trials += zero_ref;
    report.zero_alpha_trials += alpha == 0.0;

    const auto tr = ont::ont_transport(alpha, c, m);
    const Tensor& t = tr.transported;
    const Tensor& p = tr.decomposition.aligned;
    const Tensor& nov = tr.decomposition.novelty;
    const Tensor y = ont::ont_target(alpha, c);

    const double scale = std::max(1.0, std::sqrt(squared_norm(c.data()) * squared_norm(m.data())));
    feas.observe(std::abs(dot(t.data(), m.data()) - dot(c.data(), m.data())) / scale);

    Tensor recon = p;
    for (std::size_t i = 0; i < n; ++i) recon[i] += nov[i];
    decomp.observe(max_abs_diff(recon, c));

    // aligned gap: T - Y = -alpha P
    Tensor gap_v = t;
    for (std::size_t i = 0; i < n; ++i) gap_v[i] = t[i] - y[i] + alpha * p[i];
    double g = 0.0;
    for (std::size_t i = 0; i < n; ++i) g = std::max(g, std::abs(gap_v[i]));
    gap.observe(g);

    oracle.observe(max_abs_diff(ont::ont_oracle_min(alpha, c, m), t));

    // Feasible point: T plus a perturbation orthogonal to m.
    const Tensor feasible = axpy(1.0, ont::ont_novelty(w, m), t);
    const double lhs = dist_sq(feasible, y);
    const double rhs = dist_sq(feasible, t) + dist_sq(t, y);
    pyth.observe(std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));

    const double jx = ont::ont_write_objective(alpha, c, m, x);
    const double jt = ont::ont_write_objective(alpha, c, m, t);
    vari.observe(std::abs((jx - jt) - 0.5 * dist_sq(x, t)));

    if (zero_ref) zero.observe(t.bit_equal(y) ? 0.0 : 1.0);
  }

  for (Tracker* tk : {&feas, &decomp, &pyth, &oracle, &vari, &gap, &zero}) {
    tk->check.pass = tk->check.worst <= tk->check.tolerance;
    report.pass = report.pass && tk->check.pass;
    report.checks.push_back(tk->check);
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

std::string format_ont_report(const OntSuiteReport& r) {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "trials %d (zero reference %d, zero alpha %d) in %.3f s\n",
                r.trials, r.zero_reference_trials, r.zero_alpha_trials, r.seconds);
  out += buf;
  for (const auto& c : r.checks) {
    std::snprintf(buf, sizeof buf, "%-22s worst %.3e  tol %.1e  %s\n", c.name.c_str(), c.worst,
                  c.tolerance, c.pass ? "PASS" : "FAIL");
    out += buf;
  }
  out += r.pass ? "ONT suite: PASS\n" : "ONT suite: FAIL\n";
  return out;
}

}  // namespace lpcsm::harness
