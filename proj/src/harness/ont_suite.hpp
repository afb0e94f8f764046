#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lpcsm::harness {

struct OntTolerances {
  double feasibility = 1e-10;    // scaled by max(1, |c| |m|)
  double decomposition = 1e-12;
  double pythagorean = 1e-9;     // relative
  double oracle = 1e-10;
  double variational = 1e-9;
  double aligned_gap = 1e-12;
};

struct OntCheck {
  std::string name;
  double worst = 0.0;  // largest observed (scaled) error
  double tolerance = 0.0;
  bool pass = true;
};

struct OntSuiteReport {
  int trials = 0;
  int zero_reference_trials = 0;
  int zero_alpha_trials = 0;
  std::vector<OntCheck> checks;
  double seconds = 0.0;
  bool pass = true;
};

// Random (alpha, c, m) draws: dimensions 1..64, alpha uniform in [-2, 4]
// with exact zeros mixed in, and a share of exactly-zero references.
OntSuiteReport run_ont_suite(int trials, std::uint64_t seed = 1,
                             const OntTolerances& tol = {});

std::string format_ont_report(const OntSuiteReport& report);

}  // namespace lpcsm::harness
