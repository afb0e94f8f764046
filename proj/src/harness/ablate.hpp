#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "config.hpp"

namespace lpcsm::harness {

struct AblationRow {
  std::string variant;         // "full" or "no_<toggle>"
  double final_lm = 0.0;       // held-out LM loss after training
  double delta_pct = 0.0;      // relative to the full model, in percent
  double tokens_per_second = 0.0;
  double final_ratio = 0.0;    // held-out effective mask density
};

// Toggle names: slow_memory, predictive_coding, ont, stop_head, mhc ("all"
// expands to the five). Every variant trains from `seed` on the same batches.
std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::string>& toggles,
                                int steps, std::uint64_t seed, bool timing = true);

std::vector<std::string> parse_toggle_list(const std::string& comma_separated);
Toggles without(Toggles t, const std::string& toggle);

std::string format_ablation_table(const std::vector<AblationRow>& rows);

}  // namespace lpcsm::harness
