#include "ablate.hpp"

#include <cstdio>
#include <sstream>

#include "error.hpp"
#include "train.hpp"

namespace lpcsm::harness {

namespace {

const char* const kToggleNames[] = {"slow_memory", "predictive_coding", "ont", "stop_head", "mhc"};

AblationRow run_variant(const std::string& name, const RunConfig& cfg, int steps,
                        std::uint64_t seed, bool timing) {
  TrainOptions opts;
  opts.steps = steps;
  opts.seed = seed;
  opts.timing = timing;
  TrainResult r = train(cfg, opts);
  const StepMetrics held_out = evaluate(r.params, cfg, cfg.task, cfg.train.batch_size);
  AblationRow row;
  row.variant = name;
  row.final_lm = held_out.loss.lm;
  row.final_ratio = held_out.effective_ratio;
  if (timing && !r.history.empty()) {
    double sum = 0.0;
    for (const auto& m : r.history) sum += m.tokens_per_second;
    row.tokens_per_second = sum / static_cast<double>(r.history.size());
  }
  return row;
}

}  // namespace

Toggles without(Toggles t, const std::string& toggle) {
  if (toggle == "slow_memory") t.slow_memory = false;
  else if (toggle == "predictive_coding") t.predictive_coding = false;
  else if (toggle == "ont") t.ont = false;
  else if (toggle == "stop_head") t.stop_head = false;
  else if (toggle == "mhc") t.mhc = false;
  else fail(ErrorCode::kConfig, "unknown toggle '" + toggle + "'");
  return t;
}

std::vector<std::string> parse_toggle_list(const std::string& comma_separated) {
  std::vector<std::string> out;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "all") {
      out.insert(out.end(), std::begin(kToggleNames), std::end(kToggleNames));
      continue;
    }
    without(Toggles{}, item);  // validates the name
    out.push_back(item);
  }
  return out;
}

std::vector<AblationRow> ablate(const RunConfig& cfg, const std::vector<std::string>& toggles,
                                int steps, std::uint64_t seed, bool timing) {
  for (const auto& t : toggles) without(Toggles{}, t);
  std::vector<AblationRow> rows;
  rows.push_back(run_variant("full", cfg, steps, seed, timing));
  for (const auto& t : toggles) {
    RunConfig variant = cfg;
    variant.model.toggles = without(cfg.model.toggles, t);
    rows.push_back(run_variant("no_" + t, variant, steps, seed, timing));
  }
  const double base = rows.front().final_lm;
  for (auto& r : rows) r.delta_pct = base != 0.0 ? 100.0 * (r.final_lm - base) / base : 0.0;
  return rows;
}

std::string format_ablation_table(const std::vector<AblationRow>& rows) {
  std::string out = "variant,final_lm,delta_pct,tokens_per_second,final_ratio\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%s,%.17g,%.6f,%.6g,%.17g\n", r.variant.c_str(), r.final_lm,
                  r.delta_pct, r.tokens_per_second, r.final_ratio);
    out += buf;
  }
  return out;
}

}  // namespace lpcsm::harness
