#pragma once

#include <cstdint>
#include <string>

#include "config.hpp"
#include "numerics.hpp"

namespace lpcsm::harness {

struct ProbeSpec {
  int prompts = 6;
  int prompt_len = 192;
  int distractor_len = 128;
  int key_len = 8;
  std::uint64_t seed = 20240607;
};

struct ProbeResult {
  double key_ce = 0.0;  // mean -log p over key-token positions
  int prompt_length = 0;
  int prompts = 0;
  std::string fingerprint;
};

// JSON object with any of the ProbeSpec field names; unknown keys are rejected.
ProbeSpec parse_probe_spec(const std::string& json_text);
ProbeSpec load_probe_spec(const std::string& path);

// Builds key-recall prompts (marker, key, distractor, trigger, key, EOS
// padding), teacher-forces each and averages the key-token cross-entropy.
ProbeResult probe_delayed_identifier(const ParameterStore& params, const ModelConfig& cfg,
                                     const ProbeSpec& spec);

}  // namespace lpcsm::harness
