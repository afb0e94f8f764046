#pragma once

#include <cstdint>
#include <string>

#include "config.hpp"
#include "numerics.hpp"

namespace lpcsm::harness {

inline constexpr char kCheckpointMagic[4] = {'L', 'P', 'C', 'M'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ParameterStore params;
};

// Layout (little-endian):
//   "LPCM" | u32 version | u32 n, n bytes canonical model config | u32 count |
//   count x { u32 name_len, name | u32 rank | rank x u64 dim | numel x f64 }
std::string serialize_checkpoint(const ParameterStore& params, const ModelConfig& cfg);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const ParameterStore& params, const ModelConfig& cfg, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
// As above, and fails with kConfigMismatch unless the stored config equals `expected`.
Checkpoint load_checkpoint(const std::string& path, const ModelConfig& expected);

}  // namespace lpcsm::harness
