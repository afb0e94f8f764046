#pragma once

#include <cstdint>
#include <vector>

#include "config.hpp"

namespace lpcsm::harness {

// Reserved symbols at the top of the vocabulary. Content tokens are drawn
// from [0, content_vocab(kind, V)).
inline int eos_token(int vocab) { return vocab - 1; }
inline int delimiter_token(int vocab) { return vocab - 2; }  // copy delimiter / recall trigger
inline int key_marker_token(int vocab) { return vocab - 3; }
int content_vocab(TaskKind kind, int vocab);

struct Example {
  std::vector<int> inputs;
  std::vector<int> targets;  // inputs shifted left by one, EOS at the end
  // Target positions holding the recalled key (key-recall only).
  std::vector<std::size_t> key_positions;
};

struct Batch {
  std::vector<Example> examples;
};

// Length of a task sequence; key-recall needs room for marker, key,
// distractor, trigger and the recalled key.
int required_length(const TaskConfig& task);

// Deterministic in (task, stream, batch): `stream` selects an independent
// sub-stream, e.g. the training step.
Batch make_batch(const TaskConfig& task, int batch, std::uint64_t stream = 0);

// Checks the task against a model before any data is generated.
void validate_task(const TaskConfig& task, const ModelConfig& model);

}  // namespace lpcsm::harness
