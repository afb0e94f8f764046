#include "tasks.hpp"

#include <random>

#include "error.hpp"

namespace lpcsm::harness {

namespace {

std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over the combined words.
  std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Example finish(std::vector<int> seq, int vocab) {
  Example ex;
  ex.inputs = seq;
  ex.targets.assign(seq.begin() + 1, seq.end());
  ex.targets.push_back(eos_token(vocab));
  return ex;
}

}  // namespace

int content_vocab(TaskKind kind, int vocab) {
  return kind == TaskKind::kCopy ? vocab - 2 : vocab - 3;
}

int required_length(const TaskConfig& task) {
  if (task.kind == TaskKind::kCopy) return task.key_len + 1;
  return 2 * task.key_len + task.distractor_len + 2;
}

void validate_task(const TaskConfig& task, const ModelConfig& model) {
  require(task.vocab_size == model.vocab_size, ErrorCode::kConfig,
          "task vocabulary differs from the model vocabulary");
  require(task.key_len >= 1, ErrorCode::kConfig, "task.key_len must be positive");
  require(task.distractor_len >= 0, ErrorCode::kConfig, "task.distractor_len must be nonnegative");
  require(content_vocab(task.kind, task.vocab_size) >= 2, ErrorCode::kConfig,
          "vocabulary too small for the task's reserved tokens");
  require(task.seq_len >= required_length(task), ErrorCode::kConfig,
          "task.seq_len " + std::to_string(task.seq_len) + " is shorter than the " +
              std::to_string(required_length(task)) + " tokens the task needs");
  require(task.seq_len <= model.max_seq_len, ErrorCode::kConfig,
          "task.seq_len exceeds model.max_seq_len");
}

Batch make_batch(const TaskConfig& task, int batch, std::uint64_t stream) {
  require(batch >= 1, ErrorCode::kInvalidArgument, "batch size must be positive");
  require(task.key_len >= 1 && task.seq_len >= required_length(task), ErrorCode::kConfig,
          "task lengths are inconsistent");
  const int v = task.vocab_size;
  std::mt19937_64 rng(mix(task.seed, stream));
  std::uniform_int_distribution<int> content(0, content_vocab(task.kind, v) - 1);
  Batch out;
  for (int b = 0; b < batch; ++b) {
    std::vector<int> key(static_cast<std::size_t>(task.key_len));
    for (auto& k : key) k = content(rng);
    std::vector<int> seq;
    seq.reserve(static_cast<std::size_t>(task.seq_len));
    std::vector<std::size_t> key_positions;
    if (task.kind == TaskKind::kCopy) {
      seq = key;
      while (static_cast<int>(seq.size()) < task.seq_len) {
        seq.push_back(delimiter_token(v));
        for (int k : key) {
          if (static_cast<int>(seq.size()) == task.seq_len) break;
          seq.push_back(k);
        }
      }
    } else {
      seq.push_back(key_marker_token(v));
      seq.insert(seq.end(), key.begin(), key.end());
      for (int i = 0; i < task.distractor_len; ++i) seq.push_back(content(rng));
      seq.push_back(delimiter_token(v));
      // The target at the trigger position is the first key token.
      for (std::size_t i = 0; i < key.size(); ++i) key_positions.push_back(seq.size() - 1 + i);
      seq.insert(seq.end(), key.begin(), key.end());
      seq.resize(static_cast<std::size_t>(task.seq_len), eos_token(v));
    }
    Example ex = finish(std::move(seq), v);
    ex.key_positions = std::move(key_positions);
    out.examples.push_back(std::move(ex));
  }
  return out;
}

}  // namespace lpcsm::harness
