#include "probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "error.hpp"
#include "model.hpp"
#include "tasks.hpp"

namespace lpcsm::harness {

ProbeSpec parse_probe_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string("probe spec is not valid JSON: ") + e.what());
  }
  require(j.is_object(), ErrorCode::kConfig, "probe spec must be a JSON object");
  ProbeSpec s;
  for (auto it = j.begin(); it != j.end(); ++it) {
    try {
      if (it.key() == "prompts") s.prompts = it->get<int>();
      else if (it.key() == "prompt_len") s.prompt_len = it->get<int>();
      else if (it.key() == "distractor_len") s.distractor_len = it->get<int>();
      else if (it.key() == "key_len") s.key_len = it->get<int>();
      else if (it.key() == "seed") s.seed = it->get<std::uint64_t>();
      else fail(ErrorCode::kConfig, "unknown key '" + it.key() + "' in probe spec");
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kConfig, "bad value for probe." + it.key() + ": " + e.what());
    }
  }
  require(s.prompts >= 1, ErrorCode::kConfig, "probe.prompts must be at least 1");
  require(s.key_len >= 1, ErrorCode::kConfig, "probe.key_len must be at least 1");
  require(s.distractor_len >= 0, ErrorCode::kConfig, "probe.distractor_len must be nonnegative");
  require(s.prompt_len >= s.key_len * 2 + s.distractor_len + 2, ErrorCode::kConfig,
          "probe.prompt_len too short for marker, key, distractor, trigger and recalled key");
  return s;
}

ProbeSpec load_probe_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open probe spec " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_probe_spec(ss.str());
}

ProbeResult probe_delayed_identifier(const ParameterStore& params, const ModelConfig& cfg,
                                     const ProbeSpec& spec) {
  require(spec.key_len >= 1, ErrorCode::kInvalidArgument, "probe key region is empty");
  require(spec.prompts >= 1, ErrorCode::kInvalidArgument, "probe needs at least one prompt");
  TaskConfig task;
  task.kind = TaskKind::kKeyRecall;
  task.vocab_size = cfg.vocab_size;
  task.seq_len = spec.prompt_len;
  task.key_len = spec.key_len;
  task.distractor_len = spec.distractor_len;
  task.seed = spec.seed;
  validate_task(task, cfg);

  const Batch batch = make_batch(task, spec.prompts, 0);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ex : batch.examples) {
    ad::Tape tape;
    const auto fwd = model::model_forward(tape, params, cfg, ex.inputs);
    const Tensor& logits = fwd.logits.lm.value();
    const std::size_t v = logits.cols();
    for (std::size_t pos : ex.key_positions) {
      const double* row = logits.data().data() + pos * v;
      const double mx = *std::max_element(row, row + v);
      double z = 0.0;
      for (std::size_t k = 0; k < v; ++k) z += std::exp(row[k] - mx);
      total += mx + std::log(z) - row[ex.targets[pos]];
      ++count;
    }
  }
  return {total / static_cast<double>(count), spec.prompt_len, spec.prompts, config_fingerprint(cfg)};
}

}  // namespace lpcsm::harness
