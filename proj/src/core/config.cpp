#include "config.hpp"

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

#include "error.hpp"

namespace lpcsm {

using nlohmann::json;

namespace {

void config_error(const std::string& msg) { fail(ErrorCode::kConfig, msg); }

void expect_object(const json& j, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
}

void reject_unknown(const json& j, const std::string& where,
                    std::initializer_list<const char*> known) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) config_error("unknown key '" + it.key() + "' in " + where);
  }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const json::exception& e) {
    config_error("bad value for " + where + "." + key + ": " + e.what());
  }
}

ControllerConfig parse_controller(const json& j) {
  const std::string where = "model.controller";
  expect_object(j, where);
  reject_unknown(j, where, {"ratio_min", "ratio_max", "ratio_init", "temperature", "adaptive"});
  ControllerConfig c;
  read(j, "ratio_min", c.ratio_min, where);
  read(j, "ratio_max", c.ratio_max, where);
  read(j, "ratio_init", c.ratio_init, where);
  read(j, "temperature", c.temperature, where);
  read(j, "adaptive", c.adaptive, where);
  return c;
}

MhcConfig parse_mhc(const json& j) {
  const std::string where = "model.mhc";
  expect_object(j, where);
  reject_unknown(j, where, {"streams", "iters"});
  MhcConfig m;
  read(j, "streams", m.streams, where);
  read(j, "iters", m.iters, where);
  return m;
}

Toggles parse_toggles(const json& j) {
  const std::string where = "model.toggles";
  expect_object(j, where);
  reject_unknown(j, where, {"slow_memory", "predictive_coding", "ont", "stop_head", "mhc"});
  Toggles t;
  read(j, "slow_memory", t.slow_memory, where);
  read(j, "predictive_coding", t.predictive_coding, where);
  read(j, "ont", t.ont, where);
  read(j, "stop_head", t.stop_head, where);
  read(j, "mhc", t.mhc, where);
  return t;
}

ModelConfig parse_model(const json& j) {
  const std::string where = "model";
  expect_object(j, where);
  reject_unknown(j, where,
                 {"vocab_size", "width", "layers", "window", "heads", "latent_dim", "chunk_size",
                  "refine_steps", "alpha_n", "max_seq_len", "norm_eps", "controller", "mhc",
                  "toggles"});
  ModelConfig m;
  read(j, "vocab_size", m.vocab_size, where);
  read(j, "width", m.width, where);
  read(j, "layers", m.layers, where);
  read(j, "window", m.window, where);
  read(j, "heads", m.heads, where);
  if (auto it = j.find("latent_dim"); it != j.end() && !it->is_null()) {
    int v = 0;
    read(j, "latent_dim", v, where);
    m.latent_dim = v;
  }
  read(j, "chunk_size", m.chunk_size, where);
  read(j, "refine_steps", m.refine_steps, where);
  read(j, "alpha_n", m.alpha_n, where);
  read(j, "max_seq_len", m.max_seq_len, where);
  read(j, "norm_eps", m.norm_eps, where);
  if (auto it = j.find("controller"); it != j.end()) m.controller = parse_controller(*it);
  if (auto it = j.find("mhc"); it != j.end()) m.mhc = parse_mhc(*it);
  if (auto it = j.find("toggles"); it != j.end()) m.toggles = parse_toggles(*it);
  return m;
}

TaskConfig parse_task(const json& j) {
  const std::string where = "task";
  expect_object(j, where);
  reject_unknown(j, where, {"kind", "vocab_size", "seq_len", "key_len", "distractor_len", "seed"});
  TaskConfig t;
  if (auto it = j.find("kind"); it != j.end()) {
    if (!it->is_string()) config_error("task.kind must be a string");
    const auto kind = it->get<std::string>();
    if (kind == "copy") {
      t.kind = TaskKind::kCopy;
    } else if (kind == "key-recall") {
      t.kind = TaskKind::kKeyRecall;
    } else {
      config_error("task.kind must be 'copy' or 'key-recall', got '" + kind + "'");
    }
  }
  read(j, "vocab_size", t.vocab_size, where);
  read(j, "seq_len", t.seq_len, where);
  read(j, "key_len", t.key_len, where);
  read(j, "distractor_len", t.distractor_len, where);
  read(j, "seed", t.seed, where);
  return t;
}

json parse_json(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kConfig, std::string("config is not valid JSON: ") + e.what());
  }
}

void check(bool ok, const std::string& msg) {
  if (!ok) config_error(msg);
}

}  // namespace

void ModelConfig::validate() const {
  check(vocab_size >= 4, "model.vocab_size must be at least 4");
  check(width >= 1, "model.width must be positive");
  check(layers >= 0, "model.layers must be non-negative");
  check(window >= 1, "model.window must be at least 1");
  check(heads >= 1 && width % heads == 0, "model.heads must divide model.width");
  check(!latent_dim || *latent_dim >= 1, "model.latent_dim must be positive when present");
  check(chunk_size >= 1, "model.chunk_size must be positive");
  check(refine_steps >= 0 && refine_steps <= 8, "model.refine_steps must lie in [0, 8]");
  check(alpha_n >= 0.0, "model.alpha_n must be non-negative");
  check(max_seq_len >= 1, "model.max_seq_len must be positive");
  check(norm_eps > 0.0, "model.norm_eps must be positive");
  check(controller.ratio_min > 0.0 && controller.ratio_min < controller.ratio_max &&
            controller.ratio_max <= 1.0,
        "controller bounds must satisfy 0 < ratio_min < ratio_max <= 1");
  check(controller.ratio_init > controller.ratio_min && controller.ratio_init < controller.ratio_max,
        "controller.ratio_init must lie strictly inside the bounds");
  check(controller.temperature > 0.0, "controller.temperature must be positive");
  check(mhc.streams >= 2, "mhc.streams must be at least 2");
  check(mhc.iters >= 1, "mhc.iters must be at least 1");
}

void RunConfig::validate() const {
  model.validate();
  check(loss.lambda_pred >= 0 && loss.lambda_sparse >= 0 && loss.lambda_mem >= 0 &&
            loss.lambda_stop >= 0,
        "loss weights must be non-negative");
  check(optimizer.lr > 0.0, "optimizer.lr must be positive");
  check(optimizer.momentum >= 0.0 && optimizer.momentum < 1.0, "optimizer.momentum must lie in [0,1)");
  check(optimizer.clip > 0.0, "optimizer.clip must be positive");
  check(task.vocab_size == model.vocab_size, "task.vocab_size must equal model.vocab_size");
  check(task.seq_len >= 2 && task.seq_len <= model.max_seq_len,
        "task.seq_len must lie in [2, model.max_seq_len]");
  check(train.batch_size >= 1, "train.batch_size must be positive");
  check(train.log_every >= 1, "train.log_every must be positive");
}

RunConfig parse_run_config(const std::string& json_text) {
  const json j = parse_json(json_text);
  expect_object(j, "config");
  reject_unknown(j, "config", {"model", "loss", "optimizer", "task", "train"});
  RunConfig rc;
  if (auto it = j.find("model"); it != j.end()) rc.model = parse_model(*it);
  if (auto it = j.find("loss"); it != j.end()) {
    expect_object(*it, "loss");
    reject_unknown(*it, "loss", {"lambda_pred", "lambda_sparse", "lambda_mem", "lambda_stop"});
    read(*it, "lambda_pred", rc.loss.lambda_pred, "loss");
    read(*it, "lambda_sparse", rc.loss.lambda_sparse, "loss");
    read(*it, "lambda_mem", rc.loss.lambda_mem, "loss");
    read(*it, "lambda_stop", rc.loss.lambda_stop, "loss");
  }
  if (auto it = j.find("optimizer"); it != j.end()) {
    expect_object(*it, "optimizer");
    reject_unknown(*it, "optimizer", {"lr", "momentum", "clip"});
    read(*it, "lr", rc.optimizer.lr, "optimizer");
    read(*it, "momentum", rc.optimizer.momentum, "optimizer");
    read(*it, "clip", rc.optimizer.clip, "optimizer");
  }
  if (auto it = j.find("task"); it != j.end()) {
    rc.task = parse_task(*it);
  } else {
    rc.task.vocab_size = rc.model.vocab_size;
  }
  if (auto it = j.find("train"); it != j.end()) {
    expect_object(*it, "train");
    reject_unknown(*it, "train", {"batch_size", "log_every"});
    read(*it, "batch_size", rc.train.batch_size, "train");
    read(*it, "log_every", rc.train.log_every, "train");
  }
  rc.validate();
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

TaskConfig parse_task_config(const std::string& json_text) {
  return parse_task(parse_json(json_text));
}

std::string model_config_to_text(const ModelConfig& m) {
  // nlohmann's default object type keeps keys sorted, which makes this canonical.
  json j;
  j["vocab_size"] = m.vocab_size;
  j["width"] = m.width;
  j["layers"] = m.layers;
  j["window"] = m.window;
  j["heads"] = m.heads;
  j["latent_dim"] = m.latent_dim ? json(*m.latent_dim) : json(nullptr);
  j["chunk_size"] = m.chunk_size;
  j["refine_steps"] = m.refine_steps;
  j["alpha_n"] = m.alpha_n;
  j["max_seq_len"] = m.max_seq_len;
  j["norm_eps"] = m.norm_eps;
  j["controller"] = {{"ratio_min", m.controller.ratio_min},
                     {"ratio_max", m.controller.ratio_max},
                     {"ratio_init", m.controller.ratio_init},
                     {"temperature", m.controller.temperature},
                     {"adaptive", m.controller.adaptive}};
  j["mhc"] = {{"streams", m.mhc.streams}, {"iters", m.mhc.iters}};
  j["toggles"] = {{"slow_memory", m.toggles.slow_memory},
                  {"predictive_coding", m.toggles.predictive_coding},
                  {"ont", m.toggles.ont},
                  {"stop_head", m.toggles.stop_head},
                  {"mhc", m.toggles.mhc}};
  return j.dump();
}

ModelConfig model_config_from_text(const std::string& text) {
  ModelConfig m = parse_model(parse_json(text));
  m.validate();
  return m;
}

std::string config_fingerprint(const ModelConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : model_config_to_text(cfg)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace lpcsm
