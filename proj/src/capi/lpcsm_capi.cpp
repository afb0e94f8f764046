#include "lpcsm/lpcsm.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <new>
#include <string>

#include "ablate.hpp"
#include "checkpoint.hpp"
#include "error.hpp"
#include "ont_suite.hpp"
#include "probe.hpp"
#include "runtime.hpp"
#include "train.hpp"

struct lpcsm_model {
  lpcsm::ModelConfig config;
  lpcsm::ParameterStore params;
  std::string config_text;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_report_text;

lpcsm_status to_status(lpcsm::ErrorCode code) {
  using lpcsm::ErrorCode;
  switch (code) {
    case ErrorCode::kInvalidArgument: return LPCSM_INVALID_ARGUMENT;
    case ErrorCode::kShapeMismatch: return LPCSM_SHAPE_MISMATCH;
    case ErrorCode::kMissingParameter: return LPCSM_MISSING_PARAMETER;
    case ErrorCode::kConfig: return LPCSM_CONFIG_ERROR;
    case ErrorCode::kNumeric: return LPCSM_NUMERIC_ERROR;
    case ErrorCode::kIo: return LPCSM_IO_ERROR;
    case ErrorCode::kBadMagic: return LPCSM_BAD_MAGIC;
    case ErrorCode::kVersionMismatch: return LPCSM_VERSION_MISMATCH;
    case ErrorCode::kTruncated: return LPCSM_TRUNCATED;
    case ErrorCode::kConfigMismatch: return LPCSM_CONFIG_MISMATCH;
    case ErrorCode::kState: return LPCSM_STATE_ERROR;
  }
  return LPCSM_INTERNAL_ERROR;
}

template <class F>
lpcsm_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return LPCSM_OK;
  } catch (const lpcsm::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown failure";
  }
  return LPCSM_INTERNAL_ERROR;
}

void need(const void* p, const char* what) {
  if (!p) lpcsm::fail(lpcsm::ErrorCode::kInvalidArgument, std::string(what) + " is null");
}

lpcsm_model* wrap(lpcsm::ModelConfig cfg, lpcsm::ParameterStore params) {
  auto* m = new lpcsm_model{std::move(cfg), std::move(params), {}};
  m->config_text = lpcsm::model_config_to_text(m->config);
  return m;
}

}  // namespace

extern "C" {

const char* lpcsm_last_error(void) { return g_last_error.c_str(); }

const char* lpcsm_status_name(lpcsm_status status) {
  switch (status) {
    case LPCSM_OK: return "ok";
    case LPCSM_INVALID_ARGUMENT: return "invalid argument";
    case LPCSM_SHAPE_MISMATCH: return "shape mismatch";
    case LPCSM_MISSING_PARAMETER: return "missing parameter";
    case LPCSM_CONFIG_ERROR: return "config error";
    case LPCSM_NUMERIC_ERROR: return "numeric error";
    case LPCSM_IO_ERROR: return "I/O error";
    case LPCSM_BAD_MAGIC: return "bad magic";
    case LPCSM_VERSION_MISMATCH: return "version mismatch";
    case LPCSM_TRUNCATED: return "truncated";
    case LPCSM_CONFIG_MISMATCH: return "config mismatch";
    case LPCSM_STATE_ERROR: return "state error";
    case LPCSM_INTERNAL_ERROR: return "internal error";
  }
  return "unknown";
}

lpcsm_status lpcsm_train(const char* config_path, const lpcsm_train_options* options,
                         lpcsm_model** out) {
  return guarded([&] {
    need(config_path, "config_path");
    need(options, "options");
    need(out, "out");
    *out = nullptr;
    const lpcsm::RunConfig cfg = lpcsm::load_run_config(config_path);
    lpcsm::harness::TrainOptions opts;
    opts.steps = options->steps;
    opts.seed = options->seed;
    opts.timing = options->timing != 0;
    std::ofstream metrics;
    if (options->metrics_path) {
      metrics.open(options->metrics_path, std::ios::trunc);
      if (!metrics) lpcsm::fail(lpcsm::ErrorCode::kIo, std::string("cannot write ") + options->metrics_path);
      opts.metrics = &metrics;
      opts.dump_path = std::string(options->metrics_path) + ".nonfinite.ckpt";
    }
    auto result = lpcsm::harness::train(cfg, opts);
    *out = wrap(cfg.model, std::move(result.params));
  });
}

lpcsm_status lpcsm_model_load(const char* path, lpcsm_model** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    auto ck = lpcsm::harness::load_checkpoint(path);
    *out = wrap(ck.config, std::move(ck.params));
  });
}

lpcsm_status lpcsm_model_save(const lpcsm_model* model, const char* path) {
  return guarded([&] {
    need(model, "model");
    need(path, "path");
    lpcsm::harness::save_checkpoint(model->params, model->config, path);
  });
}

void lpcsm_model_free(lpcsm_model* model) { delete model; }

int32_t lpcsm_model_vocab_size(const lpcsm_model* model) {
  return model ? model->config.vocab_size : 0;
}

const char* lpcsm_model_config_json(const lpcsm_model* model) {
  return model ? model->config_text.c_str() : "";
}

lpcsm_status lpcsm_eval(const lpcsm_model* model, const char* task_json, int32_t batch,
                        lpcsm_loss* out) {
  return guarded([&] {
    need(model, "model");
    need(task_json, "task_json");
    need(out, "out");
    lpcsm::RunConfig cfg;
    cfg.model = model->config;
    const lpcsm::TaskConfig task = lpcsm::parse_task_config(task_json);
    const auto m = lpcsm::harness::evaluate(model->params, cfg, task, batch);
    *out = {m.loss.lm, m.loss.pred, m.loss.sparse, m.loss.mem, m.loss.stop, m.loss.total,
            m.effective_ratio};
  });
}

lpcsm_status lpcsm_generate(const lpcsm_model* model, const int32_t* prompt, size_t prompt_len,
                            int32_t max_new, double stop_threshold, int32_t* out_tokens,
                            size_t capacity, size_t* out_len) {
  return guarded([&] {
    need(model, "model");
    need(prompt, "prompt");
    need(out_tokens, "out_tokens");
    need(out_len, "out_len");
    if (max_new < 0 || capacity < prompt_len + static_cast<size_t>(max_new)) {
      lpcsm::fail(lpcsm::ErrorCode::kInvalidArgument, "output buffer too small");
    }
    lpcsm::runtime::StopPolicy policy;
    policy.eos_token = model->config.eos_token();
    if (stop_threshold >= 0.0) policy.stop_threshold = stop_threshold;
    std::vector<int> p(prompt, prompt + prompt_len);
    auto g = lpcsm::runtime::generate(p, max_new, model->params, model->config, policy);
    for (size_t i = 0; i < g.tokens.size(); ++i) out_tokens[i] = g.tokens[i];
    *out_len = g.tokens.size();
  });
}

lpcsm_status lpcsm_probe(const lpcsm_model* model, const char* probe_json, lpcsm_probe_result* out) {
  return guarded([&] {
    need(model, "model");
    need(out, "out");
    const auto spec = probe_json ? lpcsm::harness::parse_probe_spec(probe_json)
                                 : lpcsm::harness::ProbeSpec{};
    const auto r = lpcsm::harness::probe_delayed_identifier(model->params, model->config, spec);
    out->key_ce = r.key_ce;
    out->prompt_length = r.prompt_length;
    out->prompts = r.prompts;
    std::snprintf(out->fingerprint, sizeof out->fingerprint, "%s", r.fingerprint.c_str());
  });
}

lpcsm_status lpcsm_ablate(const char* config_path, const char* toggles, int32_t steps, uint64_t seed,
                          int32_t timing, lpcsm_ablation_row* rows, size_t capacity,
                          size_t* out_rows) {
  return guarded([&] {
    need(config_path, "config_path");
    need(toggles, "toggles");
    need(rows, "rows");
    need(out_rows, "out_rows");
    const auto cfg = lpcsm::load_run_config(config_path);
    const auto names = lpcsm::harness::parse_toggle_list(toggles);
    if (capacity < names.size() + 1) {
      lpcsm::fail(lpcsm::ErrorCode::kInvalidArgument, "row buffer too small");
    }
    const auto table = lpcsm::harness::ablate(cfg, names, steps, seed, timing != 0);
    for (size_t i = 0; i < table.size(); ++i) {
      std::snprintf(rows[i].variant, sizeof rows[i].variant, "%s", table[i].variant.c_str());
      rows[i].final_lm = table[i].final_lm;
      rows[i].delta_pct = table[i].delta_pct;
      rows[i].tokens_per_second = table[i].tokens_per_second;
      rows[i].final_ratio = table[i].final_ratio;
    }
    *out_rows = table.size();
  });
}

lpcsm_status lpcsm_verify_ont(int32_t trials, uint64_t seed, lpcsm_ont_report* out,
                              const char** text) {
  return guarded([&] {
    need(out, "out");
    const auto r = lpcsm::harness::run_ont_suite(trials, seed);
    out->pass = r.pass ? 1 : 0;
    out->trials = r.trials;
    out->seconds = r.seconds;
    for (const auto& c : r.checks) {
      if (c.name == "feasibility") out->feasibility = c.worst;
      else if (c.name == "decomposition") out->decomposition = c.worst;
      else if (c.name == "pythagorean") out->pythagorean = c.worst;
      else if (c.name == "oracle_equivalence") out->oracle = c.worst;
      else if (c.name == "variational_identity") out->variational = c.worst;
    }
    g_report_text = lpcsm::harness::format_ont_report(r);
    if (text) *text = g_report_text.c_str();
  });
}

}  // extern "C"
