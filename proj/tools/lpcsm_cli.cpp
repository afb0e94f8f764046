// Command-line front end over the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "lpcsm/lpcsm.h"

namespace {

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitNumeric = 3, kExitIo = 4, kExitOther = 5 };

int exit_code_for(lpcsm_status s) {
  switch (s) {
    case LPCSM_OK: return kExitOk;
    case LPCSM_CONFIG_ERROR:
    case LPCSM_CONFIG_MISMATCH:
    case LPCSM_INVALID_ARGUMENT: return kExitConfig;
    case LPCSM_NUMERIC_ERROR: return kExitNumeric;
    case LPCSM_IO_ERROR:
    case LPCSM_BAD_MAGIC:
    case LPCSM_VERSION_MISMATCH:
    case LPCSM_TRUNCATED: return kExitIo;
    default: return kExitOther;
  }
}

int report(lpcsm_status s) {
  if (s != LPCSM_OK) {
    std::fprintf(stderr, "error (%s): %s\n", lpcsm_status_name(s), lpcsm_last_error());
  }
  return exit_code_for(s);
}

// Accepts inline JSON or a path to a JSON file.
bool read_json_arg(const std::string& arg, std::string& out) {
  if (!arg.empty() && arg.front() == '{') {
    out = arg;
    return true;
  }
  std::ifstream in(arg);
  if (!in) return false;
  std::stringstream ss;
  ss << in.rdbuf();
  out = ss.str();
  return true;
}

std::vector<int32_t> parse_tokens(const std::string& text) {
  std::vector<int32_t> out;
  std::string cleaned = text;
  for (char& c : cleaned) {
    if (c == ',') c = ' ';
  }
  std::stringstream ss(cleaned);
  long v;
  while (ss >> v) out.push_back(static_cast<int32_t>(v));
  if (!ss.eof()) throw CLI::ValidationError("--prompt", "expected integer tokens");
  return out;
}

struct ModelHandle {
  lpcsm_model* ptr = nullptr;
  ~ModelHandle() { lpcsm_model_free(ptr); }
};

int cmd_train(const std::string& config, int steps, uint64_t seed, const std::string& out,
              const std::string& metrics, bool no_timing) {
  lpcsm_train_options opts{steps, seed, no_timing ? 0 : 1, metrics.empty() ? nullptr : metrics.c_str()};
  ModelHandle model;
  if (auto s = lpcsm_train(config.c_str(), &opts, &model.ptr); s != LPCSM_OK) return report(s);
  if (auto s = lpcsm_model_save(model.ptr, out.c_str()); s != LPCSM_OK) return report(s);
  std::printf("trained %d steps, checkpoint written to %s\n", steps, out.c_str());
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& task_arg, int batch) {
  std::string task;
  if (!read_json_arg(task_arg, task)) {
    std::fprintf(stderr, "error (I/O error): cannot read task spec %s\n", task_arg.c_str());
    return kExitIo;
  }
  ModelHandle model;
  if (auto s = lpcsm_model_load(ckpt.c_str(), &model.ptr); s != LPCSM_OK) return report(s);
  lpcsm_loss loss{};
  if (auto s = lpcsm_eval(model.ptr, task.c_str(), batch, &loss); s != LPCSM_OK) return report(s);
  std::printf("lm,pred,sparse,mem,stop,total,effective_ratio\n%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
              loss.lm, loss.pred, loss.sparse, loss.mem, loss.stop, loss.total, loss.effective_ratio);
  return kExitOk;
}

int cmd_generate(const std::string& ckpt, const std::string& prompt_text, int max_new,
                 double threshold) {
  const auto prompt = parse_tokens(prompt_text);
  ModelHandle model;
  if (auto s = lpcsm_model_load(ckpt.c_str(), &model.ptr); s != LPCSM_OK) return report(s);
  std::vector<int32_t> out(prompt.size() + static_cast<size_t>(std::max(max_new, 0)));
  size_t n = 0;
  auto s = lpcsm_generate(model.ptr, prompt.data(), prompt.size(), max_new, threshold, out.data(),
                          out.size(), &n);
  if (s != LPCSM_OK) return report(s);
  for (size_t i = 0; i < n; ++i) std::printf(i ? " %d" : "%d", out[i]);
  std::printf("\n");
  return kExitOk;
}

int cmd_probe(const std::string& ckpt, const std::string& spec_arg) {
  std::string spec;
  if (!spec_arg.empty() && !read_json_arg(spec_arg, spec)) {
    std::fprintf(stderr, "error (I/O error): cannot read probe spec %s\n", spec_arg.c_str());
    return kExitIo;
  }
  ModelHandle model;
  if (auto s = lpcsm_model_load(ckpt.c_str(), &model.ptr); s != LPCSM_OK) return report(s);
  lpcsm_probe_result r{};
  if (auto s = lpcsm_probe(model.ptr, spec.empty() ? nullptr : spec.c_str(), &r); s != LPCSM_OK)
    return report(s);
  std::printf("key_ce,prompt_length,prompts,config_fingerprint\n%.17g,%d,%d,%s\n", r.key_ce,
              r.prompt_length, r.prompts, r.fingerprint);
  return kExitOk;
}

int cmd_ablate(const std::string& config, const std::string& toggles, int steps, uint64_t seed,
               bool no_timing) {
  lpcsm_ablation_row rows[6];
  size_t n = 0;
  auto s = lpcsm_ablate(config.c_str(), toggles.c_str(), steps, seed, no_timing ? 0 : 1, rows, 6, &n);
  if (s != LPCSM_OK) return report(s);
  std::printf("variant,final_lm,delta_pct,tokens_per_second,final_ratio\n");
  for (size_t i = 0; i < n; ++i) {
    std::printf("%s,%.17g,%.6f,%.6g,%.17g\n", rows[i].variant, rows[i].final_lm, rows[i].delta_pct,
                rows[i].tokens_per_second, rows[i].final_ratio);
  }
  return kExitOk;
}

int cmd_verify_ont(int trials, uint64_t seed) {
  lpcsm_ont_report r{};
  const char* text = nullptr;
  if (auto s = lpcsm_verify_ont(trials, seed, &r, &text); s != LPCSM_OK) return report(s);
  std::fputs(text, stdout);
  return r.pass ? kExitOk : kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lpcsm: train, evaluate and probe LPC-SM language models"};
  app.require_subcommand(1);

  std::string config, out, metrics, ckpt, task, prompt, spec, toggles = "all";
  int steps = 0, max_new = 16, trials = 1000, batch = 8;
  uint64_t seed = 1;
  double threshold = -1.0;
  bool no_timing = false;

  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config, "run config (JSON)")->required();
  train->add_option("--steps", steps, "optimisation steps")->required()->check(CLI::NonNegativeNumber);
  train->add_option("--seed", seed, "initialisation and data seed");
  train->add_option("--out", out, "checkpoint path")->required();
  train->add_option("--metrics", metrics, "CSV metrics path");
  train->add_flag("--no-timing", no_timing, "write 0 for tokens_per_second (bit-comparable logs)");

  auto* eval = app.add_subcommand("eval", "teacher-forced loss on held-out task batches");
  eval->add_option("--ckpt", ckpt, "checkpoint")->required();
  eval->add_option("--task", task, "task spec: JSON file or inline JSON")->required();
  eval->add_option("--batch", batch, "sequences to evaluate")->check(CLI::PositiveNumber);

  auto* gen = app.add_subcommand("generate", "greedy decoding");
  gen->add_option("--ckpt", ckpt, "checkpoint")->required();
  gen->add_option("--prompt", prompt, "prompt tokens, comma or space separated")->required();
  gen->add_option("--max-new", max_new, "maximum new tokens")->check(CLI::NonNegativeNumber);
  gen->add_option("--stop-threshold", threshold, "halt when the stop head's probability exceeds this");

  auto* probe = app.add_subcommand("probe", "delayed-identifier key cross-entropy");
  probe->add_option("--ckpt", ckpt, "checkpoint")->required();
  probe->add_option("--probe-spec", spec, "probe spec: JSON file or inline JSON");

  auto* ablate = app.add_subcommand("ablate", "train the full model and single-mechanism ablations");
  ablate->add_option("--config", config, "run config (JSON)")->required();
  ablate->add_option("--steps", steps, "optimisation steps")->required()->check(CLI::NonNegativeNumber);
  ablate->add_option("--seed", seed, "seed shared by every variant");
  ablate->add_option("--toggles", toggles, "comma-separated mechanisms, or all");
  ablate->add_flag("--no-timing", no_timing, "write 0 for tokens_per_second");

  auto* ont = app.add_subcommand("verify-ont", "run the ONT property suite");
  ont->add_option("--trials", trials, "random trials")->check(CLI::PositiveNumber);
  ont->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train) return cmd_train(config, steps, seed, out, metrics, no_timing);
    if (*eval) return cmd_eval(ckpt, task, batch);
    if (*gen) return cmd_generate(ckpt, prompt, max_new, threshold);
    if (*probe) return cmd_probe(ckpt, spec);
    if (*ablate) return cmd_ablate(config, toggles, steps, seed, no_timing);
    if (*ont) return cmd_verify_ont(trials, seed);
  } catch (const CLI::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitUsage;
}
