#ifndef LPCSM_LPCSM_H
#define LPCSM_LPCSM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define LPCSM_API __declspec(dllexport)
#else
#define LPCSM_API __attribute__((visibility("default")))
#endif

typedef enum lpcsm_status {
  LPCSM_OK = 0,
  LPCSM_INVALID_ARGUMENT = 1,
  LPCSM_SHAPE_MISMATCH = 2,
  LPCSM_MISSING_PARAMETER = 3,
  LPCSM_CONFIG_ERROR = 4,
  LPCSM_NUMERIC_ERROR = 5,
  LPCSM_IO_ERROR = 6,
  LPCSM_BAD_MAGIC = 7,
  LPCSM_VERSION_MISMATCH = 8,
  LPCSM_TRUNCATED = 9,
  LPCSM_CONFIG_MISMATCH = 10,
  LPCSM_STATE_ERROR = 11,
  LPCSM_INTERNAL_ERROR = 12
} lpcsm_status;

/* Opaque trained model: configuration plus parameters. */
typedef struct lpcsm_model lpcsm_model;

/* Message describing the last failure on the calling thread ("" if none). */
LPCSM_API const char* lpcsm_last_error(void);
LPCSM_API const char* lpcsm_status_name(lpcsm_status status);

typedef struct lpcsm_train_options {
  int32_t steps;
  uint64_t seed;
  int32_t timing;            /* 0 writes tokens_per_second as 0 */
  const char* metrics_path;  /* CSV output; NULL for none */
} lpcsm_train_options;

/* Trains from a JSON run config. On success *out owns the result. */
LPCSM_API lpcsm_status lpcsm_train(const char* config_path, const lpcsm_train_options* options,
                                   lpcsm_model** out);

LPCSM_API lpcsm_status lpcsm_model_load(const char* path, lpcsm_model** out);
LPCSM_API lpcsm_status lpcsm_model_save(const lpcsm_model* model, const char* path);
LPCSM_API void lpcsm_model_free(lpcsm_model* model);
LPCSM_API int32_t lpcsm_model_vocab_size(const lpcsm_model* model);
/* Canonical JSON of the model config; valid until the model is freed. */
LPCSM_API const char* lpcsm_model_config_json(const lpcsm_model* model);

typedef struct lpcsm_loss {
  double lm, pred, sparse, mem, stop, total;
  double effective_ratio;
} lpcsm_loss;

/* Teacher-forced loss over `batch` held-out sequences of a JSON task spec. */
LPCSM_API lpcsm_status lpcsm_eval(const lpcsm_model* model, const char* task_json, int32_t batch,
                                  lpcsm_loss* out);

/* Greedy generation. `out_tokens` receives prompt plus continuation; capacity
   must be at least prompt_len + max_new. stop_threshold < 0 disables the
   stop-head rule. */
LPCSM_API lpcsm_status lpcsm_generate(const lpcsm_model* model, const int32_t* prompt,
                                      size_t prompt_len, int32_t max_new, double stop_threshold,
                                      int32_t* out_tokens, size_t capacity, size_t* out_len);

typedef struct lpcsm_probe_result {
  double key_ce;
  int32_t prompt_length;
  int32_t prompts;
  char fingerprint[17];
} lpcsm_probe_result;

/* probe_json may be NULL for the default probe. */
LPCSM_API lpcsm_status lpcsm_probe(const lpcsm_model* model, const char* probe_json,
                                   lpcsm_probe_result* out);

typedef struct lpcsm_ablation_row {
  char variant[32];
  double final_lm;
  double delta_pct;
  double tokens_per_second;
  double final_ratio;
} lpcsm_ablation_row;

/* toggles: comma-separated names or "all". rows must hold at least 6 entries. */
LPCSM_API lpcsm_status lpcsm_ablate(const char* config_path, const char* toggles, int32_t steps,
                                    uint64_t seed, int32_t timing, lpcsm_ablation_row* rows,
                                    size_t capacity, size_t* out_rows);

typedef struct lpcsm_ont_report {
  int32_t pass;
  int32_t trials;
  double seconds;
  double feasibility, decomposition, pythagorean, oracle, variational;
} lpcsm_ont_report;

/* Runs the ONT property suite; `text` (may be NULL) receives a printable
   report valid until the next call on this thread. */
LPCSM_API lpcsm_status lpcsm_verify_ont(int32_t trials, uint64_t seed, lpcsm_ont_report* out,
                                        const char** text);

#ifdef __cplusplus
}
#endif

#endif
