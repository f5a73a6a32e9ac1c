#ifndef EHR_SCALING_H
#define EHR_SCALING_H

/* Generated by cbindgen from crates/ffi; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EhrStatus {
  EHR_STATUS_OK = 0,
  EHR_STATUS_NULL_POINTER = 1,
  EHR_STATUS_INVALID_ARGUMENT = 2,
  EHR_STATUS_IO = 3,
  EHR_STATUS_PARSE = 4,
  EHR_STATUS_BUDGET_TOO_SMALL = 5,
  EHR_STATUS_DEGENERATE_FIT = 6,
  EHR_STATUS_BUFFER_TOO_SMALL = 7,
  EHR_STATUS_PANIC = 8,
} EhrStatus;

/*
 Opaque model parameters.
 */
typedef struct EhrModel EhrModel;

/*
 Opaque token vocabulary.
 */
typedef struct EhrVocabulary EhrVocabulary;

typedef struct EhrModelConfig {
  size_t vocab_size;
  size_t d_model;
  size_t n_layers;
  size_t n_heads;
  size_t n_kv_heads;
  size_t d_ff;
  size_t context_len;
  double rope_base;
} EhrModelConfig;

/*
 Unsigned 128-bit integer as two 64-bit halves.
 */
typedef struct EhrU128 {
  uint64_t hi;
  uint64_t lo;
} EhrU128;

/*
 `ln Y = log_coefficient + exponent * ln C`.
 */
typedef struct EhrPowerLaw {
  double exponent;
  double log_coefficient;
  double r2;
  double c_min;
  double c_max;
} EhrPowerLaw;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread; empty after a success.
 Valid until the next call into this library on the same thread.
 */
const char *ehr_last_error(void);

/*
 Library version, a static NUL-terminated string.
 */
const char *ehr_version(void);

/*
 Loads a `vocab.txt` file.

 # Safety
 `path` must be a NUL-terminated string and `out` writable.
 */
enum EhrStatus ehr_vocabulary_open(const char *path, struct EhrVocabulary **out_vocab);

/*
 Number of tokens; 0 for a null handle.

 # Safety
 `vocab` must be null or a live handle.
 */
size_t ehr_vocabulary_len(const struct EhrVocabulary *vocab);

/*
 # Safety
 `vocab` must be a live handle, `token` NUL-terminated, `out_id` writable.
 */
enum EhrStatus ehr_vocabulary_encode(const struct EhrVocabulary *vocab,
                                     const char *token,
                                     uint32_t *out_id);

/*
 Writes the token text and a NUL into `buf`. `out_len` receives the text
 length without the NUL, also when the buffer is too small.

 # Safety
 `vocab` must be a live handle, `buf` valid for `capacity` bytes and
 `out_len` writable.
 */
enum EhrStatus ehr_vocabulary_decode(const struct EhrVocabulary *vocab,
                                     uint32_t id,
                                     char *buf,
                                     size_t capacity,
                                     size_t *out_len);

/*
 # Safety
 `vocab` must be null or a handle not yet freed.
 */
void ehr_vocabulary_free(struct EhrVocabulary *vocab);

/*
 Loads a checkpoint file.

 # Safety
 `path` must be NUL-terminated and `out_model` writable.
 */
enum EhrStatus ehr_model_open(const char *path, struct EhrModel **out_model);

/*
 Randomly initialized model for `config`.

 # Safety
 `config` must be readable and `out_model` writable.
 */
enum EhrStatus ehr_model_init(const struct EhrModelConfig *config,
                              uint64_t seed,
                              struct EhrModel **out_model);

/*
 Writes the model as a checkpoint file.

 # Safety
 `model` must be a live handle and `path` NUL-terminated.
 */
enum EhrStatus ehr_model_save(const struct EhrModel *model, const char *path);

/*
 # Safety
 `model` must be a live handle and `out_config` writable.
 */
enum EhrStatus ehr_model_config(const struct EhrModel *model, struct EhrModelConfig *out_config);

/*
 Next-token logits after `tokens`, written to `out_logits` (at least
 `vocab_size` floats).

 # Safety
 `model` must be a live handle, `tokens` valid for `n_tokens` values and
 `out_logits` valid for `capacity` floats.
 */
enum EhrStatus ehr_model_next_logits(const struct EhrModel *model,
                                     const uint32_t *tokens,
                                     size_t n_tokens,
                                     float *out_logits,
                                     size_t capacity);

/*
 # Safety
 `model` must be null or a handle not yet freed.
 */
void ehr_model_free(struct EhrModel *model);

/*
 Exact parameter count.

 # Safety
 `config` must be readable and `out_count` writable.
 */
enum EhrStatus ehr_count_params(const struct EhrModelConfig *config, uint64_t *out_count);

/*
 Forward FLOPs per token at context `seq_len`.

 # Safety
 `config` must be readable and `out_flops` writable.
 */
enum EhrStatus ehr_forward_flops_per_token(const struct EhrModelConfig *config,
                                           size_t seq_len,
                                           struct EhrU128 *out_flops);

/*
 Training FLOPs for `n_tokens` tokens.

 # Safety
 `config` must be readable and `out_flops` writable.
 */
enum EhrStatus ehr_training_flops(const struct EhrModelConfig *config,
                                  struct EhrU128 n_tokens,
                                  size_t seq_len,
                                  struct EhrU128 *out_flops);

/*
 Largest token count whose training cost fits in `budget`.

 # Safety
 `config` must be readable and `out_tokens` writable.
 */
enum EhrStatus ehr_tokens_for_budget(const struct EhrModelConfig *config,
                                     struct EhrU128 budget,
                                     size_t seq_len,
                                     struct EhrU128 *out_tokens);

/*
 Ratio of the PaLM-style per-token estimate to the exact count.

 # Safety
 `config` must be readable and `out_ratio` writable.
 */
enum EhrStatus ehr_palm_ratio(const struct EhrModelConfig *config,
                              size_t seq_len,
                              double *out_ratio);

/*
 Empirical ROC AUC; `labels` holds 0 or 1 per score.

 # Safety
 `scores` and `labels` must be valid for `n` values and `out_auc` writable.
 */
enum EhrStatus ehr_empirical_auc(const double *scores,
                                 const uint8_t *labels,
                                 size_t n,
                                 double *out_auc);

/*
 Least-squares power law through `(c[i], y[i])` in log-log space.

 # Safety
 `c` and `y` must be valid for `n` values and `out_fit` writable.
 */
enum EhrStatus ehr_fit_power_law(const double *c,
                                 const double *y,
                                 size_t n,
                                 struct EhrPowerLaw *out_fit);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EHR_SCALING_H */
