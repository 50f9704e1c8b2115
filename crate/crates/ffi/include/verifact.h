#ifndef VERIFACT_H
#define VERIFACT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum VfStatus {
  VF_STATUS_OK = 0,
  VF_STATUS_NULL_POINTER = 1,
  VF_STATUS_INVALID_UTF8 = 2,
  /**
   * Bad argument or configuration.
   */
  VF_STATUS_INVALID_ARGUMENT = 3,
  /**
   * Transport, provider or fixture failure.
   */
  VF_STATUS_TRANSPORT = 4,
  /**
   * Malformed or inconsistent data.
   */
  VF_STATUS_DATA = 5,
  VF_STATUS_PANIC = 6,
} VfStatus;

typedef enum VfVerdictKind {
  VF_VERDICT_KIND_SCORE = 0,
  VF_VERDICT_KIND_BINARY = 1,
  VF_VERDICT_KIND_UNCERTAIN = 2,
  VF_VERDICT_KIND_REFUSAL = 3,
} VfVerdictKind;

/**
 * Opaque fitted Platt model.
 */
typedef struct VfCalibrationModel VfCalibrationModel;

/**
 * Opaque token ledger.
 */
typedef struct VfCostLedger VfCostLedger;

/**
 * A parsed reply. `value` is the score or the 0/1 binary answer, -1 otherwise.
 */
typedef struct VfVerdict {
  enum VfVerdictKind kind;
  int32_t value;
  bool out_of_range;
} VfVerdict;

typedef struct VfMetrics {
  double accuracy;
  double f1;
} VfMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next verifact call on the same thread.
 */
const char *vf_last_error(void);

/**
 * Library version, static storage.
 */
const char *vf_version(void);

/**
 * # Safety
 * `s` must come from a verifact `char **` out-parameter, or be null.
 */
void vf_string_free(char *s);

/**
 * Parse a model reply produced by prompt `kind` (e.g. "score", "binary").
 *
 * # Safety
 * `kind` and `raw` must be NUL-terminated strings; `out` must be writable.
 */
enum VfStatus vf_parse_reply(const char *kind, const char *raw, struct VfVerdict *out);

/**
 * Render a prompt. `article` is needed for web_evidence and `demo_text`
 * with `demo_score` for the in-context kinds; pass null otherwise.
 *
 * # Safety
 * String arguments must be NUL-terminated or null where allowed; `out`
 * receives a string to release with `vf_string_free`.
 */
enum VfStatus vf_render_prompt(const char *kind,
                               const char *statement,
                               const char *article,
                               const char *demo_text,
                               uint8_t demo_score,
                               char **out);

/**
 * Binary decision for `score`: 1 (true) when score >= threshold.
 *
 * # Safety
 * `out` must be writable.
 */
enum VfStatus vf_apply_threshold(uint8_t score, uint8_t threshold, uint8_t *out);

/**
 * Accuracy-maximizing threshold over 0..=101.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` readable items; `out` writable.
 */
enum VfStatus vf_optimize_threshold(const uint8_t *scores,
                                    const uint8_t *labels,
                                    size_t n,
                                    uint8_t *out);

/**
 * Accuracy and weighted (or macro) F1 over class indices `< n_classes`.
 *
 * # Safety
 * `predicted` and `gold` must each hold `n` readable items; `out` writable.
 */
enum VfStatus vf_metrics(const size_t *predicted,
                         const size_t *gold,
                         size_t n,
                         size_t n_classes,
                         bool macro_average,
                         struct VfMetrics *out);

/**
 * Fit a Platt model on 0..=100 scores and 0/1 labels.
 *
 * # Safety
 * `scores` and `labels` must each hold `n` readable items; `out` receives a
 * handle to release with `vf_calibration_free`.
 */
enum VfStatus vf_platt_fit(const double *scores,
                           const uint8_t *labels,
                           size_t n,
                           struct VfCalibrationModel **out);

/**
 * Build a model from known parameters.
 *
 * # Safety
 * `out` receives a handle to release with `vf_calibration_free`.
 */
enum VfStatus vf_calibration_new(double slope, double intercept, struct VfCalibrationModel **out);

/**
 * # Safety
 * `model` must be a live handle; `slope` and `intercept` writable.
 */
enum VfStatus vf_calibration_params(const struct VfCalibrationModel *model,
                                    double *slope,
                                    double *intercept);

/**
 * Calibrated P(true) for one score.
 *
 * # Safety
 * `model` must be a live handle; `out` writable.
 */
enum VfStatus vf_calibration_apply(const struct VfCalibrationModel *model,
                                   double score,
                                   double *out);

/**
 * # Safety
 * `model` must come from this library and not be used afterwards.
 */
void vf_calibration_free(struct VfCalibrationModel *model);

/**
 * Expected calibration error with `bins` equal-mass bins.
 *
 * # Safety
 * `probabilities` and `labels` must each hold `n` readable items.
 */
enum VfStatus vf_ece(const double *probabilities,
                     const uint8_t *labels,
                     size_t n,
                     size_t bins,
                     double *out);

/**
 * Remove the verdict sentence and everything after it from an article.
 * `substring` switches keyword matching from whole words to substrings.
 *
 * # Safety
 * `article` must be NUL-terminated; `out` receives a string to release
 * with `vf_string_free`.
 */
enum VfStatus vf_strip_verdict(const char *article, bool substring, char **out);

/**
 * Cohen's kappa between two integer labelings.
 *
 * # Safety
 * `a` and `b` must each hold `n` readable items; `out` writable.
 */
enum VfStatus vf_kappa(const uint32_t *a, const uint32_t *b, size_t n, double *out);

/**
 * A ledger with the default price table.
 *
 * # Safety
 * `out` receives a handle to release with `vf_cost_ledger_free`.
 */
enum VfStatus vf_cost_ledger_new(struct VfCostLedger **out);

/**
 * Add or replace the USD-per-1000-token prices for a model.
 *
 * # Safety
 * `ledger` must be a live handle; `model` NUL-terminated.
 */
enum VfStatus vf_cost_ledger_set_price(struct VfCostLedger *ledger,
                                       const char *model,
                                       double usd_per_1k_input,
                                       double usd_per_1k_output);

/**
 * Record one request's token counts.
 *
 * # Safety
 * `ledger` must be a live handle; `model` NUL-terminated.
 */
enum VfStatus vf_cost_ledger_record(struct VfCostLedger *ledger,
                                    const char *model,
                                    uint64_t input_tokens,
                                    uint64_t output_tokens);

/**
 * USD spent on `model` so far.
 *
 * # Safety
 * `ledger` must be a live handle; `model` NUL-terminated; `out` writable.
 */
enum VfStatus vf_cost_ledger_usd(const struct VfCostLedger *ledger, const char *model, double *out);

/**
 * # Safety
 * `ledger` must come from this library and not be used afterwards.
 */
void vf_cost_ledger_free(struct VfCostLedger *ledger);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VERIFACT_H */
