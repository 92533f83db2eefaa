#ifndef RTLFORGE_H
#define RTLFORGE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by rtlforge FFI calls.
 */
typedef enum RtlforgeStatus {
  Ok = 0,
  NullArgument = 1,
  InvalidUtf8 = 2,
  ParseFailed = 3,
  DomainError = 4,
  NoCodeFound = 5,
  Internal = 6,
} RtlforgeStatus;

/**
 * Opaque engine handle holding the error categorizer.
 */
typedef struct RtlforgeEngine RtlforgeEngine;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null when the last
 * call succeeded. The pointer stays valid until the next failing call.
 */
const char *rtlforge_last_error(void);

/**
 * Library version as a static string.
 */
const char *rtlforge_version(void);

/**
 * Frees a string allocated by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned through an out-parameter of
 * this library, or null.
 */
void rtlforge_string_free(char *s);

/**
 * Creates an engine with the default category rule table.
 */
struct RtlforgeEngine *rtlforge_engine_new(void);

/**
 * Destroys an engine handle.
 *
 * # Safety
 * `engine` must come from `rtlforge_engine_new` and not be used afterwards.
 */
void rtlforge_engine_free(struct RtlforgeEngine *engine);

/**
 * ceil(chars/4) token estimate; -1 on invalid input.
 */
int64_t rtlforge_estimate_tokens(const char *text);

/**
 * Composite quality score from the four components (weights 0.6/0.2/0.1/0.1).
 */
double rtlforge_quality_composite(double functional,
                                  double compile,
                                  double port_completeness,
                                  double structure);

/**
 * Unbiased pass@k estimator 1 - C(n-c,k)/C(n,k).
 */
enum RtlforgeStatus rtlforge_pass_at_k(uint64_t n, uint64_t c, uint64_t k, double *out);

/**
 * BLEU-4 of a candidate against `n_references` reference strings.
 */
enum RtlforgeStatus rtlforge_bleu(const char *candidate,
                                  const char *const *references,
                                  uintptr_t n_references,
                                  double *out);

/**
 * Extracts the Verilog candidate from raw model output. `is_generation`
 * selects the strict generation-task rules (whole-text fallback is
 * comprehension-only).
 */
enum RtlforgeStatus rtlforge_extract_code(const char *raw, bool is_generation, char **out);

/**
 * Lints Verilog source: port list, zombie ports, structure checks. The
 * result is a JSON object written to `out`.
 */
enum RtlforgeStatus rtlforge_lint_json(const char *code, char **out);

/**
 * Categorizes a diagnostic or test-log message; writes the category name.
 */
enum RtlforgeStatus rtlforge_categorize(const struct RtlforgeEngine *engine,
                                        const char *message,
                                        char **out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* RTLFORGE_H */
