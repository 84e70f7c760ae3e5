#ifndef PRIOMAC_H
#define PRIOMAC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PmClass {
  PM_CLASS_URGENT = 0,
  PM_CLASS_NORMAL = 1,
} PmClass;

typedef enum PmProtocol {
  PM_PROTOCOL_SSMAC = 0,
  PM_PROTOCOL_FROGMAC = 1,
} PmProtocol;

typedef enum PmStatus {
  PM_STATUS_OK = 0,
  PM_STATUS_NULL_POINTER = 1,
  PM_STATUS_INVALID_ARGUMENT = 2,
  PM_STATUS_INVALID_CONFIG = 3,
  PM_STATUS_SIMULATION_ERROR = 4,
  PM_STATUS_UTF8 = 5,
  PM_STATUS_PANIC = 6,
} PmStatus;

/**
 * Opaque run configuration.
 */
typedef struct PmConfig PmConfig;

/**
 * Opaque result of one run.
 */
typedef struct PmResult PmResult;

/**
 * Per-class outcome of one run. Delay fields are meaningful only when
 * `has_delay` is nonzero.
 */
typedef struct PmClassStats {
  uint64_t generated;
  uint64_t delivered;
  uint64_t dropped_deadline;
  uint64_t dropped_retry;
  uint64_t dropped_overflow;
  uint8_t has_delay;
  double mean_delay_us;
  uint64_t p95_delay_us;
  uint64_t max_delay_us;
} PmClassStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *pm_version(void);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next `pm_*` call on the same thread.
 */
const char *pm_last_error_message(void);

/**
 * New configuration with the default parameters.
 */
struct PmConfig *pm_config_new(void);

void pm_config_free(struct PmConfig *config);

/**
 * Sets one parameter using the same keys and value syntax as the
 * configuration files.
 */
enum PmStatus pm_config_set(struct PmConfig *config, const char *key, const char *value);

/**
 * Checks the configuration as a whole without running it.
 */
enum PmStatus pm_config_validate(const struct PmConfig *config, enum PmProtocol protocol);

/**
 * Runs one scenario. On success `*out` receives a result handle to be
 * released with [`pm_result_free`].
 */
enum PmStatus pm_run(const struct PmConfig *config,
                     enum PmProtocol protocol,
                     struct PmResult **out);

void pm_result_free(struct PmResult *result);

enum PmStatus pm_result_class_stats(const struct PmResult *result,
                                    enum PmClass class_,
                                    struct PmClassStats *out);

/**
 * The result as CSV (header plus one row per class). Returns null on
 * failure; release the string with [`pm_string_free`].
 */
char *pm_result_to_csv(const struct PmResult *result);

void pm_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PRIOMAC_H */
