#ifndef DTM_NAV_H
#define DTM_NAV_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DtmNavFixStatus {
  DTM_NAV_FIX_STATUS_APPLIED = 0,
  DTM_NAV_FIX_STATUS_REJECTED = 1,
  DTM_NAV_FIX_STATUS_SKIPPED = 2,
  DTM_NAV_FIX_STATUS_VISION_DISABLED = 3,
} DtmNavFixStatus;

typedef enum DtmNavStatus {
  DTM_NAV_STATUS_OK = 0,
  DTM_NAV_STATUS_NULL_POINTER = 1,
  DTM_NAV_STATUS_INVALID_ARGUMENT = 2,
  DTM_NAV_STATUS_INVALID_CONFIG = 3,
  DTM_NAV_STATUS_IO = 4,
  DTM_NAV_STATUS_COMPUTATION = 5,
  DTM_NAV_STATUS_PANIC = 6,
} DtmNavStatus;

/**
 * Scenario configuration.
 */
typedef struct DtmNavConfig DtmNavConfig;

/**
 * Result of a closed-loop flight.
 */
typedef struct DtmNavFlight DtmNavFlight;

/**
 * Result of a Monte-Carlo sweep.
 */
typedef struct DtmNavMetrics DtmNavMetrics;

/**
 * Summary of one sweep value.
 */
typedef struct DtmNavMetricsRow {
  double value;
  uint64_t trials;
  uint64_t converged;
  uint64_t not_converged;
  uint64_t failed;
  uint64_t accepted;
  double acceptance_rate;
  double sigma_l;
  double sigma_h;
  double predicted_position_std;
  double position_error_std;
  double predicted_ego_rotation_std;
} DtmNavMetricsRow;

/**
 * One IMU tick. Errors are truth minus estimate: position (m), velocity
 * (m/s), attitude (rad).
 */
typedef struct DtmNavSample {
  double time;
  double truth_position[3];
  double truth_velocity[3];
  double raw_error[9];
  double nav_error[9];
  double nav_std[9];
} DtmNavSample;

/**
 * One vision fix. Arrays are NaN when the solver produced no pose.
 */
typedef struct DtmNavFix {
  uint64_t index;
  double time;
  enum DtmNavFixStatus status;
  bool rolled_back;
  uint32_t strikes;
  bool disabled;
  double second_pose_std[6];
  double vision_error[6];
} DtmNavFix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next library call on the same thread.
 */
const char *dtm_nav_last_error(void);

/**
 * Library version as a static string.
 */
const char *dtm_nav_version(void);

/**
 * Default scenario.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum DtmNavStatus dtm_nav_config_default(struct DtmNavConfig **out);

/**
 * Parses a scenario from TOML text; missing keys take their defaults.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_config_parse(const char *toml, struct DtmNavConfig **out);

/**
 * Reads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_config_load(const char *path, struct DtmNavConfig **out);

/**
 * Fully resolved configuration as TOML; release with [`dtm_nav_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_config_to_toml(const struct DtmNavConfig *cfg, char **out);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void dtm_nav_config_free(struct DtmNavConfig *cfg);

/**
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void dtm_nav_string_free(char *s);

/**
 * Monte-Carlo sweep of `param` over `count` values.
 *
 * # Safety
 * `cfg` must be a live handle, `param` a NUL-terminated string, `values`
 * point to `count` doubles and `out` be a valid pointer.
 */
enum DtmNavStatus dtm_nav_sweep(const struct DtmNavConfig *cfg,
                                const char *param,
                                const double *values,
                                size_t count,
                                struct DtmNavMetrics **out);

/**
 * # Safety
 * `m` must be a live handle.
 */
size_t dtm_nav_metrics_len(const struct DtmNavMetrics *m);

/**
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_metrics_row(const struct DtmNavMetrics *m,
                                      size_t index,
                                      struct DtmNavMetricsRow *out);

/**
 * Writes the sweep CSV and manifest into `dir`.
 *
 * # Safety
 * `m` must be a live handle and `dir` a NUL-terminated string.
 */
enum DtmNavStatus dtm_nav_metrics_write(const struct DtmNavMetrics *m, const char *dir);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void dtm_nav_metrics_free(struct DtmNavMetrics *m);

/**
 * Closed-loop flight.
 *
 * # Safety
 * `cfg` must be a live handle and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_flight(const struct DtmNavConfig *cfg, struct DtmNavFlight **out);

/**
 * # Safety
 * `f` must be a live handle.
 */
size_t dtm_nav_flight_sample_count(const struct DtmNavFlight *f);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_flight_sample(const struct DtmNavFlight *f,
                                        size_t index,
                                        struct DtmNavSample *out);

/**
 * # Safety
 * `f` must be a live handle.
 */
size_t dtm_nav_flight_fix_count(const struct DtmNavFlight *f);

/**
 * # Safety
 * `f` must be a live handle and `out` a valid pointer.
 */
enum DtmNavStatus dtm_nav_flight_fix(const struct DtmNavFlight *f,
                                     size_t index,
                                     struct DtmNavFix *out);

/**
 * Writes the trajectory and fix CSVs and the manifest into `dir`.
 *
 * # Safety
 * `f` must be a live handle and `dir` a NUL-terminated string.
 */
enum DtmNavStatus dtm_nav_flight_write(const struct DtmNavFlight *f, const char *dir);

/**
 * # Safety
 * `f` must be null or a handle not yet freed.
 */
void dtm_nav_flight_free(struct DtmNavFlight *f);

/**
 * Runs the built-in checks. `passed` and `total` may be null.
 *
 * # Safety
 * Non-null pointers must be valid.
 */
enum DtmNavStatus dtm_nav_selftest(size_t *passed, size_t *total);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTM_NAV_H */
