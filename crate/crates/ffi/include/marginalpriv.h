#ifndef MARGINALPRIV_H
#define MARGINALPRIV_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MpStatus {
  MP_STATUS_OK = 0,
  MP_STATUS_INVALID_ARGUMENT = 1,
  MP_STATUS_DIMENSION = 2,
  MP_STATUS_DOMAIN = 3,
  MP_STATUS_SEQUENCE = 4,
  MP_STATUS_FORMAT = 5,
  MP_STATUS_IO = 6,
  MP_STATUS_NULL_POINTER = 7,
  MP_STATUS_BUFFER_TOO_SMALL = 8,
  MP_STATUS_PANIC = 9,
} MpStatus;

typedef enum MpDatabaseFormat {
  MP_DATABASE_FORMAT_BINARY = 0,
  MP_DATABASE_FORMAT_TEXT = 1,
} MpDatabaseFormat;

typedef enum MpMechanism {
  MP_MECHANISM_LAPLACE = 0,
  MP_MECHANISM_GAUSSIAN = 1,
  MP_MECHANISM_LINF = 2,
  MP_MECHANISM_GAUSS_SV = 3,
} MpMechanism;

typedef enum MpCalibration {
  MP_CALIBRATION_BASELINE = 0,
  MP_CALIBRATION_ANALYTIC = 1,
} MpCalibration;

/**
 * Opaque ±1 database.
 */
typedef struct MpDatabase MpDatabase;

/**
 * Opaque fingerprinting code.
 */
typedef struct MpFingerprintingCode MpFingerprintingCode;

/**
 * Sample-complexity bounds at one parameter point. Entries that need δ are
 * NaN when δ was not positive.
 */
typedef struct MpBounds {
  double laplace_approx_upper;
  double laplace_pure_upper;
  double fingerprinting_lower;
  double gauss_sv_upper;
  double packing_lower;
} MpBounds;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *mp_last_error(void);

/**
 * Builds a database from `rows * dims` row-major entries, each +1 or -1.
 *
 * # Safety
 * `signs` must point to `rows * dims` readable bytes and `out` must be writable.
 */
enum MpStatus mp_database_new(size_t rows,
                              size_t dims,
                              const int8_t *signs,
                              struct MpDatabase **out);

/**
 * Uniformly random database from `seed`.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_database_uniform(size_t rows, size_t dims, uint64_t seed, struct MpDatabase **out);

/**
 * Reads a binary or text database file; the format is detected.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum MpStatus mp_database_load(const char *path, struct MpDatabase **out);

/**
 * # Safety
 * `db` must be a live handle and `path` a NUL-terminated string.
 */
enum MpStatus mp_database_save(const struct MpDatabase *db,
                               const char *path,
                               enum MpDatabaseFormat format);

/**
 * # Safety
 * `db` must be NULL or a handle not yet freed.
 */
void mp_database_free(struct MpDatabase *db);

/**
 * Row count, or 0 for NULL.
 *
 * # Safety
 * `db` must be NULL or a live handle.
 */
size_t mp_database_rows(const struct MpDatabase *db);

/**
 * Column count, or 0 for NULL.
 *
 * # Safety
 * `db` must be NULL or a live handle.
 */
size_t mp_database_dims(const struct MpDatabase *db);

/**
 * Writes the `dims` exact marginals into `out`.
 *
 * # Safety
 * `db` must be a live handle and `out` must hold `len` doubles.
 */
enum MpStatus mp_database_marginals(const struct MpDatabase *db, double *out, size_t len);

/**
 * One private release of the marginals of `db` into `out`. `delta` is
 * ignored by the pure mechanisms; `calibration` only affects the Gaussian ones.
 *
 * # Safety
 * `db` must be a live handle and `out` must hold `len` doubles.
 */
enum MpStatus mp_release(const struct MpDatabase *db,
                         enum MpMechanism mechanism,
                         double epsilon,
                         double delta,
                         enum MpCalibration calibration,
                         uint64_t seed,
                         double *out,
                         size_t len);

/**
 * One draw of the L-infinity noise: `d` offsets into `offsets` and the
 * radius into `radius`.
 *
 * # Safety
 * `offsets` must hold `len` doubles and `radius` must be writable.
 */
enum MpStatus mp_linf_sample(size_t d,
                             double epsilon,
                             double sensitivity,
                             uint64_t seed,
                             double *offsets,
                             size_t len,
                             double *radius);

/**
 * Privacy guarantee for groups of `k` rows.
 *
 * # Safety
 * `epsilon_k` and `delta_k` must be writable.
 */
enum MpStatus mp_group_privacy(double epsilon,
                               double delta,
                               uint32_t k,
                               double *epsilon_k,
                               double *delta_k);

/**
 * Sample-complexity bounds; pass `delta <= 0` for pure privacy only.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_bounds(uint64_t d,
                        double alpha,
                        double epsilon,
                        double delta,
                        struct MpBounds *out);

/**
 * Minimum code length for `n` users at soundness `delta`, or 0 on error.
 */
size_t mp_fpc_min_length(size_t n, double delta);

/**
 * Generates a code for `n` users; `length = 0` selects the minimum length.
 *
 * # Safety
 * `out` must be writable.
 */
enum MpStatus mp_fpc_generate(size_t n,
                              double delta,
                              size_t length,
                              uint64_t seed,
                              struct MpFingerprintingCode **out);

/**
 * # Safety
 * `code` must be NULL or a handle not yet freed.
 */
void mp_fpc_free(struct MpFingerprintingCode *code);

/**
 * # Safety
 * `code` must be NULL or a live handle.
 */
size_t mp_fpc_users(const struct MpFingerprintingCode *code);

/**
 * # Safety
 * `code` must be NULL or a live handle.
 */
size_t mp_fpc_length(const struct MpFingerprintingCode *code);

/**
 * A new database handle holding a copy of the codebook.
 *
 * # Safety
 * `code` must be a live handle and `out` writable.
 */
enum MpStatus mp_fpc_codebook(const struct MpFingerprintingCode *code, struct MpDatabase **out);

/**
 * Traces `answers` (length = code length). Sets `accused[u]` to 1 for each
 * accused user and 0 otherwise, and the number accused in `n_accused`.
 *
 * # Safety
 * `answers` must hold `answers_len` doubles, `accused` must hold `users`
 * bytes, and `n_accused` must be writable.
 */
enum MpStatus mp_fpc_trace(const struct MpFingerprintingCode *code,
                           const double *answers,
                           size_t answers_len,
                           uint8_t *accused,
                           size_t users,
                           size_t *n_accused);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MARGINALPRIV_H */
