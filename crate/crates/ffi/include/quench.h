#ifndef QUENCH_H
#define QUENCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes returned by every fallible function.
 */
typedef enum QuenchStatus {
  QUENCH_STATUS_OK = 0,
  QUENCH_STATUS_NULL_POINTER = 1,
  QUENCH_STATUS_INVALID_ARGUMENT = 2,
  QUENCH_STATUS_TOO_LARGE = 3,
  QUENCH_STATUS_BUFFER_TOO_SMALL = 4,
  QUENCH_STATUS_RUNTIME = 5,
  QUENCH_STATUS_PANIC = 6,
} QuenchStatus;

/**
 * Lattice geometry for one architecture.
 */
typedef struct QuenchLattice QuenchLattice;

/**
 * Serialized report of a harness job.
 */
typedef struct QuenchReport QuenchReport;

/**
 * Output distribution of one prepared and quenched resource state.
 */
typedef struct QuenchState QuenchState;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *quench_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *quench_version(void);

/**
 * Build a lattice. `arch` is 1, 2 or 3.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum QuenchStatus quench_lattice_new(uint32_t arch,
                                     size_t rows,
                                     size_t cols,
                                     struct QuenchLattice **out);

/**
 * # Safety
 * `lattice` must be null or a handle from [`quench_lattice_new`] not yet freed.
 */
void quench_lattice_free(struct QuenchLattice *lattice);

/**
 * Number of qubits on the lattice, or 0 for a null handle.
 *
 * # Safety
 * `lattice` must be null or a live handle.
 */
size_t quench_lattice_n_sites(const struct QuenchLattice *lattice);

/**
 * Sample preparation angles from `seed`, quench and compute the exact
 * measurement distribution.
 *
 * # Safety
 * `lattice` must be a live handle and `out` valid writable storage.
 */
enum QuenchStatus quench_state_prepare(const struct QuenchLattice *lattice,
                                       uint64_t seed,
                                       struct QuenchState **out);

/**
 * # Safety
 * `state` must be null or a handle from [`quench_state_prepare`] not yet freed.
 */
void quench_state_free(struct QuenchState *state);

/**
 * Number of outcome probabilities (2 to the number of qubits), or 0 for null.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
size_t quench_state_len(const struct QuenchState *state);

/**
 * Preparation-angle bits as a NUL-terminated string owned by the handle.
 *
 * # Safety
 * `state` must be null or a live handle.
 */
const char *quench_state_beta(const struct QuenchState *state);

/**
 * Copy the outcome probabilities (little-endian outcome index) into `buf`.
 *
 * # Safety
 * `state` must be a live handle and `buf` valid for `len` doubles.
 */
enum QuenchStatus quench_state_probabilities(const struct QuenchState *state,
                                             double *buf,
                                             size_t len);

/**
 * Draw `shots` outcome indices from the distribution using `seed`.
 *
 * # Safety
 * `state` must be a live handle and `buf` valid for `shots` values.
 */
enum QuenchStatus quench_state_sample(const struct QuenchState *state,
                                      uint64_t seed,
                                      size_t shots,
                                      uint64_t *buf);

/**
 * Run a harness job described by a JSON configuration.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string and `out` valid writable storage.
 */
enum QuenchStatus quench_run_job(const char *config_json, struct QuenchReport **out);

/**
 * Report as a NUL-terminated JSON string owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *quench_report_json(const struct QuenchReport *report);

/**
 * # Safety
 * `report` must be null or a handle from [`quench_run_job`] not yet freed.
 */
void quench_report_free(struct QuenchReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUENCH_H */
