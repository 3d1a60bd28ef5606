#ifndef PERIPH_H
#define PERIPH_H

/* Generated by cbindgen from the periph-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum PeriphStatus {
  /**
   * Success.
   */
  PERIPH_STATUS_OK = 0,
  /**
   * A required pointer was null or a buffer length disagreed with the
   * handle's dimension.
   */
  PERIPH_STATUS_NULL_ARGUMENT = 1,
  /**
   * Input rejected before any computation: bad UTF-8, unparsable JSON,
   * unknown corpus name, malformed target.
   */
  PERIPH_STATUS_INVALID_INPUT = 2,
  /**
   * The computation itself failed (non-convergence, ramified chart,
   * ambiguous numerical structure).
   */
  PERIPH_STATUS_COMPUTATION = 3,
  /**
   * Shipped or loaded data failed validation (checksums, residual
   * bounds, peripheral structure).
   */
  PERIPH_STATUS_DATA_INTEGRITY = 4,
  /**
   * A panic crossed into the ABI layer; state is still consistent.
   */
  PERIPH_STATUS_PANIC = 5,
} PeriphStatus;

/**
 * Opaque handle: a validated representation together with the peripheral
 * words it was loaded with (when any) and, at solved points, the
 * decoration flag that anchors holonomy to one triangularization among
 * the several a generic point admits.
 */
typedef struct PeriphRep PeriphRep;

/**
 * One complex number as a flat pair, the buffer element of every ratio
 * vector crossing the boundary.
 */
typedef struct PeriphComplex {
  /**
   * Real part.
   */
  double re;
  /**
   * Imaginary part.
   */
  double im;
} PeriphComplex;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string; never freed.
 */
const char *periph_version(void);

/**
 * Copies the thread-local message for the most recent failure into `buf`
 * (always NUL-terminated when `cap > 0`) and returns the full message
 * length in bytes, excluding the terminator. Call with `cap = 0` to size a
 * buffer.
 *
 * # Safety
 * `buf` must point to `cap` writable bytes, or be null with `cap = 0`.
 */
uintptr_t periph_last_error(char *buf, uintptr_t cap);

/**
 * Loads one of the shipped corpus representations by name (geom2, geom3,
 * rho1, rho2, rho3), running every shipped-data validation.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PeriphStatus periph_corpus_load(const char *name, struct PeriphRep **out);

/**
 * Parses and validates a representation from JSON text (the same format
 * the CLI reads and writes). Peripheral words are carried along when the
 * file names them.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PeriphStatus periph_rep_from_json(const char *json, struct PeriphRep **out);

/**
 * Serializes a handle back to JSON. The returned string is owned by the
 * caller and must be released with [`periph_string_free`].
 *
 * # Safety
 * `rep` must be a live handle and `out` a valid pointer.
 */
enum PeriphStatus periph_rep_to_json(const struct PeriphRep *rep, char **out);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must have been returned by this library and not freed before.
 */
void periph_string_free(char *s);

/**
 * Releases a representation handle. Null is ignored.
 *
 * # Safety
 * `rep` must have been returned by this library and not freed before.
 */
void periph_rep_free(struct PeriphRep *rep);

/**
 * Matrix dimension of the handle, or 0 for null.
 *
 * # Safety
 * `rep` must be null or a live handle.
 */
uint32_t periph_rep_dim(const struct PeriphRep *rep);

/**
 * Largest relator residual of the handle, or NaN for null.
 *
 * # Safety
 * `rep` must be null or a live handle.
 */
double periph_rep_residual(const struct PeriphRep *rep);

/**
 * Lifts a 2x2 representation through the degree-`n` symmetric power into a
 * new handle. The peripheral words carry over; any stored decoration does
 * not (its dimension would no longer match).
 *
 * # Safety
 * `rep` must be a live handle and `out` a valid pointer.
 */
enum PeriphStatus periph_rep_lift(const struct PeriphRep *rep, uint32_t n, struct PeriphRep **out);

/**
 * Writes the decorated peripheral eigenvalue ratios of the handle into two
 * caller buffers of length `len = dim - 1` (longitude ratios into `out_l`,
 * meridian ratios into `out_m`).
 *
 * # Safety
 * `rep` must be a live handle; `out_l` and `out_m` must point to `len`
 * writable elements.
 */
enum PeriphStatus periph_rep_holonomy(const struct PeriphRep *rep,
                                      struct PeriphComplex *out_l,
                                      struct PeriphComplex *out_m,
                                      uintptr_t len);

/**
 * Classifies an eigenvalue-ratio pair: sets `*out_sufficient` to 1 when
 * some log-modulus minor certifies discreteness-and-faithfulness of the
 * peripheral image, 0 otherwise, and reports the largest minor.
 *
 * # Safety
 * `l` and `m` must point to `len` readable elements; the out pointers must
 * be valid.
 */
enum PeriphStatus periph_classify(const struct PeriphComplex *l,
                                  const struct PeriphComplex *m,
                                  uintptr_t len,
                                  int32_t *out_sufficient,
                                  double *out_max_minor);

/**
 * Integer-relation probe of the logarithm lattice: minimizes
 * `max_k |Re(p log L_k + q log M_k)|` over `0 < max(|p|, |q|) <= n_max`
 * and reports the minimum and its `(p, q)`.
 *
 * # Safety
 * `l` and `m` must point to `len` readable elements; the out pointers must
 * be valid.
 */
enum PeriphStatus periph_lattice_oracle(const struct PeriphComplex *l,
                                        const struct PeriphComplex *m,
                                        uintptr_t len,
                                        int64_t n_max,
                                        double *out_min,
                                        int64_t *out_p,
                                        int64_t *out_q);

/**
 * Deforms the handle's representation until its longitude eigenvalue
 * ratios hit `target` (length `dim - 1`), returning the solved
 * representation as a new handle. The chart, gauge slice, and continuation
 * behavior are exactly the CLI scan's.
 *
 * # Safety
 * `rep` must be a live handle; `target` must point to `len` readable
 * elements; `out` must be valid.
 */
enum PeriphStatus periph_solve_to_target(const struct PeriphRep *rep,
                                         const struct PeriphComplex *target,
                                         uintptr_t len,
                                         double residual_tol,
                                         struct PeriphRep **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PERIPH_H */
