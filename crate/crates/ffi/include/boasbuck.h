#ifndef BOASBUCK_H
#define BOASBUCK_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BbOperatorKind {
  BB_OPERATOR_KIND_DISCRETE = 0,
  BB_OPERATOR_KIND_DURRMEYER = 1,
  BB_OPERATOR_KIND_SZASZ_DURRMEYER = 2,
} BbOperatorKind;

typedef enum BbStatus {
  BB_STATUS_OK = 0,
  BB_STATUS_NULL_POINTER = 1,
  BB_STATUS_INVALID_ARGUMENT = 2,
  BB_STATUS_INVALID_UTF8 = 3,
  BB_STATUS_IO = 4,
  BB_STATUS_PARSE = 5,
  BB_STATUS_INADMISSIBLE = 6,
  BB_STATUS_EVALUATION = 7,
  BB_STATUS_BUFFER_TOO_SMALL = 8,
  BB_STATUS_PANIC = 9,
} BbStatus;

/**
 * Opaque operator handle; owns a copy of its system.
 */
typedef struct BbOperator BbOperator;

/**
 * Opaque system handle.
 */
typedef struct BbSystem BbSystem;

/**
 * Closed-form raw moments `m0, m1, m2` and Durrmeyer central moments.
 */
typedef struct BbMoments {
  double discrete[3];
  double durrmeyer[3];
  double szasz[3];
  double mu1;
  double mu2;
} BbMoments;

/**
 * Real function callback; `ctx` is passed through untouched.
 */
typedef double (*BbRealFn)(double x, void *ctx);

/**
 * Operator value with its error budget.
 */
typedef struct BbValue {
  double value;
  double truncation_bound;
  double quadrature_tol;
  size_t j_cut;
} BbValue;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call into this library on the same thread.
 */
const char *bb_last_error_message(void);

/**
 * Static name of a status code.
 */
const char *bb_status_name(enum BbStatus status);

/**
 * Built-in system by name (`exp1`, `exp2`).
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum BbStatus bb_system_builtin(const char *name, struct BbSystem **out);

/**
 * System from JSON text in the system-file format.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum BbStatus bb_system_from_json(const char *json, struct BbSystem **out);

/**
 * System from a file path, or `builtin:<name>`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum BbStatus bb_system_load(const char *path, struct BbSystem **out);

/**
 * # Safety
 * `sys` must be null or a handle from a `bb_system_*` constructor, freed once.
 */
void bb_system_free(struct BbSystem *sys);

/**
 * Runs the admissibility checks; `admissible` receives the verdict.
 *
 * # Safety
 * `sys` must be a live handle; `admissible` must be writable.
 */
enum BbStatus bb_system_validate(const struct BbSystem *sys, bool *admissible);

/**
 * `p(x) = n^2 x^2 T(1) + n x U(1) + V(1)`.
 *
 * # Safety
 * `sys` must be a live handle; `out` must be writable.
 */
enum BbStatus bb_p_of_x(const struct BbSystem *sys, uint64_t n, double x, double *out);

/**
 * Writes `Theta_0(y) .. Theta_order(y)` to `out[0..=order]`.
 *
 * # Safety
 * `sys` must be a live handle; `out` must hold `len` doubles.
 */
enum BbStatus bb_theta_values(const struct BbSystem *sys,
                              double y,
                              size_t order,
                              double *out,
                              size_t len);

/**
 * Closed-form moments at `(n, x)`.
 *
 * # Safety
 * `sys` must be a live handle; `out` must be writable.
 */
enum BbStatus bb_moments(const struct BbSystem *sys, uint64_t n, double x, struct BbMoments *out);

/**
 * Operator of the given kind and index with default settings.
 *
 * # Safety
 * `sys` must be a live handle; `out` must be writable.
 */
enum BbStatus bb_operator_new(const struct BbSystem *sys,
                              enum BbOperatorKind kind,
                              uint64_t n,
                              struct BbOperator **out);

/**
 * # Safety
 * `op` must be null or a handle from [`bb_operator_new`], freed once.
 */
void bb_operator_free(struct BbOperator *op);

/**
 * Weight truncation tolerance, in `(0, 1e-3]`.
 *
 * # Safety
 * `op` must be a live handle.
 */
enum BbStatus bb_operator_set_trunc_eps(struct BbOperator *op, double eps);

/**
 * Drop the `j = 0` Durrmeyer term instead of placing it as a point mass at zero.
 *
 * # Safety
 * `op` must be a live handle.
 */
enum BbStatus bb_operator_set_drop_j0(struct BbOperator *op, bool drop_j0);

/**
 * Applies the operator to a C callback at `x`. `breaks` (may be null when
 * `nbreaks` is 0) lists points where `f` has kinks.
 *
 * # Safety
 * `op` must be a live handle, `f` non-null, `breaks` readable for `nbreaks`
 * doubles and `out` writable. The callback must not unwind.
 */
enum BbStatus bb_operator_apply(const struct BbOperator *op,
                                BbRealFn f,
                                void *ctx,
                                const double *breaks,
                                size_t nbreaks,
                                double x,
                                struct BbValue *out);

/**
 * Applies the operator to a catalog function (`one`, `s`, `s2`, `s3`,
 * `sqrt`, `exp_neg`, `abs_s_minus_1`, `piecewise:<path>`).
 *
 * # Safety
 * `op` must be a live handle, `id` NUL-terminated and `out` writable.
 */
enum BbStatus bb_operator_apply_builtin(const struct BbOperator *op,
                                        const char *id,
                                        double x,
                                        struct BbValue *out);

/**
 * Durrmeyer kernel distribution function `P(t <= y)` at `x`.
 *
 * # Safety
 * `op` must be a live handle and `out` writable.
 */
enum BbStatus bb_operator_kernel_cdf(const struct BbOperator *op, double x, double y, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOASBUCK_H */
