#ifndef PVDYN_H
#define PVDYN_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum PvdynStatus {
  PVDYN_STATUS_OK = 0,
  PVDYN_STATUS_NULL_POINTER = 1,
  /**
   * Malformed argument: bad UTF-8, wrong buffer length, unknown solver.
   */
  PVDYN_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The JSON document could not be parsed.
   */
  PVDYN_STATUS_PARSE = 3,
  /**
   * The model or constraint set is structurally invalid.
   */
  PVDYN_STATUS_MODEL = 4,
  /**
   * A factorization met a singular or indefinite pivot.
   */
  PVDYN_STATUS_SINGULAR = 5,
  /**
   * More independent constraint rows than the tree can satisfy.
   */
  PVDYN_STATUS_OVER_CONSTRAINED = 6,
  PVDYN_STATUS_UNSUPPORTED = 7,
  /**
   * Internal error; the library caught a panic.
   */
  PVDYN_STATUS_PANIC = 99,
} PvdynStatus;

/**
 * Forward-dynamics algorithm.
 */
typedef enum PvdynSolver {
  /**
   * Hard constraints, multipliers resolved at the root.
   */
  PVDYN_SOLVER_PV = 0,
  /**
   * Hard constraints, multipliers eliminated as soon as possible.
   */
  PVDYN_SOLVER_PV_EARLY = 1,
  /**
   * Penalty constraints; every row must carry a soft weight.
   */
  PVDYN_SOLVER_PV_SOFT = 2,
  /**
   * Unconstrained articulated-body algorithm; constraints are ignored.
   */
  PVDYN_SOLVER_ABA = 3,
} PvdynSolver;

/**
 * Opaque constraint set bound to the model it was loaded against.
 */
typedef struct PvdynConstraints PvdynConstraints;

/**
 * Opaque robot model.
 */
typedef struct PvdynModel PvdynModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The string
 * stays valid until the next failing call on the same thread.
 */
const char *pvdyn_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *pvdyn_version(void);

/**
 * Parses a JSON robot model. On success `*out` owns a new handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum PvdynStatus pvdyn_model_from_json(const char *json, struct PvdynModel **out);

/**
 * # Safety
 * `model` must be null or a handle from [`pvdyn_model_from_json`] not yet freed.
 */
void pvdyn_model_free(struct PvdynModel *model);

/**
 * Number of links, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pvdyn_model_num_links(const struct PvdynModel *model);

/**
 * Length of the configuration vector (7 for a floating base's position and
 * quaternion), or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pvdyn_model_nq(const struct PvdynModel *model);

/**
 * Degrees of freedom (length of velocity and torque vectors), or 0 for a
 * null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t pvdyn_model_nv(const struct PvdynModel *model);

/**
 * Writes the neutral configuration into `q` (length `nq`).
 *
 * # Safety
 * `model` must be a live handle and `q` point to `q_len` writable doubles.
 */
enum PvdynStatus pvdyn_model_neutral(const struct PvdynModel *model, double *q, size_t q_len);

/**
 * Parses a JSON document of explicit constraint rows against `model`.
 *
 * # Safety
 * `model` must be a live handle, `json` a NUL-terminated string and `out`
 * a valid pointer.
 */
enum PvdynStatus pvdyn_constraints_from_json(const struct PvdynModel *model,
                                             const char *json,
                                             struct PvdynConstraints **out);

/**
 * # Safety
 * `constraints` must be null or a handle not yet freed.
 */
void pvdyn_constraints_free(struct PvdynConstraints *constraints);

/**
 * Total number of constraint rows, or 0 for a null handle.
 *
 * # Safety
 * `constraints` must be null or a live handle.
 */
size_t pvdyn_constraints_rows(const struct PvdynConstraints *constraints);

/**
 * Constrained forward dynamics. `constraints` may be null for an
 * unconstrained tree; `lambda` may be null, otherwise it receives the
 * multipliers (`lambda_len` must equal the row count, zero for ABA).
 *
 * # Safety
 * Handles must be live; each array must hold the stated number of doubles.
 */
enum PvdynStatus pvdyn_forward_dynamics(const struct PvdynModel *model,
                                        const struct PvdynConstraints *constraints,
                                        enum PvdynSolver solver,
                                        const double *q,
                                        size_t q_len,
                                        const double *qd,
                                        size_t qd_len,
                                        const double *tau,
                                        size_t tau_len,
                                        double *qdd,
                                        size_t qdd_len,
                                        double *lambda,
                                        size_t lambda_len);

/**
 * Inverse operational-space inertia `K M⁻¹ Kᵀ` at configuration `q`,
 * written row-major into `out` (`rows × rows` doubles).
 *
 * # Safety
 * Handles must be live; `q` must hold `q_len` doubles and `out` `out_len`.
 */
enum PvdynStatus pvdyn_osim_inverse(const struct PvdynModel *model,
                                    const struct PvdynConstraints *constraints,
                                    const double *q,
                                    size_t q_len,
                                    double *out,
                                    size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PVDYN_H */
