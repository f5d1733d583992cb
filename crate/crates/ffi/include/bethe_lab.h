#ifndef BETHE_LAB_H
#define BETHE_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible function.
typedef enum BlStatus {
  BL_STATUS_OK = 0,
  BL_STATUS_NULL_POINTER = 1,
  BL_STATUS_INVALID_ARGUMENT = 2,
  BL_STATUS_INVALID_MODEL = 3,
  BL_STATUS_SIZE_GUARD = 4,
  BL_STATUS_RETRY_LIMIT = 5,
  BL_STATUS_REJECTION_CAP = 6,
  BL_STATUS_ZERO_WEIGHT = 7,
  BL_STATUS_DEGENERATE = 8,
  BL_STATUS_PARSE = 9,
  BL_STATUS_BUFFER_TOO_SMALL = 10,
  BL_STATUS_PANIC = 11,
  BL_STATUS_OTHER = 12,
} BlStatus;

// A belief-propagation run: messages and convergence data.
typedef struct BlBp BlBp;

// A factor graph.
typedef struct BlGraph BlGraph;

// A model (family, arity, degree and parameters).
typedef struct BlModel BlModel;

// Summary of a BP run.
typedef struct BlBpSummary {
  size_t iterations;
  double residual;
  bool converged;
  // Bethe approximation of ln Z at the final messages.
  double bethe_log_z;
} BlBpSummary;

// A Monte Carlo estimate with its standard error.
typedef struct BlEstimate {
  double estimate;
  double std_error;
  size_t draws;
  size_t rejected;
} BlEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next failing call on the same thread.
const char *bl_last_error(void);

// Library version as a static nul-terminated string.
const char *bl_version(void);

// k-spin model with Gaussian couplings.
//
// # Safety
// `out` must be valid for writes.
enum BlStatus bl_model_kspin(size_t k, size_t d, double beta, struct BlModel **out);

// Antiferromagnetic Potts model.
//
// # Safety
// `out` must be valid for writes.
enum BlStatus bl_model_potts(size_t q, size_t d, double beta, struct BlModel **out);

// Random k-SAT at inverse temperature `beta`.
//
// # Safety
// `out` must be valid for writes.
enum BlStatus bl_model_ksat(size_t k, size_t d, double beta, struct BlModel **out);

// Hard-core model with fugacity `lambda`.
//
// # Safety
// `out` must be valid for writes.
enum BlStatus bl_model_hardcore(size_t d, double lambda, struct BlModel **out);

// Model from its TOML description.
//
// # Safety
// `toml` must be a nul-terminated string; `out` must be valid for writes.
enum BlStatus bl_model_from_toml(const char *toml, struct BlModel **out);

// Number of spins of the model, or 0 for a null handle.
//
// # Safety
// `model` must be null or a live handle.
size_t bl_model_q(const struct BlModel *model);

// Releases a model. Null is ignored.
//
// # Safety
// `model` must be null or a handle not yet freed.
void bl_model_free(struct BlModel *model);

// Samples a graph with `n` variables from the pairing model, or from the
// pairing model conditioned on simplicity when `simple` is set.
//
// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum BlStatus bl_graph_sample(const struct BlModel *model,
                              size_t n,
                              uint64_t seed,
                              bool simple,
                              struct BlGraph **out);

// Parses a graph in the text format written by [`bl_graph_to_text`].
//
// # Safety
// `text` must be a nul-terminated string; `out` must be valid for writes.
enum BlStatus bl_graph_from_text(const char *text, struct BlGraph **out);

// Writes the graph as nul-terminated text into `buf` of capacity `len`.
// `needed` (optional) receives the required capacity including the nul;
// pass a null `buf` to query it.
//
// # Safety
// `graph` must be a live handle; `buf` must be null or valid for `len`
// bytes; `needed` must be null or valid for writes.
enum BlStatus bl_graph_to_text(const struct BlGraph *graph, char *buf, size_t len, size_t *needed);

// Number of variables, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t bl_graph_n(const struct BlGraph *graph);

// Number of constraints, or 0 for a null handle.
//
// # Safety
// `graph` must be null or a live handle.
size_t bl_graph_m(const struct BlGraph *graph);

// Releases a graph. Null is ignored.
//
// # Safety
// `graph` must be null or a handle not yet freed.
void bl_graph_free(struct BlGraph *graph);

// Exact ln Z by enumeration. Fails with `SizeGuard` on large graphs.
//
// # Safety
// `graph` must be a live handle; `out` must be valid for writes.
enum BlStatus bl_exact_log_z(const struct BlGraph *graph, double *out);

// Exact marginal of variable `v` written to `out[0..q]`.
//
// # Safety
// `graph` must be a live handle; `out` must be valid for `len` writes.
enum BlStatus bl_exact_marginal(const struct BlGraph *graph, size_t v, double *out, size_t len);

// Runs damped BP from uniform messages. The result handle owns the messages.
//
// # Safety
// `graph` must be a live handle; `out` must be valid for writes.
enum BlStatus bl_bp_run(const struct BlGraph *graph,
                        double damping,
                        double tol,
                        size_t max_iter,
                        struct BlBp **out);

// Convergence data and the Bethe free energy of a BP run.
//
// # Safety
// `bp` must be a live handle; `out` must be valid for writes.
enum BlStatus bl_bp_summary(const struct BlBp *bp, struct BlBpSummary *out);

// BP marginal of variable `v` on the graph the run was made on.
//
// # Safety
// `graph` and `bp` must be live handles, `bp` produced from `graph`;
// `out` must be valid for `len` writes.
enum BlStatus bl_bp_marginal(const struct BlGraph *graph,
                             const struct BlBp *bp,
                             size_t v,
                             double *out,
                             size_t len);

// Releases a BP run. Null is ignored.
//
// # Safety
// `bp` must be null or a handle not yet freed.
void bl_bp_free(struct BlBp *bp);

// Replica-symmetric free energy per variable by population dynamics.
//
// # Safety
// `model` must be a live handle; `out` must be valid for writes.
enum BlStatus bl_popdyn_free_energy(const struct BlModel *model,
                                    size_t size,
                                    size_t sweeps,
                                    size_t samples,
                                    uint64_t seed,
                                    struct BlEstimate *out);

// Fuzzes the positivity condition; `worst` receives the most negative value
// found (nonnegative when the condition held on every trial).
//
// # Safety
// `model` must be a live handle; `worst` must be valid for writes.
enum BlStatus bl_check_pos(const struct BlModel *model,
                           size_t trials,
                           size_t ell_max,
                           uint64_t seed,
                           double *worst);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BETHE_LAB_H */
