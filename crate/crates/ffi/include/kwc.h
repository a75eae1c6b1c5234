/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef KWC_H
#define KWC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KwcScheme {
  KWC_SCHEME_SEMI_IMPLICIT = 0,
  KWC_SCHEME_IMPLICIT = 1,
} KwcScheme;

typedef enum KwcStatus {
  KWC_STATUS_OK = 0,
  KWC_STATUS_NULL_POINTER = 1,
  KWC_STATUS_INVALID_ARGUMENT = 2,
  KWC_STATUS_SOLVER_FAILURE = 3,
  KWC_STATUS_LINE_SEARCH_FAILURE = 4,
  KWC_STATUS_IO = 5,
  KWC_STATUS_PANIC = 6,
} KwcStatus;

// Opaque problem: grid, model, initial state, target and constraint.
typedef struct KwcProblem KwcProblem;

// Opaque state trajectory.
typedef struct KwcTrajectory KwcTrajectory;

// Everything needed to build a problem. Use `±INFINITY` for an absent obstacle.
typedef struct KwcProblemDesc {
  size_t nx;
  size_t ny;
  double lx;
  double ly;
  double t_final;
  size_t steps;
  double eps;
  double nu;
  double delta_star;
  double c1;
  double m_eta;
  double m_theta;
  double m_u;
  double m_v;
  double u_lower;
  double u_upper;
  enum KwcScheme scheme;
  double cg_tol;
  size_t cg_max_iter;
} KwcProblemDesc;

typedef struct KwcOptimizerOptions {
  double tol;
  double rtol;
  size_t max_iter;
  double armijo_c1;
  double backtrack;
  double initial_step;
  size_t max_halvings;
} KwcOptimizerOptions;

typedef struct KwcOptimizeResult {
  size_t iterations;
  // 1 if the residual tolerance was met.
  int32_t converged;
  double cost;
  double initial_residual;
  double final_residual;
} KwcOptimizeResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *kwc_version(void);

// Message of the last failing call on this thread (empty if none). The
// pointer stays valid until the next failing call on the same thread.
const char *kwc_last_error_message(void);

// Defaults: unit square, default material preset, no obstacles,
// implicit scheme. `nx`, `ny`, `t_final`, `steps` and `eps` still need setting.
struct KwcProblemDesc kwc_problem_desc_default(void);

struct KwcOptimizerOptions kwc_optimizer_default_options(void);

// Creates a problem with zero initial data and a zero target.
//
// # Safety
// `desc` must point to a valid descriptor and `out` to writable storage.
enum KwcStatus kwc_problem_new(const struct KwcProblemDesc *desc, struct KwcProblem **out);

// # Safety
// `p` must come from [`kwc_problem_new`] and not be used afterwards. Null is a no-op.
void kwc_problem_free(struct KwcProblem *p);

// Number of grid nodes, the length of one field array.
//
// # Safety
// `p` must be a live problem handle or null (returns 0).
size_t kwc_problem_nodes(const struct KwcProblem *p);

// Sets `(η₀, θ₀)`; `θ₀` must vanish on the boundary.
//
// # Safety
// `eta` and `theta` must each hold `len` doubles.
enum KwcStatus kwc_problem_set_initial(struct KwcProblem *p,
                                       const double *eta,
                                       const double *theta,
                                       size_t len);

// Sets a target that is constant in time.
//
// # Safety
// `eta` and `theta` must each hold `len` doubles.
enum KwcStatus kwc_problem_set_target(struct KwcProblem *p,
                                      const double *eta,
                                      const double *theta,
                                      size_t len);

// Solves the state equation for the control `(u, v)`, each `(steps+1)·nodes`
// doubles (level 0 is ignored). Null `u` or `v` means zero.
//
// # Safety
// Non-null arrays must hold `len` doubles; `out` must be writable.
enum KwcStatus kwc_solve(const struct KwcProblem *p,
                         const double *u,
                         const double *v,
                         size_t len,
                         struct KwcTrajectory **out);

// Reduced cost and its gradient. Gradient buffers may be null to skip them.
//
// # Safety
// Non-null arrays must hold `len` doubles; `cost` must be writable.
enum KwcStatus kwc_cost_gradient(const struct KwcProblem *p,
                                 const double *u,
                                 const double *v,
                                 size_t len,
                                 double *cost,
                                 double *grad_u,
                                 double *grad_v);

// Projected-gradient optimization starting from `(u, v)`, which are
// overwritten with the final iterate.
//
// # Safety
// `u` and `v` must hold `len` doubles; `opts` and `result` must be valid.
enum KwcStatus kwc_optimize(const struct KwcProblem *p,
                            const struct KwcOptimizerOptions *opts,
                            double *u,
                            double *v,
                            size_t len,
                            struct KwcOptimizeResult *result);

// # Safety
// `t` must come from [`kwc_solve`] and not be used afterwards. Null is a no-op.
void kwc_trajectory_free(struct KwcTrajectory *t);

// Number of time steps `M` (the trajectory holds `M + 1` levels).
//
// # Safety
// `t` must be a live trajectory handle or null (returns 0).
size_t kwc_trajectory_steps(const struct KwcTrajectory *t);

// Free energy at level `k`.
//
// # Safety
// `t` must be a live trajectory handle; `out` must be writable.
enum KwcStatus kwc_trajectory_energy(const struct KwcTrajectory *t, size_t k, double *out);

// Copies `η` at level `k` into `buf` (`len` must equal the node count).
//
// # Safety
// `buf` must hold `len` doubles.
enum KwcStatus kwc_trajectory_copy_eta(const struct KwcTrajectory *t,
                                       size_t k,
                                       double *buf,
                                       size_t len);

// Copies `θ` at level `k` into `buf` (`len` must equal the node count).
//
// # Safety
// `buf` must hold `len` doubles.
enum KwcStatus kwc_trajectory_copy_theta(const struct KwcTrajectory *t,
                                         size_t k,
                                         double *buf,
                                         size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KWC_H */
