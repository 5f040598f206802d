#ifndef RRP_H
#define RRP_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum RrpStatus {
  RRP_STATUS_OK = 0,
  RRP_STATUS_NULL_POINTER = 1,
  /**
   * Invalid parameters or configuration.
   */
  RRP_STATUS_CONFIG = 2,
  /**
   * Solver failure, blow-up or non-convergence.
   */
  RRP_STATUS_NUMERICAL = 3,
  /**
   * Output buffer shorter than the field.
   */
  RRP_STATUS_BUFFER_TOO_SMALL = 4,
  /**
   * A panic was caught at the boundary.
   */
  RRP_STATUS_INTERNAL = 5,
} RrpStatus;

/**
 * Opaque model handle.
 */
typedef struct RrpModel RrpModel;

/**
 * Opaque transient run on the journal grid, started from R = R0.
 */
typedef struct RrpTransient RrpTransient;

/**
 * Physical parameters, SI units; field names follow `PhysicalParams`.
 */
typedef struct RrpParams {
  double rho_l;
  double mu_l;
  double rho_g;
  double mu_g;
  double kappa_s;
  double k_poly;
  double sigma;
  double p0;
  double p_bnd;
  double r0;
  double alpha0;
  double j_r;
  double b;
  double h0;
  double ecc;
  double omega;
} RrpParams;

typedef struct RrpDerived {
  double r_bar;
  double r_crit;
  /**
   * R_crit / R0.
   */
  double rhat_crit;
  double p_cav;
  double b1;
  double b2;
  double b3;
  double b4;
  double b5;
  double b_r;
  double d1;
  double d2;
  double d3;
  double d4;
  double d5;
} RrpDerived;

/**
 * Closure functions at one radius.
 */
typedef struct RrpClosure {
  double f1;
  double f2;
  double f3;
  double f4;
  double f5;
  double alpha;
} RrpClosure;

typedef struct RrpHurwitz {
  double q;
  double alpha0;
  double beta0;
  double alpha1;
  double beta1;
  double alpha2;
  double deltas[4];
  uint32_t sign_changes;
  double u_crit_sq;
} RrpHurwitz;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated and
 * truncated to `len` bytes. Returns the full message length.
 */
size_t rrp_last_error_message(char *buf, size_t len);

/**
 * Journal-bearing reference values with R0 the equilibrium radius.
 */
enum RrpStatus rrp_params_default(struct RrpParams *out);

enum RrpStatus rrp_model_new(const struct RrpParams *params, struct RrpModel **out);

void rrp_model_free(struct RrpModel *model);

enum RrpStatus rrp_model_derived(const struct RrpModel *model, struct RrpDerived *out);

enum RrpStatus rrp_model_closure(const struct RrpModel *model, double r, struct RrpClosure *out);

/**
 * Routh-Hurwitz data of mode (k1, k2) of a parallel film on l1 x l2.
 */
enum RrpStatus rrp_hurwitz(const struct RrpModel *model,
                           double l1,
                           double l2,
                           double u_norm,
                           uint32_t k1,
                           uint32_t k2,
                           struct RrpHurwitz *out);

/**
 * Smallest critical speed over modes 1..=kmax and the mode attaining it.
 */
enum RrpStatus rrp_critical_speed(const struct RrpModel *model,
                                  double l1,
                                  double l2,
                                  uint32_t kmax,
                                  double *u_crit,
                                  uint32_t *k1,
                                  uint32_t *k2);

/**
 * Stationary state on the n1 x n2 journal grid at the surface speed
 * omega J_r. Writes R / R0 and the scaled pressure, row-major.
 */
enum RrpStatus rrp_stationary_solve(const struct RrpModel *model,
                                    size_t n1,
                                    size_t n2,
                                    double *r_hat,
                                    double *p,
                                    size_t len);

/**
 * Starts a backward Euler run from R = R0 at rest.
 */
enum RrpStatus rrp_transient_new(const struct RrpModel *model,
                                 size_t n1,
                                 size_t n2,
                                 double dt,
                                 bool inertial,
                                 struct RrpTransient **out);

void rrp_transient_free(struct RrpTransient *run);

/**
 * Advances `n_steps` steps. `rate` receives max|dR| / (dt R0) of the last
 * step. On failure the run keeps its last accepted state.
 */
enum RrpStatus rrp_transient_advance(struct RrpTransient *run, size_t n_steps, double *rate);

/**
 * Number of cells, the length of every field buffer.
 */
enum RrpStatus rrp_transient_cells(const struct RrpTransient *run, size_t *cells);

enum RrpStatus rrp_transient_time(const struct RrpTransient *run, double *t);

/**
 * Copies R / R0 and the scaled pressure of the current state, row-major.
 */
enum RrpStatus rrp_transient_fields(const struct RrpTransient *run,
                                    double *r_hat,
                                    double *p,
                                    size_t len);

/**
 * Parses a configuration and runs the given command: "transient",
 * "stationary", "stability" or "sweep". Files go to `output_dir` of the
 * configuration.
 */
enum RrpStatus rrp_run_config(const char *config, const char *command);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RRP_H */
