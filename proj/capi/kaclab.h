/* C interface to the kaclab core: opaque handles + status codes.
 * All functions returning kaclab_status set a thread-local error message
 * readable through kaclab_last_error() on failure. */
#ifndef KACLAB_H
#define KACLAB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum kaclab_status {
    KACLAB_OK = 0,
    KACLAB_ERR_INVALID_ARGUMENT = 1,
    KACLAB_ERR_IO = 2,
    KACLAB_ERR_CONFIG = 3,
    KACLAB_ERR_RUNTIME = 4
} kaclab_status;

/* Message for the most recent failure on this thread; empty string if none. */
const char* kaclab_last_error(void);

typedef struct kaclab_rng kaclab_rng;
typedef struct kaclab_state kaclab_state;
typedef struct kaclab_cloud kaclab_cloud;

/* Deterministic stream derivation (documented bit-exact mixing). */
uint64_t kaclab_derive_seed(uint64_t master, uint64_t replica_index,
                            uint64_t stream_tag);

kaclab_status kaclab_rng_create(uint64_t seed, kaclab_rng** out);
void kaclab_rng_destroy(kaclab_rng* rng);

/* ---- particle states ------------------------------------------------- */

/* init_kind: "maxwellian" (chaotic), "nonchaotic", "equilibrium", "pareto". */
kaclab_status kaclab_state_create(const char* init_kind, size_t n, int d,
                                  kaclab_rng* rng, kaclab_state** out);
kaclab_status kaclab_state_load_csv(const char* path, kaclab_state** out);
kaclab_status kaclab_state_save_csv(const kaclab_state* state, double time,
                                    uint64_t seed, const char* path);
size_t kaclab_state_size(const kaclab_state* state);
int kaclab_state_dim(const kaclab_state* state);
/* buf must hold size*dim doubles (row-major velocities). */
kaclab_status kaclab_state_velocities(const kaclab_state* state, double* buf,
                                      size_t len);
void kaclab_state_destroy(kaclab_state* state);

/* Advance to t_fin. If trajectory_csv is non-NULL the event log is written
 * there. events_out may be NULL. */
kaclab_status kaclab_simulate(kaclab_state* state, double t_fin, kaclab_rng* rng,
                              const char* trajectory_csv,
                              unsigned long* events_out);

/* ---- weighted point clouds -------------------------------------------- */

kaclab_status kaclab_cloud_load_csv(const char* path, kaclab_cloud** out);
kaclab_status kaclab_cloud_save_csv(const kaclab_cloud* cloud, const char* path);
kaclab_status kaclab_cloud_from_state(const kaclab_state* state,
                                      kaclab_cloud** out);
size_t kaclab_cloud_size(const kaclab_cloud* cloud);
int kaclab_cloud_dim(const kaclab_cloud* cloud);
void kaclab_cloud_destroy(kaclab_cloud* cloud);

/* ---- metrics ----------------------------------------------------------- */

kaclab_status kaclab_lambda_k(const kaclab_cloud* mu, double k, double* value);
kaclab_status kaclab_wasserstein_lp(const kaclab_cloud* mu,
                                    const kaclab_cloud* nu, size_t support_cap,
                                    double* value);
kaclab_status kaclab_w1_ot(const kaclab_cloud* mu, const kaclab_cloud* nu,
                           double* value);
kaclab_status kaclab_dyadic_upper_bound(const kaclab_cloud* mu,
                                        const kaclab_cloud* nu, int J, int L,
                                        double* upper, double* remainder);
kaclab_status kaclab_lower_witness(const kaclab_cloud* mu,
                                   const kaclab_cloud* nu, size_t sample_size,
                                   uint64_t seed, double* value);

/* ---- linearised (branching) process ------------------------------------ */

/* Environment files: JSON header + per-time cloud CSVs (see docs). v0 has d
 * entries. ok is 1 when the Monte Carlo mean respects the growth envelope. */
kaclab_status kaclab_growth_bound_check(const char* env_json, const double* v0,
                                        int d, double t, size_t n_trees,
                                        uint64_t seed, int* ok, double* mc_mean,
                                        double* bound);

/* f(v) = (1+|v|^2) tanh(v_1); estimates f_st(v0) with standard error. */
kaclab_status kaclab_estimate_fst_tanh(const char* env_json, const double* v0,
                                       int d, double s, double t,
                                       size_t n_trees, uint64_t seed,
                                       double* estimate, double* se);

/* ---- studies ------------------------------------------------------------ */

/* config_json: RunConfig text (strict). Writes <name>.json / <name>.csv and a
 * canonical config echo under out_dir. */
kaclab_status kaclab_run_study(const char* config_json, const char* out_dir,
                               const char* name);

/* One simulation run from the config's init/N/d to t_fin: writes
 * trajectory.csv plus snapshot CSVs at the config's grid times under out_dir. */
kaclab_status kaclab_run_simulate(const char* config_json, const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* KACLAB_H */
