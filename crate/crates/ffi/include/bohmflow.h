#ifndef BOHMFLOW_H
#define BOHMFLOW_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum BfStatus {
  BF_STATUS_OK = 0,
  /**
   * Null pointer, bad length or index out of range.
   */
  BF_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration text rejected; the message names the key.
   */
  BF_STATUS_CONFIG = 2,
  /**
   * The point sits on a node of the wavefunction.
   */
  BF_STATUS_DEGENERATE = 3,
  /**
   * Sampling or quadrature could not reach its tolerance.
   */
  BF_STATUS_NUMERIC = 4,
  /**
   * A Rust panic was caught at the boundary.
   */
  BF_STATUS_PANIC = 5,
} BfStatus;

/**
 * Opaque ensemble handle: the endpoints of one integrated ensemble.
 */
typedef struct BfEnsemble BfEnsemble;

/**
 * Opaque scenario handle.
 */
typedef struct BfScenario BfScenario;

/**
 * Region-I timing of a scenario.
 */
typedef struct BfWindow {
  double t_in;
  double t_cross;
  double t_out;
  double t_readout;
} BfWindow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *bf_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bf_version(void);

/**
 * Build a scenario from configuration text (the same TOML the CLI reads).
 */
enum BfStatus bf_scenario_from_config(const char *config, struct BfScenario **out);

void bf_scenario_free(struct BfScenario *s);

/**
 * Number of configuration-space coordinates (2 plus the device coordinates).
 */
enum BfStatus bf_scenario_dim(const struct BfScenario *s, size_t *out);

/**
 * Number of mixture components (1 for pure states).
 */
enum BfStatus bf_scenario_components(const struct BfScenario *s, size_t *out);

enum BfStatus bf_scenario_window(const struct BfScenario *s, struct BfWindow *out);

enum BfStatus bf_detector_probabilities(const struct BfScenario *s, double *p_d1, double *p_d2);

/**
 * Probability density at `q` (weighted over mixture components).
 */
enum BfStatus bf_density(const struct BfScenario *s,
                         const double *q,
                         size_t dim,
                         double t,
                         double *out);

/**
 * Guidance velocity of mixture component `k`; writes `dim` values.
 */
enum BfStatus bf_velocity(const struct BfScenario *s,
                          size_t k,
                          const double *q,
                          size_t dim,
                          double t,
                          double *v_out);

/**
 * Total quantum potential of mixture component `k`.
 */
enum BfStatus bf_quantum_potential(const struct BfScenario *s,
                                   size_t k,
                                   const double *q,
                                   size_t dim,
                                   double t,
                                   double *out);

/**
 * Net probability flux across the plane z = 0 at time `t`.
 */
enum BfStatus bf_plane_flux(const struct BfScenario *s, double t, double *out);

/**
 * Born-sample `n` trajectories at `t_start` and integrate them to `t_end`.
 */
enum BfStatus bf_ensemble_run(const struct BfScenario *s,
                              size_t n,
                              uint64_t seed,
                              double t_start,
                              double t_end,
                              double dt,
                              struct BfEnsemble **out);

void bf_ensemble_free(struct BfEnsemble *e);

enum BfStatus bf_ensemble_len(const struct BfEnsemble *e, size_t *out);

/**
 * Final point of trajectory `i` (`dim` values), its component and a
 * termination code: 0 completed, 1 node, 2 left the domain.
 */
enum BfStatus bf_ensemble_endpoint(const struct BfEnsemble *e,
                                   size_t i,
                                   double *q_out,
                                   size_t dim,
                                   size_t *component,
                                   uint32_t *termination);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOHMFLOW_H */
