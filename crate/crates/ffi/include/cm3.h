#ifndef CM3_H
#define CM3_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum Cm3Status {
  CM3_STATUS_OK = 0,
  CM3_STATUS_NULL_POINTER = 1,
  CM3_STATUS_INVALID_ARGUMENT = 2,
  CM3_STATUS_IO = 3,
  CM3_STATUS_PARSE = 4,
  CM3_STATUS_MISMATCH = 5,
  /**
   * A check ran and failed; not an API misuse.
   */
  CM3_STATUS_CHECK_FAILED = 6,
  CM3_STATUS_PANIC = 7,
} Cm3Status;

/**
 * An environment instance with its own random stream.
 */
typedef struct Cm3Env Cm3Env;

/**
 * A goal-conditioned policy restored from a checkpoint.
 */
typedef struct Cm3Policy Cm3Policy;

typedef struct Cm3EvalSummary {
  size_t episodes;
  double joint_return;
  double joint_return_std;
  double success_rate;
} Cm3EvalSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Length in bytes of the last error message on this thread, excluding the terminator.
 */
size_t cm3_last_error_length(void);

/**
 * Copy the last error message into `buf` (NUL-terminated, truncated to `len`).
 * Returns the number of bytes written excluding the terminator.
 *
 * # Safety
 * `buf` must point to at least `len` writable bytes or be NULL.
 */
size_t cm3_last_error_message(char *buf, size_t len);

/**
 * Build an environment from scenario TOML text (an `[env]` table with a `kind`).
 *
 * # Safety
 * `scenario_toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum Cm3Status cm3_env_new(const char *scenario_toml, uint64_t seed, struct Cm3Env **out);

/**
 * # Safety
 * `env` must come from [`cm3_env_new`] and not be used afterwards; NULL is ignored.
 */
void cm3_env_free(struct Cm3Env *env);

/**
 * Number of agents, or 0 for NULL.
 *
 * # Safety
 * `env` must be a live handle or NULL.
 */
size_t cm3_env_num_agents(const struct Cm3Env *env);

/**
 * Number of actions of `agent`, or 0 when out of range.
 *
 * # Safety
 * `env` must be a live handle or NULL.
 */
size_t cm3_env_num_actions(const struct Cm3Env *env, size_t agent);

/**
 * Start a new episode with freshly sampled goals.
 *
 * # Safety
 * `env` must be a live handle.
 */
enum Cm3Status cm3_env_reset(struct Cm3Env *env);

/**
 * Lengths of agent `agent`'s own and others' observation parts.
 *
 * # Safety
 * `env` must be a live handle; the output pointers must be valid.
 */
enum Cm3Status cm3_env_observation_len(const struct Cm3Env *env,
                                       size_t agent,
                                       size_t *self_len,
                                       size_t *others_len);

/**
 * Copy agent `agent`'s observation into the two buffers.
 *
 * # Safety
 * Buffers must hold at least the capacities given.
 */
enum Cm3Status cm3_env_observe(const struct Cm3Env *env,
                               size_t agent,
                               double *self_out,
                               size_t self_cap,
                               double *others_out,
                               size_t others_cap);

/**
 * Apply one action per agent, writing per-agent rewards and whether the episode ended.
 *
 * # Safety
 * `actions` must hold `count` entries and `rewards_out` at least `rewards_cap`.
 */
enum Cm3Status cm3_env_step(struct Cm3Env *env,
                            const size_t *actions,
                            size_t count,
                            double *rewards_out,
                            size_t rewards_cap,
                            bool *done_out);

/**
 * Restore the policy stored in a checkpoint file, acting at its final exploration rate.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum Cm3Status cm3_policy_load(const char *path, struct Cm3Policy **out);

/**
 * # Safety
 * `policy` must come from [`cm3_policy_load`] and not be used afterwards; NULL is ignored.
 */
void cm3_policy_free(struct Cm3Policy *policy);

/**
 * Sample one action per agent for the environment's current state.
 *
 * # Safety
 * Handles must be live; `actions_out` must hold `cap` entries.
 */
enum Cm3Status cm3_policy_act(const struct Cm3Policy *policy,
                              struct Cm3Env *env,
                              size_t *actions_out,
                              size_t cap);

/**
 * Evaluate the policy for `episodes` episodes on a copy of the environment.
 *
 * # Safety
 * Handles must be live and `out` valid.
 */
enum Cm3Status cm3_policy_evaluate(const struct Cm3Policy *policy,
                                   const struct Cm3Env *env,
                                   size_t episodes,
                                   uint64_t seed,
                                   struct Cm3EvalSummary *out);

/**
 * Probability that two exploring agents stumble onto the cooperative path in
 * the 4×3 gridworld, at `epsilon` and with uniformly random actions.
 *
 * # Safety
 * Output pointers must be valid.
 */
enum Cm3Status cm3_cooperation_probability(double epsilon, double *greedy_mix, double *uniform);

/**
 * Run a verification suite: "identities", "gradients", "variance" or "coop-prob".
 * Returns `CM3_STATUS_CHECK_FAILED` when any check fails.
 *
 * # Safety
 * `suite` must be a NUL-terminated string; `passed` may be NULL.
 */
enum Cm3Status cm3_verify(const char *suite, uint64_t seed, size_t trials, bool *passed);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CM3_H */
