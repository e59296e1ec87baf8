#ifndef GRIDARC_H
#define GRIDARC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define GA_OK 0

#define GA_ERR_NULL_POINTER 1

#define GA_ERR_INVALID_ARGUMENT 2

#define GA_ERR_CONFIG 3

#define GA_ERR_DATASET 4

#define GA_ERR_ACTION 5

#define GA_ERR_BUFFER_TOO_SMALL 6

#define GA_ERR_NOT_RESET 7

#define GA_ERR_PANIC 8

#define GA_STEP_FIRST 0

#define GA_STEP_MID 1

#define GA_STEP_LAST 2

/**
 * `lanes` environments stepped together.
 */
typedef struct GaBatch GaBatch;

/**
 * One environment and its current episode.
 */
typedef struct GaEnv GaEnv;

/**
 * Static description of an environment's spaces.
 */
typedef struct GaEnvSpec {
  uint32_t obs_channels;
  uint32_t obs_rows;
  uint32_t obs_cols;
  /**
   * Values per action: 1 when the space is flattened.
   */
  uint32_t action_arity;
  /**
   * Size of the flattened action space, or 0 when not flattened.
   */
  uint64_t flat_action_size;
  uint32_t num_ops;
  uint32_t num_tasks;
  uint32_t max_episode_steps;
} GaEnvSpec;

/**
 * Scalar part of a timestep.
 */
typedef struct GaStepResult {
  double reward;
  double discount;
  double similarity;
  /**
   * One of `GA_STEP_FIRST`, `GA_STEP_MID`, `GA_STEP_LAST`.
   */
  uint8_t step_kind;
  uint8_t solved;
  uint8_t applied;
} GaStepResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Creates an environment from a config file path (`.yaml`, `.yml`,
 * `.json`) or an identifier. `data_root` may be null, in which case
 * identifiers resolve against `$GRIDARC_DATA` or `data`.
 */
int32_t ga_env_new(const char *config, const char *data_root, struct GaEnv **out);

/**
 * Frees an environment. Null is ignored.
 */
void ga_env_free(struct GaEnv *env);

int32_t ga_env_spec(const struct GaEnv *env, struct GaEnvSpec *out);

/**
 * Writes the size of each action component into `dims` (length
 * `action_arity` of the unflattened space, see [`GaEnvSpec`]).
 */
int32_t ga_env_action_dims(const struct GaEnv *env, uint64_t *dims, size_t len);

/**
 * Starts an episode. `obs` may be null; otherwise it receives
 * `channels·rows·cols` bytes, plane-major. `result` may be null.
 */
int32_t ga_env_reset(struct GaEnv *env,
                     uint64_t seed,
                     uint8_t *obs,
                     size_t obs_len,
                     struct GaStepResult *result);

/**
 * Applies one action given as `action_len` component values (one value,
 * the flat index, for flattened spaces).
 */
int32_t ga_env_step(struct GaEnv *env,
                    const uint64_t *action,
                    size_t action_len,
                    uint8_t *obs,
                    size_t obs_len,
                    struct GaStepResult *result);

/**
 * Creates a batch of `lanes` copies of `env`'s configuration. `workers` of
 * 0 uses every available core.
 */
int32_t ga_batch_new(const struct GaEnv *env, size_t lanes, size_t workers, struct GaBatch **out);

void ga_batch_free(struct GaBatch *batch);

/**
 * Resets every lane. Lane `i` uses the same key a rollout with `seed`
 * would. `obs` receives `lanes·channels·rows·cols` bytes, `results` holds
 * `lanes` entries; both may be null.
 */
int32_t ga_batch_reset(struct GaBatch *batch,
                       uint64_t seed,
                       uint8_t *obs,
                       size_t obs_len,
                       struct GaStepResult *results,
                       size_t results_len);

/**
 * Steps every lane. `actions` holds `lanes·arity` values, lane-major.
 */
int32_t ga_batch_step(struct GaBatch *batch,
                      const uint64_t *actions,
                      size_t actions_len,
                      uint8_t *obs,
                      size_t obs_len,
                      struct GaStepResult *results,
                      size_t results_len);

/**
 * Message for the last failure on this thread, or an empty string. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *ga_last_error(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GRIDARC_H */
