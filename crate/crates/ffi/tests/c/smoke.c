#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#include "gridarc.h"

#define CHECK(call)                                                        \
    do {                                                                   \
        int32_t status_ = (call);                                          \
        if (status_ != GA_OK) {                                            \
            fprintf(stderr, "%s -> %d: %s\n", #call, status_, ga_last_error()); \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 2) {
        fprintf(stderr, "usage: smoke CONFIG\n");
        return 2;
    }
    GaEnv *env = NULL;
    CHECK(ga_env_new(argv[1], NULL, &env));

    GaEnvSpec spec;
    CHECK(ga_env_spec(env, &spec));
    size_t obs_len = (size_t)spec.obs_channels * spec.obs_rows * spec.obs_cols;
    uint8_t *obs = malloc(obs_len);

    GaStepResult res;
    CHECK(ga_env_reset(env, 7, obs, obs_len, &res));
    if (res.step_kind != GA_STEP_FIRST) return 1;

    uint64_t action[8] = {0};
    action[spec.action_arity - 1] = 1; /* op index 1: fill with color 1 */
    CHECK(ga_env_step(env, action, spec.action_arity, obs, obs_len, &res));
    printf("reward %.6f similarity %.6f kind %u\n", res.reward, res.similarity, res.step_kind);

    if (ga_env_step(env, action, 0, NULL, 0, NULL) != GA_ERR_ACTION) return 1;
    if (strlen(ga_last_error()) == 0) return 1;

    GaBatch *batch = NULL;
    CHECK(ga_batch_new(env, 4, 1, &batch));
    uint8_t *bobs = malloc(4 * obs_len);
    GaStepResult bres[4];
    CHECK(ga_batch_reset(batch, 7, bobs, 4 * obs_len, bres, 4));
    uint64_t actions[4 * 8];
    memset(actions, 0, sizeof actions);
    for (int i = 0; i < 4; i++) actions[i * spec.action_arity + spec.action_arity - 1] = 1;
    CHECK(ga_batch_step(batch, actions, 4 * spec.action_arity, bobs, 4 * obs_len, bres, 4));
    printf("lane0 reward %.6f\n", bres[0].reward);

    ga_batch_free(batch);
    ga_env_free(env);
    free(bobs);
    free(obs);
    return 0;
}
