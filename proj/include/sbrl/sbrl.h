/* C interface to the sbrl library. Every call returns an sbrl_status;
 * on failure sbrl_last_error() holds the message for the calling thread.
 * Strings returned through char** are owned by the caller and released
 * with sbrl_free_string. */
#ifndef SBRL_H
#define SBRL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SBRL_API __declspec(dllexport)
#else
#define SBRL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sbrl_status {
    SBRL_OK = 0,
    SBRL_ERR_CONFIG = 1,
    SBRL_ERR_DOMAIN = 2,
    SBRL_ERR_NUMERIC = 3,
    SBRL_ERR_INSUFFICIENT_DATA = 4,
    SBRL_ERR_DATA = 5,
    SBRL_ERR_SPEC = 6,
    SBRL_ERR_DIVERGED = 7,
    SBRL_ERR_NULL_ARGUMENT = 8,
    SBRL_ERR_INTERNAL = 9
} sbrl_status;

SBRL_API const char* sbrl_version(void);
SBRL_API const char* sbrl_last_error(void);
SBRL_API const char* sbrl_status_name(sbrl_status status);
SBRL_API void sbrl_free_string(char* s);

typedef void (*sbrl_line_callback)(const char* line, void* user);

/* ---- experiments ------------------------------------------------------- */

typedef struct sbrl_experiment sbrl_experiment;

SBRL_API sbrl_status sbrl_experiment_load(const char* path, sbrl_experiment** out);
/* source_dir resolves relative data paths; NULL means ".". */
SBRL_API sbrl_status sbrl_experiment_parse(const char* json, const char* source_dir, sbrl_experiment** out);
SBRL_API void sbrl_experiment_free(sbrl_experiment* exp);
SBRL_API sbrl_status sbrl_experiment_kind(const sbrl_experiment* exp, char** out);
SBRL_API sbrl_status sbrl_experiment_hash(const sbrl_experiment* exp, char** out);

typedef struct sbrl_run_options {
    const char* seeds;   /* "1,2,3", "5" or "3:7"; NULL keeps the config */
    size_t workers;      /* 0 defers to SBRL_WORKERS, the config, then the core count */
    const char* output;  /* NULL defers to SBRL_OUT, then the config */
    int force;           /* overwrite results of another config */
    sbrl_line_callback progress;
    void* user;
} sbrl_run_options;

/* summary_json (optional) receives {config_hash, output, cells, failures, files}.
 * Failed cells do not make the call fail; inspect "failures". */
SBRL_API sbrl_status sbrl_run(const sbrl_experiment* exp, const sbrl_run_options* opts, char** summary_json);

/* ---- verification ------------------------------------------------------ */

/* Runs a suite (a criterion name or "all"), reporting one line per criterion.
 * failed (optional) receives the number of failing criteria. */
SBRL_API sbrl_status sbrl_verify(const char* suite, const char* scratch_dir, sbrl_line_callback on_line, void* user,
                                 int* failed);

/* ---- stable laws ------------------------------------------------------- */

typedef struct sbrl_stable sbrl_stable;

SBRL_API sbrl_status sbrl_stable_create(double alpha, double beta, double sigma, double delta, sbrl_stable** out);
SBRL_API void sbrl_stable_free(sbrl_stable* law);
SBRL_API sbrl_status sbrl_stable_pdf(const sbrl_stable* law, double x, double* out);
SBRL_API sbrl_status sbrl_stable_cdf(const sbrl_stable* law, double x, double* out);
SBRL_API sbrl_status sbrl_stable_char_fn(const sbrl_stable* law, double u, double* re, double* im);
SBRL_API sbrl_status sbrl_stable_sample(const sbrl_stable* law, uint64_t seed, size_t n, double* out);

/* params receives alpha, beta, sigma, delta. */
SBRL_API sbrl_status sbrl_estimate_stable(const double* samples, size_t n, double params[4], int* degenerate);
/* Newline-separated reals; '#' lines are skipped. */
SBRL_API sbrl_status sbrl_estimate_stable_file(const char* path, double params[4], int* degenerate);

/* ---- contextual bandits ------------------------------------------------ */

typedef struct sbrl_bandit_env sbrl_bandit_env;
typedef struct sbrl_bandit_agent sbrl_bandit_agent;

/* env_json uses the "env" block of a bandit-regret config. */
SBRL_API sbrl_status sbrl_bandit_env_create(const char* env_json, uint64_t seed, sbrl_bandit_env** out);
SBRL_API void sbrl_bandit_env_free(sbrl_bandit_env* env);
SBRL_API sbrl_status sbrl_bandit_env_dims(const sbrl_bandit_env* env, size_t* arms, size_t* dim, size_t* horizon);

/* agent_json is an agent entry of a bandit-regret config: a name such as
 * "acts" or an object with "algorithm". Oracle agents read from env. */
SBRL_API sbrl_status sbrl_bandit_agent_create(const char* agent_json, const sbrl_bandit_env* env, uint64_t seed,
                                              sbrl_bandit_agent** out);
SBRL_API void sbrl_bandit_agent_free(sbrl_bandit_agent* agent);

/* One round: draw contexts, choose, pull, observe. Any output may be NULL. */
SBRL_API sbrl_status sbrl_bandit_step(sbrl_bandit_env* env, sbrl_bandit_agent* agent, size_t* arm, double* reward,
                                      double* regret);

#ifdef __cplusplus
}
#endif

#endif
