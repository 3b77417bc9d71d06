/* kfarm C API: a distributed kernel farm behind a flat, stable surface.
 *
 * Conventions:
 *   - every function returns a kf_status (KF_OK == 0 on success);
 *   - results are returned through out-parameters;
 *   - strings handed out as char** are heap-allocated and must be released
 *     with kf_string_free();
 *   - kf_last_error() describes the most recent failure on the calling
 *     thread (valid until the next kfarm call on that thread).
 */
#ifndef KFARM_H
#define KFARM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int kf_status;

enum {
    KF_OK = 0,
    KF_ERR_PARSE = 1,     /* text did not match a grammar */
    KF_ERR_BAD_VALUE = 2, /* type/arity/shape mismatch */
    KF_ERR_UNBOUND = 3,   /* unknown identifier */
    KF_ERR_BAD_TASK = 4,  /* task not in the vocabulary */
    KF_ERR_IO = 5,
    KF_ERR_SPAWN = 6,
    KF_ERR_TIMEOUT = 7,
    KF_ERR_PROTOCOL = 8,  /* malformed or unexpected frame */
    KF_ERR_STATE = 9,     /* operation invalid in the current state */
    KF_ERR_USAGE = 10     /* bad arguments to an API call */
};

/* Library version, e.g. "0.1.0". Static storage, do not free. */
const char* kf_version(void);

/* Message for the last failure on this thread. Static per-thread storage,
 * do not free. */
const char* kf_last_error(void);

void kf_string_free(char* s);

/* ------------------------------------------------------------------ farm */

/* Opaque master-side farm: slave registry, global environment, generator. */
typedef struct kf_farm kf_farm;

/* seed may be NULL for an entropy-derived seed. */
kf_status kf_farm_new(kf_farm** out, const uint64_t* seed);
void kf_farm_free(kf_farm* farm);

/* Override the argv used for local slaves (default: this executable with
 * the `worker` subcommand). */
kf_status kf_farm_set_local_worker(kf_farm* farm, const char* const* argv,
                                   size_t argc);
/* Override the command string run via `ssh -e none <host> ...`
 * (default: $KFARM_WORKER_CMD or "kfarm worker"). */
kf_status kf_farm_set_remote_cmd(kf_farm* farm, const char* cmd);
kf_status kf_farm_set_timeout(kf_farm* farm, double seconds);

/* Launch a worker and perform the identity handshake; *out_id receives the
 * assigned processor id (1, 2, 3, ... in launch order). */
kf_status kf_farm_launch_local(kf_farm* farm, int* out_id);
kf_status kf_farm_launch_ssh(kf_farm* farm, const char* host, int* out_id);

kf_status kf_farm_count(kf_farm* farm, int* out_count);

/* Identity table: one printed row value per line, header row first. */
kf_status kf_farm_info_table(kf_farm* farm, char** out_table);

/* Bind ident to the value denoted by value_text in the master environment. */
kf_status kf_farm_set_global(kf_farm* farm, const char* ident,
                             const char* value_text);

/* Send every master binding to every live slave. */
kf_status kf_farm_export_env(kf_farm* farm);

/* Evaluate a task expression (e.g. "tridiag[ns, 0, 1.2, 2.1]") on the
 * slave with the given processor id; *out_value is the printed result. */
kf_status kf_farm_eval(kf_farm* farm, int processor_id, const char* task,
                       char** out_value);

/* The scatter/gather pipeline of order ns across the first two slaves;
 * *out_value is the printed, chopped eigenvalue list. */
kf_status kf_farm_pipeline(kf_farm* farm, int64_t ns, char** out_value);

/* CLOSE every slave and wait for the processes to exit. */
kf_status kf_farm_close(kf_farm* farm);

/* ---------------------------------------------------------------- worker */

/* Serve the wire protocol on stdin/stdout until CLOSE or EOF, using a
 * fresh temporary working directory. seed may be NULL. */
kf_status kf_worker_serve_stdio(const uint64_t* seed);

/* ------------------------------------------------------------------ pipe */

/* Run the external-program exchange of order ns: write the bridge file,
 * execute exec_argv with stdin redirected from it, parse the product and
 * return the printed eigenvalue list. Passing argc == 0 uses this
 * executable's own `pipe worker` as the external program. timeout_sec <= 0
 * means the 60 s default. */
kf_status kf_pipe_run(int64_t ns, const char* const* exec_argv, size_t argc,
                      double timeout_sec, char** out_value);

/* Act as the reference external product program: read an order n and two
 * n x n matrices from stdin, print the n^2 product entries in the
 * fixed-width format. Returns KF_OK on success. */
kf_status kf_pipe_worker_stdio(void);

/* ----------------------------------------------------------------- batch */

/* Parse script_path, then run it in a detached process with its output
 * bound to output_path; *out_pid receives the job pid. seed may be NULL. */
kf_status kf_batch_submit(const char* script_path, const char* output_path,
                          const uint64_t* seed, long* out_pid);

/* State of the job owning output_path: "running", "done" or "failed".
 * out_elapsed (optional) receives the job duration once done. */
kf_status kf_batch_status(const char* output_path, char** out_state,
                          double* out_elapsed);

#ifdef __cplusplus
}
#endif

#endif /* KFARM_H */
