/*
 * Copyright 2026 The U2S Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

/*
 * C interface of libu2s.
 *
 * A u2s_run holds a validated run configuration plus per-command options.
 * Every function returning int returns U2S_OK or one of the status codes
 * below; the message of the most recent failure on the calling thread is
 * available from u2s_last_error().
 */

#ifndef U2S_U2S_H_
#define U2S_U2S_H_

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define U2S_API __declspec(dllexport)
#else
#define U2S_API __attribute__((visibility("default")))
#endif

typedef struct u2s_run u2s_run;

enum {
  U2S_OK = 0,
  U2S_ERR_RUNTIME = 1,
  U2S_ERR_INVALID_ARGUMENT = 2,
  U2S_ERR_VALIDATION = 3,
  U2S_ERR_IO = 4,
  U2S_ERR_SHAPE = 5,
  U2S_ERR_UNKNOWN_KIND = 6,
  U2S_ERR_LABEL_RANGE = 7,
  U2S_ERR_NON_SCALAR_ROOT = 8,
  U2S_ERR_DETACHED_GRAPH = 9,
  U2S_ERR_NON_FINITE = 10,
  U2S_ERR_MISSING_CSM = 11,
  U2S_ERR_CHECKPOINT_MAGIC = 12,
  U2S_ERR_CHECKPOINT_TRUNCATED = 13,
  U2S_ERR_CHECKPOINT_VERSION = 14,
  U2S_ERR_CHECKPOINT_FINGERPRINT = 15,
  U2S_ERR_EMPTY_INPUT = 16
};

U2S_API const char* u2s_version(void);

/* Stable snake_case name of a status code, e.g. "checkpoint_truncated". */
U2S_API const char* u2s_status_name(int status);

/* Message of the last failure on this thread; "" when none. */
U2S_API const char* u2s_last_error(void);

/* Loads a TOML config file (U2S_SEED overrides the seed). */
U2S_API int u2s_run_open(const char* config_path, u2s_run** out);

/* Parses TOML text; relative CSV paths resolve against the working directory. */
U2S_API int u2s_run_open_text(const char* toml_text, u2s_run** out);

U2S_API void u2s_run_close(u2s_run* run);

/* Options for subsequent commands. NULL clears a path. */
U2S_API int u2s_run_set_checkpoint(u2s_run* run, const char* path);
U2S_API int u2s_run_set_baseline(u2s_run* run, const char* path);
U2S_API int u2s_run_set_force(u2s_run* run, int force);

/* runs/<name>; owned by the handle. */
U2S_API const char* u2s_run_dir(const u2s_run* run);

/* Config fingerprint stored in checkpoints. */
U2S_API unsigned long long u2s_run_fingerprint(const u2s_run* run);

/* Plain-text report of the last successful command; owned by the handle. */
U2S_API const char* u2s_run_report(const u2s_run* run);

U2S_API int u2s_gen_data(u2s_run* run);
/* stage: "universal", "mask_and_specific", "joint", or "all" / NULL. */
U2S_API int u2s_train(u2s_run* run, const char* stage);
U2S_API int u2s_build_csm(u2s_run* run);
U2S_API int u2s_eval(u2s_run* run);
U2S_API int u2s_ablate_fusion(u2s_run* run);
U2S_API int u2s_ablate_reg(u2s_run* run);
U2S_API int u2s_sweep_n(u2s_run* run);
U2S_API int u2s_export_figures(u2s_run* run);

#ifdef __cplusplus
}
#endif

#endif /* U2S_U2S_H_ */
