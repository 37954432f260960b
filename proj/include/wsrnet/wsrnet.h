/*
 * Copyright 2026 The wsrnet Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef WSRNET_WSRNET_H_
#define WSRNET_WSRNET_H_

#include <stddef.h>
#include <stdint.h>

#if defined(WSRNET_BUILDING)
#define WSR_API __attribute__((visibility("default")))
#else
#define WSR_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes double as CLI exit codes. */
typedef enum wsr_status {
  WSR_OK = 0,
  WSR_ERR_USAGE = 1,   /* bad argument, unknown key, broken precondition */
  WSR_ERR_DATA = 2,    /* unreadable or malformed input files */
  WSR_ERR_NUMERIC = 3, /* non-finite loss, infeasible alignment */
  WSR_ERR_INTERNAL = 4
} wsr_status;

typedef struct wsr_config wsr_config;
typedef struct wsr_dataset wsr_dataset;
typedef struct wsr_model wsr_model;
typedef struct wsr_index wsr_index;

/* Message of the last failed call on this thread; empty after success. */
WSR_API const char* wsr_last_error(void);
/* Releases strings returned through char** out-parameters. */
WSR_API void wsr_string_free(char* s);

/* ---- configuration ---------------------------------------------------- */
WSR_API wsr_status wsr_config_new(wsr_config** out);
WSR_API wsr_status wsr_config_load(const char* path, wsr_config** out);
WSR_API wsr_status wsr_config_set(wsr_config* config, const char* key, const char* value);
WSR_API wsr_status wsr_config_get(const wsr_config* config, const char* key, char** value);
/* Canonical "key = value" listing of every key. */
WSR_API wsr_status wsr_config_echo(const wsr_config* config, char** text);
/* Every key with default and provenance tag. */
WSR_API wsr_status wsr_config_help(char** text);
WSR_API void wsr_config_free(wsr_config* config);

/* ---- datasets --------------------------------------------------------- */
/* Manifest lines "path<TAB>transcript<TAB>split", paths relative to root.
   `report` (nullable) receives per-line problems, one per line. */
WSR_API wsr_status wsr_dataset_load(const char* root, const char* manifest, const char* charset,
                                    wsr_dataset** out, char** report);
/* Unlabelled images read from PGM files; ids are the paths. */
WSR_API wsr_status wsr_dataset_from_images(const char* const* paths, size_t count, wsr_dataset** out);
/* `per_word` renderings of every line of the vocabulary file. */
WSR_API wsr_status wsr_dataset_synth(const char* vocab_path, int per_word, uint64_t seed, const char* split,
                                     const char* charset, wsr_dataset** out);
/* Writes PGM images and manifest.tsv into dir. */
WSR_API wsr_status wsr_dataset_write(const wsr_dataset* dataset, const char* dir);
/* Samples of one split ("train", "val", "test"); NULL keeps all. */
WSR_API wsr_status wsr_dataset_filter(const wsr_dataset* dataset, const char* split, wsr_dataset** out);
WSR_API size_t wsr_dataset_size(const wsr_dataset* dataset);
WSR_API void wsr_dataset_free(wsr_dataset* dataset);

/* ---- training --------------------------------------------------------- */
/* Trains under `config` (regime scratch, or fine_tune from base_checkpoint).
   With a base, architecture keys come from the base checkpoint and only
   run-time keys are taken from `config`. Per-epoch metrics lines
   "epoch<TAB>train_loss<TAB>val_cer<TAB>val_wer<TAB>lr" are appended to
   metrics_path (nullable), after a '#'-prefixed copy of the config. */
WSR_API wsr_status wsr_train(const wsr_config* config, const wsr_dataset* train, const wsr_dataset* val,
                             const char* base_checkpoint, const char* metrics_path, wsr_model** out);

WSR_API wsr_status wsr_model_load(const char* path, wsr_model** out);
WSR_API wsr_status wsr_model_save(const wsr_model* model, const char* path);
WSR_API wsr_status wsr_model_config(const wsr_model* model, char** text);
WSR_API wsr_status wsr_model_config_get(const wsr_model* model, const char* key, char** value);
WSR_API void wsr_model_free(wsr_model* model);

/* ---- recognition ------------------------------------------------------ */
/* branch: "ctc" | "seq2seq"; decoder: "greedy" | "beam". One
   "id<TAB>transcript" line per sample. */
WSR_API wsr_status wsr_recognize(const wsr_model* model, const wsr_dataset* dataset, const char* branch,
                                 const char* decoder, int beam_width, char** tsv);
WSR_API wsr_status wsr_eval_htr(const wsr_model* model, const wsr_dataset* dataset, const char* branch,
                                const char* decoder, int beam_width, double* cer, double* wer);

/* ---- spotting --------------------------------------------------------- */
#define WSR_INDEX_FLOAT 1
#define WSR_INDEX_BINARY 2

WSR_API wsr_status wsr_index_build(const wsr_model* model, const wsr_dataset* dataset, int flags, wsr_index** out);
WSR_API wsr_status wsr_index_save(const wsr_index* index, const char* path);
WSR_API wsr_status wsr_index_load(const char* path, wsr_index** out);
WSR_API size_t wsr_index_size(const wsr_index* index);
/* Closed-form byte size of the saved file. */
WSR_API uint64_t wsr_index_file_size(const wsr_index* index);
WSR_API void wsr_index_free(wsr_index* index);

/* Rankings come back as "query_id<TAB>rank<TAB>candidate_id<TAB>score" lines,
   ascending score. backend: "float" | "binary". */
WSR_API wsr_status wsr_spot_qbe(const wsr_index* index, uint32_t query_id, const char* backend, int exclude_self,
                                char** tsv);
WSR_API wsr_status wsr_spot_qbe_image(const wsr_model* model, const wsr_index* index, const char* pgm_path,
                                      const char* backend, char** tsv);
/* mode: "embed" (character encoder) | "fa" (forced alignment). */
WSR_API wsr_status wsr_spot_qbs(const wsr_model* model, const wsr_index* index, const char* const* queries,
                                size_t count, const char* mode, const char* backend, char** tsv);
/* kind: "qbe" | "qbs" | "fa". */
WSR_API wsr_status wsr_eval_kws(const wsr_model* model, const wsr_index* index, const char* kind,
                                const char* backend, double* map, size_t* queries);

/* KL statistic between edit distances and descriptor distances over all
   record pairs. With random_baseline set, descriptors are replaced by
   Gaussian noise drawn from `seed`. */
WSR_API wsr_status wsr_kl_stat(const wsr_index* index, int bins, int random_baseline, uint64_t seed, double* out);

WSR_API wsr_status wsr_edit_distance(const char* a, const char* b, int* out);

#ifdef __cplusplus
}
#endif

#endif /* WSRNET_WSRNET_H_ */
