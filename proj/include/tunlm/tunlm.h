/* SPDX-License-Identifier: Apache-2.0
 *
 * C API of the tunlm shared library: corpus preparation, WordPiece
 * vocabulary training and encoding, pretraining-dataset construction,
 * MLM+NSP pretraining, task fine-tuning, sequential transfer and evaluation.
 *
 * Conventions:
 *   - Functions return TUNLM_OK on success; on failure they return an error
 *     code and tunlm_last_error() holds a one-line diagnostic (thread-local).
 *   - Strings and arrays written through out-parameters are allocated by the
 *     library and must be released with tunlm_free().
 *   - `config_path` may be NULL or empty (defaults apply); `overrides_json`
 *     is an optional partial config document that takes precedence over the
 *     config file. Schema sections: corpus, tokenizer, model, train, eval.
 */
#ifndef TUNLM_TUNLM_H
#define TUNLM_TUNLM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TUNLM_API __declspec(dllexport)
#else
#define TUNLM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tunlm_status {
  TUNLM_OK = 0,
  TUNLM_ERR_INVALID_ARGUMENT = 1,
  TUNLM_ERR_IO = 2,
  TUNLM_ERR_RUNTIME = 3
} tunlm_status;

TUNLM_API const char* tunlm_version(void);

/* Last error message of the calling thread; empty string when none. */
TUNLM_API const char* tunlm_last_error(void);

TUNLM_API void tunlm_free(void* ptr);

/* ------------------------------------------------------------------ corpus */

/* Cleans and filters raw documents into a corpus file (one sentence per
 * line, blank line between documents). `input_path` is a JSONL file with
 * {id, text} records, a plain-text file (one document), or a directory of
 * .txt files (one document each, sorted by filename), matching
 * corpus.format. Writes corpus statistics JSON to *stats_json_out when
 * non-NULL. */
TUNLM_API tunlm_status tunlm_prepare_corpus(const char* input_path, const char* config_path,
                                            const char* overrides_json, const char* corpus_out,
                                            char** stats_json_out);

TUNLM_API tunlm_status tunlm_corpus_stats(const char* corpus_path, char** stats_json_out);

/* ------------------------------------------------------------------- vocab */

typedef struct tunlm_vocab tunlm_vocab;

TUNLM_API tunlm_status tunlm_vocab_train(const char* corpus_path, const char* config_path,
                                         const char* overrides_json, const char* vocab_out);

TUNLM_API tunlm_status tunlm_vocab_open(const char* vocab_path, tunlm_vocab** out);
TUNLM_API void tunlm_vocab_close(tunlm_vocab* vocab);
TUNLM_API int32_t tunlm_vocab_size(const tunlm_vocab* vocab);

/* Encodes UTF-8 text into token ids; writes a malloc'd array. */
TUNLM_API tunlm_status tunlm_encode(const tunlm_vocab* vocab, const char* text,
                                    int32_t** ids_out, size_t* count_out);
TUNLM_API tunlm_status tunlm_decode(const tunlm_vocab* vocab, const int32_t* ids, size_t count,
                                    char** text_out);

/* ----------------------------------------------------------- pretrain data */

/* Builds the MLM+NSP dataset (DLMPRE01 binary format) from a corpus file and
 * a vocab file. Masking/pairing knobs come from the train config section:
 * mask_prob, mask_mode, next_ratio, max_seq_len, seed. */
TUNLM_API tunlm_status tunlm_build_pretrain(const char* corpus_path, const char* vocab_path,
                                            const char* config_path, const char* overrides_json,
                                            const char* dataset_out);

/* ---------------------------------------------------------------- training */

/* Pretrains from scratch on a DLMPRE01 dataset; writes the final checkpoint
 * and, when log_path is non-NULL, a JSONL training log with one
 * {step, lr, loss, task} record per step. */
TUNLM_API tunlm_status tunlm_pretrain(const char* dataset_path, const char* config_path,
                                      const char* overrides_json, const char* checkpoint_out,
                                      const char* log_path);

/* task is "classification" or "qa". `dev_path` may be NULL: the training
 * file is then split train/dev by eval.split_fraction with the train seed.
 * Writes the best checkpoint by dev metric and returns the final dev metrics
 * JSON through report_json_out when non-NULL. */
TUNLM_API tunlm_status tunlm_finetune(const char* checkpoint_path, const char* task,
                                      const char* train_path, const char* dev_path,
                                      const char* vocab_path, const char* config_path,
                                      const char* overrides_json, const char* checkpoint_out,
                                      char** report_json_out);

/* stages_json: [{"train": path, "dev": path}, ...], applied in order, each
 * stage starting from the previous stage's best checkpoint. */
TUNLM_API tunlm_status tunlm_transfer(const char* checkpoint_path, const char* task,
                                      const char* stages_json, const char* vocab_path,
                                      const char* config_path, const char* overrides_json,
                                      const char* checkpoint_out, char** report_json_out);

/* -------------------------------------------------------------- evaluation */

/* Evaluates a checkpoint on a dataset; writes a predictions JSONL file when
 * predictions_out is non-NULL and returns the metrics report JSON. */
TUNLM_API tunlm_status tunlm_evaluate(const char* checkpoint_path, const char* task,
                                      const char* data_path, const char* vocab_path,
                                      const char* config_path, const char* overrides_json,
                                      const char* predictions_out, char** report_json_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TUNLM_TUNLM_H */
