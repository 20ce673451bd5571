// SPDX-License-Identifier: Apache-2.0
//
// Metrics: accuracy and macro-F1 for classification; exact match, token F1
// and token recall (bag-of-tokens, max over gold alternatives) for span QA;
// answer normalization; span decoding; and whole-dataset evaluation.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "datasets.hpp"
#include "model.hpp"
#include "tokenizer.hpp"

namespace tunlm {

struct ClassificationResult {
  std::vector<int32_t> gold;
  std::vector<int32_t> predicted;
  std::vector<std::string> label_set;
};

double accuracy(const ClassificationResult& result);
// Unweighted mean of one-vs-rest F1 over the label set; a class with no
// predicted and no gold support scores 0.
double macro_f1(const ClassificationResult& result);

// Strips punctuation and Arabic diacritics, removes the definite-article
// prefix from each word (repeatedly, so normalization is idempotent) and
// collapses whitespace.
std::string normalize_answer(std::string_view text);

double exact_match(std::string_view pred, std::span<const std::string> golds);
double token_f1(std::string_view pred, std::span<const std::string> golds);
double token_recall(std::string_view pred, std::span<const std::string> golds);

// Highest start+end score over pairs with start <= end, span length at most
// max_answer_len, both ends inside [context_begin, context_end). Ties go to
// the smaller start, then the smaller end.
std::pair<int32_t, int32_t> qa_span_decode(std::span<const double> start_logits,
                                           std::span<const double> end_logits,
                                           int32_t context_begin, int32_t context_end,
                                           int32_t max_answer_len);

struct MetricsReport {
  std::string task;
  int64_t example_count = 0;
  std::string config_hash;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& name) const;
  std::string to_json() const;
  std::string to_table() const;
};

struct Prediction {
  std::string id;
  std::string value;  // label name or answer text
};

// QA featurization shared by fine-tuning and evaluation. The question is
// segment 0, the context segment 1; the context is truncated to fit.
struct QaFeature {
  EncodedInput input;
  std::vector<TokenSpan> context_pieces;  // codepoint spans into the context
  int32_t context_begin = 0;  // sequence position of the first context token
  int32_t context_end = 0;    // one past the last context token
  int32_t gold_start = -1;    // sequence positions of the first gold answer,
  int32_t gold_end = -1;      // -1 when it does not survive truncation
};

QaFeature build_qa_feature(const QaExample& example, const Vocab& vocab, int32_t max_seq_len);

std::vector<int32_t> predict_classification(const ModelConfig& config,
                                            const Parameters<float>& params,
                                            const std::vector<EncodedInput>& inputs,
                                            int32_t batch_size);

MetricsReport evaluate_classification(const Checkpoint& ckpt, const Vocab& vocab,
                                      const ClassificationDataset& dataset,
                                      std::vector<Prediction>* predictions = nullptr);

MetricsReport evaluate_qa(const Checkpoint& ckpt, const Vocab& vocab, const QaDataset& dataset,
                          int32_t max_answer_len = 30,
                          std::vector<Prediction>* predictions = nullptr);

// Mean dev token-F1 used for best-checkpoint selection during QA fine-tuning.
double qa_dev_token_f1(const ModelConfig& config, const Parameters<float>& params,
                       const Vocab& vocab, const QaDataset& dataset, int32_t max_seq_len,
                       int32_t max_answer_len);

std::string config_hash(const ModelConfig& config);

}  // namespace tunlm
