// SPDX-License-Identifier: Apache-2.0
//
// MLM+NSP pretraining example construction: adjacent/random sentence pairs,
// token masking, and the DLMPRE01 binary dataset format.
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "corpus.hpp"
#include "tokenizer.hpp"
#include "util/rng.hpp"

namespace tunlm {

enum class MaskMode {
  // Every selected position is replaced by [MASK].
  kPaperLiteral,
  // Selected positions become [MASK] with probability 0.8, a random
  // non-special token with 0.1, and stay unchanged with 0.1.
  kBert801010,
};

struct MaskingPolicy {
  double mask_prob = 0.15;
  MaskMode mode = MaskMode::kPaperLiteral;
  uint64_t seed = 0;
};

constexpr int32_t kNotNext = 0;
constexpr int32_t kIsNext = 1;
constexpr int32_t kMlmIgnore = -1;  // label sentinel at unmasked positions

struct SentencePair {
  int32_t doc_index = 0;
  int32_t pair_index = 0;  // index of the adjacent pair within the document
  std::vector<int32_t> tokens_a;
  std::vector<int32_t> tokens_b;
  int32_t nsp_label = kIsNext;
};

struct PretrainExample {
  EncodedInput input;
  std::vector<int32_t> mlm_labels;  // original id at masked positions, -1 elsewhere
  int32_t nsp_label = kIsNext;
};

using TokenizedCorpus = std::vector<std::vector<std::vector<int32_t>>>;

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocab& vocab);

// For every adjacent sentence pair (A, A's successor): with probability
// next_ratio emit the true pair labelled IsNext, otherwise pair A with a
// uniformly random sentence from a different document, labelled NotNext.
// Each document draws from its own stream derived from (seed, doc index).
std::vector<SentencePair> make_nsp_pairs(const TokenizedCorpus& docs,
                                         double next_ratio, uint64_t seed);

// Masks maskable positions (attention_mask 1, not CLS/SEP) independently with
// probability policy.mask_prob; returns the masked input and the label array.
std::pair<EncodedInput, std::vector<int32_t>> apply_mlm_mask(const EncodedInput& input,
                                                             const MaskingPolicy& policy,
                                                             const Vocab& vocab);
std::pair<EncodedInput, std::vector<int32_t>> apply_mlm_mask(const EncodedInput& input,
                                                             const MaskingPolicy& policy,
                                                             const Vocab& vocab, Rng& rng);

// make_nsp_pairs -> build_input -> apply_mlm_mask, ordered by
// (document index, pair index). Example i masks with a stream derived from
// (policy.seed, i), so the result is independent of sharding.
std::vector<PretrainExample> build_pretrain_dataset(const Corpus& corpus, const Vocab& vocab,
                                                    const MaskingPolicy& policy,
                                                    int32_t max_seq_len, double next_ratio,
                                                    uint64_t seed);

std::string pretrain_dataset_to_bytes(const std::vector<PretrainExample>& examples);
std::vector<PretrainExample> pretrain_dataset_from_bytes(std::string_view data);
void save_pretrain_dataset(const std::vector<PretrainExample>& examples,
                           const std::filesystem::path& path);
std::vector<PretrainExample> load_pretrain_dataset(const std::filesystem::path& path);

}  // namespace tunlm
