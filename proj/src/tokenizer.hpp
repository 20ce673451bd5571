// SPDX-License-Identifier: Apache-2.0
//
// WordPiece vocabulary training, greedy longest-match encoding, decoding and
// model-input packing ([CLS] A [SEP] B [SEP] with segments, mask, padding).
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "corpus.hpp"

namespace tunlm {

struct Vocab {
  static constexpr int32_t kPad = 0;
  static constexpr int32_t kUnk = 1;
  static constexpr int32_t kCls = 2;
  static constexpr int32_t kSep = 3;
  static constexpr int32_t kMask = 4;
  static constexpr int32_t kNumSpecials = 5;
  static constexpr const char* kContinuation = "##";

  std::vector<std::string> tokens;  // id -> surface form
  std::unordered_map<std::string, int32_t> id_of;

  static const std::vector<std::string>& special_tokens();
  // Validates: specials at ids 0-4, uniqueness, non-empty surface forms.
  static Vocab from_tokens(std::vector<std::string> tokens);

  int32_t size() const { return static_cast<int32_t>(tokens.size()); }
  int32_t lookup(std::string_view token) const;  // -1 when absent
  bool is_special(int32_t id) const { return id >= 0 && id < kNumSpecials; }
};

// Frequency-scored WordPiece training: alphabet = single characters (word
// initial bare, word internal with the ## prefix) seen at least
// `min_frequency` times, then greedy pair merges by descending pair count,
// ties broken by the lexicographically smaller merged token. Deterministic.
Vocab train_wordpiece(const Corpus& corpus, int32_t vocab_size, int32_t min_frequency);

struct TokenSpan {
  int32_t id;
  // Codepoint offsets into the encoded text, end exclusive. An UNK covers its
  // whole word.
  uint32_t begin_cp;
  uint32_t end_cp;
};

std::vector<TokenSpan> encode_with_offsets(std::string_view text, const Vocab& vocab);
std::vector<int32_t> encode(std::string_view text, const Vocab& vocab);

// Inverse of encode up to whitespace: continuation pieces concatenate,
// other pieces join with single spaces, specials are dropped.
std::string decode(std::span<const int32_t> ids, const Vocab& vocab);

struct EncodedInput {
  std::vector<int32_t> token_ids;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> attention_mask;
  int32_t seq_len() const { return static_cast<int32_t>(token_ids.size()); }
};

// Packs [CLS] A [SEP] (B [SEP]) into a fixed-length input. When the pair does
// not fit, tokens are removed one at a time from the longer of A/B.
EncodedInput build_input(std::span<const int32_t> tokens_a,
                         const std::vector<int32_t>* tokens_b,
                         int32_t max_seq_len, const Vocab& vocab);

// Vocab file: one token per line, LF endings, line number = id, the five
// specials on the first five lines. Byte-exact across runs.
void save_vocab(const Vocab& vocab, const std::filesystem::path& path);
Vocab load_vocab(const std::filesystem::path& path);

}  // namespace tunlm
