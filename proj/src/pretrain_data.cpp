// SPDX-License-Identifier: Apache-2.0
#include "pretrain_data.hpp"

#include <stdexcept>

#include "util/bytes.hpp"

namespace tunlm {
namespace {

constexpr char kMagic[9] = "DLMPRE01";

// Stream labels keeping NSP sampling and masking independent.
constexpr uint64_t kNspStream = 0x4E5350;   // "NSP"
constexpr uint64_t kMaskStream = 0x4D4C4D;  // "MLM"

}  // namespace

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const Vocab& vocab) {
  TokenizedCorpus docs;
  docs.reserve(corpus.documents.size());
  for (const auto& doc : corpus.documents) {
    std::vector<std::vector<int32_t>> sentences;
    sentences.reserve(doc.size());
    for (const std::string& sentence : doc) sentences.push_back(encode(sentence, vocab));
    docs.push_back(std::move(sentences));
  }
  return docs;
}

std::vector<SentencePair> make_nsp_pairs(const TokenizedCorpus& docs,
                                         double next_ratio, uint64_t seed) {
  if (next_ratio < 0.0 || next_ratio > 1.0) {
    throw std::invalid_argument("next_ratio must lie in [0, 1]");
  }
  size_t adjacent_pairs = 0;
  for (const auto& doc : docs) {
    if (!doc.empty()) adjacent_pairs += doc.size() - 1;
  }
  if (adjacent_pairs == 0) throw std::runtime_error("no NSP pairs available");
  if (docs.size() < 2) {
    throw std::runtime_error("need at least 2 documents for negative sampling");
  }

  std::vector<SentencePair> pairs;
  pairs.reserve(adjacent_pairs);
  for (size_t d = 0; d < docs.size(); ++d) {
    const auto& doc = docs[d];
    if (doc.size() < 2) continue;
    Rng rng(derive_seed(seed, kNspStream, d));
    for (size_t s = 0; s + 1 < doc.size(); ++s) {
      SentencePair pair;
      pair.doc_index = static_cast<int32_t>(d);
      pair.pair_index = static_cast<int32_t>(s);
      pair.tokens_a = doc[s];
      if (rng.uniform_double() < next_ratio) {
        pair.tokens_b = doc[s + 1];
        pair.nsp_label = kIsNext;
      } else {
        // Uniform over the other documents, then uniform within.
        uint32_t other = rng.uniform_u32(static_cast<uint32_t>(docs.size() - 1));
        if (other >= d) ++other;
        const auto& other_doc = docs[other];
        const uint32_t pick = rng.uniform_u32(static_cast<uint32_t>(other_doc.size()));
        pair.tokens_b = other_doc[pick];
        pair.nsp_label = kNotNext;
      }
      pairs.push_back(std::move(pair));
    }
  }
  return pairs;
}

std::pair<EncodedInput, std::vector<int32_t>> apply_mlm_mask(const EncodedInput& input,
                                                             const MaskingPolicy& policy,
                                                             const Vocab& vocab, Rng& rng) {
  if (policy.mask_prob < 0.0 || policy.mask_prob > 1.0) {
    throw std::invalid_argument("mask_prob must lie in [0, 1]");
  }
  EncodedInput masked = input;
  std::vector<int32_t> labels(input.token_ids.size(), kMlmIgnore);
  for (size_t i = 0; i < input.token_ids.size(); ++i) {
    if (input.attention_mask[i] != 1) continue;
    const int32_t id = input.token_ids[i];
    if (id == Vocab::kCls || id == Vocab::kSep) continue;
    if (rng.uniform_double() >= policy.mask_prob) continue;

    labels[i] = id;
    if (policy.mode == MaskMode::kPaperLiteral) {
      masked.token_ids[i] = Vocab::kMask;
    } else {
      const double r = rng.uniform_double();
      if (r < 0.8) {
        masked.token_ids[i] = Vocab::kMask;
      } else if (r < 0.9) {
        const int32_t non_specials = vocab.size() - Vocab::kNumSpecials;
        if (non_specials > 0) {
          masked.token_ids[i] =
              Vocab::kNumSpecials +
              static_cast<int32_t>(rng.uniform_u32(static_cast<uint32_t>(non_specials)));
        }
      }  // else: keep the original token
    }
  }
  return {std::move(masked), std::move(labels)};
}

std::pair<EncodedInput, std::vector<int32_t>> apply_mlm_mask(const EncodedInput& input,
                                                             const MaskingPolicy& policy,
                                                             const Vocab& vocab) {
  Rng rng(policy.seed);
  return apply_mlm_mask(input, policy, vocab, rng);
}

std::vector<PretrainExample> build_pretrain_dataset(const Corpus& corpus, const Vocab& vocab,
                                                    const MaskingPolicy& policy,
                                                    int32_t max_seq_len, double next_ratio,
                                                    uint64_t seed) {
  const TokenizedCorpus docs = tokenize_corpus(corpus, vocab);
  std::vector<SentencePair> pairs = make_nsp_pairs(docs, next_ratio, seed);

  std::vector<PretrainExample> examples;
  examples.reserve(pairs.size());
  for (size_t i = 0; i < pairs.size(); ++i) {
    const SentencePair& pair = pairs[i];
    EncodedInput packed = build_input(pair.tokens_a, &pair.tokens_b, max_seq_len, vocab);
    Rng rng(derive_seed(policy.seed, kMaskStream, i));
    auto [masked, labels] = apply_mlm_mask(packed, policy, vocab, rng);
    examples.push_back({std::move(masked), std::move(labels), pair.nsp_label});
  }
  return examples;
}

std::string pretrain_dataset_to_bytes(const std::vector<PretrainExample>& examples) {
  ByteWriter w;
  w.bytes(kMagic, 8);
  const uint32_t seq_len = examples.empty()
                               ? 0
                               : static_cast<uint32_t>(examples.front().input.token_ids.size());
  w.u32(seq_len);
  w.u32(static_cast<uint32_t>(examples.size()));
  for (const PretrainExample& ex : examples) {
    if (ex.input.token_ids.size() != seq_len) {
      throw std::runtime_error("pretrain examples must share one sequence length");
    }
    ByteWriter record;
    record.u32(static_cast<uint32_t>(ex.nsp_label));
    record.i32_array(ex.input.token_ids);
    record.i32_array(ex.input.segment_ids);
    record.i32_array(ex.input.attention_mask);
    record.i32_array(ex.mlm_labels);
    w.u32(static_cast<uint32_t>(record.data().size()));
    w.bytes(record.data().data(), record.data().size());
  }
  return w.data();
}

std::vector<PretrainExample> pretrain_dataset_from_bytes(std::string_view data) {
  ByteReader r(data, "corrupt pretrain dataset");
  if (data.size() < 8 || r.raw(8) != std::string_view(kMagic, 8)) {
    throw std::runtime_error("not a pretrain dataset");
  }
  const uint32_t seq_len = r.u32();
  const uint32_t count = r.u32();
  std::vector<PretrainExample> examples;
  examples.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t record_len = r.u32();
    if (record_len != 4 + 4u * 4u * seq_len) {
      throw std::runtime_error("corrupt pretrain dataset");
    }
    PretrainExample ex;
    ex.nsp_label = static_cast<int32_t>(r.u32());
    ex.input.token_ids = r.i32_array(seq_len);
    ex.input.segment_ids = r.i32_array(seq_len);
    ex.input.attention_mask = r.i32_array(seq_len);
    ex.mlm_labels = r.i32_array(seq_len);
    examples.push_back(std::move(ex));
  }
  if (!r.at_end()) throw std::runtime_error("corrupt pretrain dataset");
  return examples;
}

void save_pretrain_dataset(const std::vector<PretrainExample>& examples,
                           const std::filesystem::path& path) {
  atomic_write_file(path, pretrain_dataset_to_bytes(examples));
}

std::vector<PretrainExample> load_pretrain_dataset(const std::filesystem::path& path) {
  return pretrain_dataset_from_bytes(read_file(path));
}

}  // namespace tunlm
