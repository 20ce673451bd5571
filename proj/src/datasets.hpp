// SPDX-License-Identifier: Apache-2.0
//
// Task dataset loaders: line-delimited {text, label} records for
// classification, SQuAD-layout JSON for span-extraction QA, and the
// deterministic 80/20 splitter for datasets that ship without splits.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "util/rng.hpp"

namespace tunlm {

struct ClassificationExample {
  std::string text;
  int32_t label = 0;  // index into the label set
};

struct ClassificationDataset {
  std::vector<ClassificationExample> examples;
  std::vector<std::string> label_set;
};

struct QaAnswer {
  std::string text;
  int32_t answer_start = 0;  // codepoint offset into the context
};

struct QaExample {
  std::string id;
  std::string question;
  std::string context;
  std::vector<QaAnswer> answers;  // at least one
};

struct QaDataset {
  std::vector<QaExample> examples;
  int64_t document_count = 0;
  int64_t paragraph_count = 0;
};

// Rejects rather than repairs: unknown labels and malformed records raise an
// error naming the offending line.
ClassificationDataset load_classification_dataset(const std::filesystem::path& path,
                                                  const std::vector<std::string>& label_set);

// SQuAD layout: data -> paragraphs {context} -> qas {question, id, answers:
// [{text, answer_start}]}. Every answer must occur in the context at its
// declared codepoint offset; mismatches raise an error naming the qa id.
QaDataset load_qa_dataset(const std::filesystem::path& path);

// Deterministic shuffled split with |train| = round(train_frac * N).
template <class E>
std::pair<std::vector<E>, std::vector<E>> split_dataset(const std::vector<E>& examples,
                                                        double train_frac, uint64_t seed) {
  if (examples.size() < 2) {
    throw std::runtime_error("split requires at least 2 examples");
  }
  if (train_frac <= 0.0 || train_frac >= 1.0) {
    throw std::invalid_argument("train_frac must lie in (0, 1)");
  }
  std::vector<size_t> order(examples.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  for (size_t i = order.size() - 1; i > 0; --i) {
    const size_t j = rng.uniform_u32(static_cast<uint32_t>(i + 1));
    std::swap(order[i], order[j]);
  }
  const auto train_size = static_cast<size_t>(
      std::llround(train_frac * static_cast<double>(examples.size())));
  std::pair<std::vector<E>, std::vector<E>> out;
  for (size_t i = 0; i < order.size(); ++i) {
    (i < train_size ? out.first : out.second).push_back(examples[order[i]]);
  }
  return out;
}

}  // namespace tunlm
