// SPDX-License-Identifier: Apache-2.0
//
// Corpus ingestion: sentence segmentation, cleaning (links, emoji,
// punctuation), Arabic-script filtering and corpus statistics.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace tunlm {

struct RawDocument {
  std::string id;
  std::string text;
};

// Cleaned sentences grouped by source document. Documents that end up empty
// after filtering are dropped.
struct Corpus {
  std::vector<std::vector<std::string>> documents;
};

struct CorpusStats {
  uint64_t sentence_count = 0;
  uint64_t word_count = 0;        // whitespace-delimited tokens
  uint64_t unique_word_count = 0; // exact string equality
};

// Removes URL tokens (http://, https://, ftp://, www. prefixes), emoji and
// punctuation codepoints, collapses runs of whitespace and trims. Total and
// idempotent.
std::string clean_text(std::string_view raw);

// True iff the sentence has at least one Arabic letter and no letter of a
// foreign script. Digits, whitespace and unclassified symbols are permitted.
bool filter_arabic(std::string_view sentence);

// Splits on newlines and on sentence-final punctuation followed by
// whitespace or end of text (so dots inside URLs do not split). Delimiters
// are dropped; segments are trimmed; empty segments are omitted.
std::vector<std::string> segment_sentences(std::string_view document_text);

// Full pipeline per document: segment, clean each sentence, keep the ones
// that pass the script filter.
std::vector<std::string> pipeline_document(std::string_view raw_text);

Corpus build_corpus(const std::vector<RawDocument>& docs);

CorpusStats corpus_stats(const Corpus& corpus);

// Corpus file: one sentence per line, documents separated by a blank line.
std::string corpus_to_string(const Corpus& corpus);
Corpus corpus_from_string(std::string_view data);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);
Corpus load_corpus(const std::filesystem::path& path);

// Line-delimited JSON documents with fields `id` and `text`.
std::vector<RawDocument> load_jsonl_documents(const std::filesystem::path& path);

}  // namespace tunlm
