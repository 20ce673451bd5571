// SPDX-License-Identifier: Apache-2.0
#include "corpus.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

#include "util/bytes.hpp"
#include "util/unicode.hpp"
#include "util/utf8.hpp"

namespace tunlm {
namespace {

bool starts_with_ci(const std::vector<uint32_t>& cps, size_t pos, std::string_view prefix) {
  for (size_t k = 0; k < prefix.size(); ++k) {
    if (pos + k >= cps.size()) return false;
    uint32_t cp = cps[pos + k];
    if (cp >= 'A' && cp <= 'Z') cp += 32;
    if (cp != static_cast<uint32_t>(prefix[k])) return false;
  }
  return true;
}

bool is_url_token(const std::vector<uint32_t>& cps, size_t begin) {
  return starts_with_ci(cps, begin, "http://") || starts_with_ci(cps, begin, "https://") ||
         starts_with_ci(cps, begin, "ftp://") || starts_with_ci(cps, begin, "www.");
}

}  // namespace

std::string clean_text(std::string_view raw) {
  const std::vector<uint32_t> cps = decode_utf8(raw);
  std::string out;
  bool pending_space = false;
  size_t i = 0;
  while (i < cps.size()) {
    if (is_whitespace_cp(cps[i])) {
      ++i;
      continue;
    }
    // Whitespace-delimited token [i, j).
    size_t j = i;
    while (j < cps.size() && !is_whitespace_cp(cps[j])) ++j;
    if (!is_url_token(cps, i)) {
      std::string token;
      for (size_t k = i; k < j; ++k) {
        const uint32_t cp = cps[k];
        if (is_emoji_cp(cp) || is_punctuation_cp(cp)) continue;
        append_utf8(token, cp);
      }
      if (!token.empty()) {
        if (pending_space) out.push_back(' ');
        out += token;
        pending_space = true;
      }
    }
    i = j;
  }
  return out;
}

bool filter_arabic(std::string_view sentence) {
  bool has_arabic_letter = false;
  size_t i = 0;
  while (i < sentence.size()) {
    const uint32_t cp = next_codepoint(sentence, i);
    if (is_arabic_letter_cp(cp)) {
      has_arabic_letter = true;
    } else if (is_foreign_letter_cp(cp)) {
      return false;
    }
  }
  return has_arabic_letter;
}

std::vector<std::string> segment_sentences(std::string_view document_text) {
  const std::vector<uint32_t> cps = decode_utf8(document_text);
  std::vector<std::string> sentences;
  std::vector<uint32_t> current;

  const auto flush = [&] {
    size_t b = 0, e = current.size();
    while (b < e && is_whitespace_cp(current[b])) ++b;
    while (e > b && is_whitespace_cp(current[e - 1])) --e;
    if (e > b) sentences.push_back(encode_utf8({current.begin() + b, current.begin() + e}));
    current.clear();
  };

  for (size_t i = 0; i < cps.size(); ++i) {
    const uint32_t cp = cps[i];
    if (cp == '\n') {
      flush();
      continue;
    }
    if (is_sentence_terminal_cp(cp)) {
      // Split only when the terminator run ends before whitespace or the end
      // of the text, so URLs and abbreviations stay intact.
      size_t j = i;
      while (j + 1 < cps.size() && is_sentence_terminal_cp(cps[j + 1])) ++j;
      if (j + 1 >= cps.size() || is_whitespace_cp(cps[j + 1]) || cps[j + 1] == '\n') {
        flush();
        i = j;
        continue;
      }
    }
    current.push_back(cp);
  }
  flush();
  return sentences;
}

std::vector<std::string> pipeline_document(std::string_view raw_text) {
  std::vector<std::string> kept;
  for (const std::string& segment : segment_sentences(raw_text)) {
    std::string cleaned = clean_text(segment);
    if (cleaned.empty()) continue;
    if (!filter_arabic(cleaned)) continue;
    kept.push_back(std::move(cleaned));
  }
  return kept;
}

Corpus build_corpus(const std::vector<RawDocument>& docs) {
  Corpus corpus;
  for (const RawDocument& doc : docs) {
    std::vector<std::string> sentences = pipeline_document(doc.text);
    if (!sentences.empty()) corpus.documents.push_back(std::move(sentences));
  }
  return corpus;
}

CorpusStats corpus_stats(const Corpus& corpus) {
  CorpusStats stats;
  std::unordered_set<std::string> unique;
  for (const auto& doc : corpus.documents) {
    for (const std::string& sentence : doc) {
      ++stats.sentence_count;
      std::istringstream words(sentence);
      std::string word;
      while (words >> word) {
        ++stats.word_count;
        unique.insert(word);
      }
    }
  }
  stats.unique_word_count = unique.size();
  return stats;
}

std::string corpus_to_string(const Corpus& corpus) {
  std::string out;
  for (size_t d = 0; d < corpus.documents.size(); ++d) {
    if (d > 0) out.push_back('\n');
    for (const std::string& sentence : corpus.documents[d]) {
      out += sentence;
      out.push_back('\n');
    }
  }
  return out;
}

Corpus corpus_from_string(std::string_view data) {
  Corpus corpus;
  std::vector<std::string> doc;
  size_t pos = 0;
  while (pos <= data.size()) {
    size_t nl = data.find('\n', pos);
    if (nl == std::string_view::npos) nl = data.size();
    std::string_view line = data.substr(pos, nl - pos);
    if (line.empty()) {
      if (!doc.empty()) {
        corpus.documents.push_back(std::move(doc));
        doc.clear();
      }
    } else {
      doc.emplace_back(line);
    }
    if (nl == data.size()) break;
    pos = nl + 1;
  }
  if (!doc.empty()) corpus.documents.push_back(std::move(doc));
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  atomic_write_file(path, corpus_to_string(corpus));
}

Corpus load_corpus(const std::filesystem::path& path) {
  return corpus_from_string(read_file(path));
}

std::vector<RawDocument> load_jsonl_documents(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::vector<RawDocument> docs;
  std::unordered_set<std::string> seen_ids;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json record;
    try {
      record = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("bad document record at line " + std::to_string(line_no) +
                               ": " + e.what());
    }
    if (!record.contains("id") || !record.contains("text")) {
      throw std::runtime_error("document record at line " + std::to_string(line_no) +
                               " must have fields 'id' and 'text'");
    }
    RawDocument doc{record["id"].is_string() ? record["id"].get<std::string>()
                                             : record["id"].dump(),
                    record["text"].get<std::string>()};
    if (!seen_ids.insert(doc.id).second) {
      throw std::runtime_error("duplicate document id: " + doc.id);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace tunlm
