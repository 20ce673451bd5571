// SPDX-License-Identifier: Apache-2.0
#include "tokenizer.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>

#include "util/bytes.hpp"
#include "util/unicode.hpp"
#include "util/utf8.hpp"

namespace tunlm {
namespace {

// Words longer than this many codepoints are mapped to UNK outright; greedy
// matching is quadratic in word length.
constexpr size_t kMaxWordCodepoints = 200;

struct WordEntry {
  std::vector<std::string> symbols;  // current segmentation
  int64_t count = 0;
};

std::vector<std::string> split_words(std::string_view sentence) {
  std::vector<std::string> words;
  std::string current;
  size_t i = 0;
  while (i < sentence.size()) {
    const size_t start = i;
    const uint32_t cp = next_codepoint(sentence, i);
    if (is_whitespace_cp(cp)) {
      if (!current.empty()) {
        words.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.append(sentence.substr(start, i - start));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

std::string merge_pair(const std::string& left, const std::string& right) {
  std::string_view tail = right;
  if (tail.substr(0, 2) == Vocab::kContinuation) tail.remove_prefix(2);
  return left + std::string(tail);
}

}  // namespace

const std::vector<std::string>& Vocab::special_tokens() {
  static const std::vector<std::string> specials = {"[PAD]", "[UNK]", "[CLS]",
                                                    "[SEP]", "[MASK]"};
  return specials;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  const auto& specials = special_tokens();
  if (tokens.size() < specials.size()) {
    throw std::runtime_error("vocab must contain the five special tokens");
  }
  for (size_t i = 0; i < specials.size(); ++i) {
    if (tokens[i] != specials[i]) {
      throw std::runtime_error("vocab special tokens must occupy ids 0-4 in fixed order");
    }
  }
  Vocab vocab;
  vocab.tokens = std::move(tokens);
  vocab.id_of.reserve(vocab.tokens.size());
  for (size_t i = 0; i < vocab.tokens.size(); ++i) {
    const std::string& token = vocab.tokens[i];
    if (token.empty()) throw std::runtime_error("vocab token " + std::to_string(i) + " is empty");
    if (!vocab.id_of.emplace(token, static_cast<int32_t>(i)).second) {
      throw std::runtime_error("duplicate vocab token: " + token);
    }
  }
  return vocab;
}

int32_t Vocab::lookup(std::string_view token) const {
  auto it = id_of.find(std::string(token));
  return it == id_of.end() ? -1 : it->second;
}

Vocab train_wordpiece(const Corpus& corpus, int32_t vocab_size, int32_t min_frequency) {
  if (min_frequency < 1) throw std::invalid_argument("min_frequency must be positive");

  // Word frequency table over the whole corpus.
  std::map<std::string, int64_t> word_counts;
  for (const auto& doc : corpus.documents) {
    for (const std::string& sentence : doc) {
      for (std::string& word : split_words(sentence)) word_counts[std::move(word)] += 1;
    }
  }
  if (word_counts.empty()) throw std::runtime_error("empty training corpus");

  // Initial segmentation: first character bare, the rest ##-prefixed.
  std::vector<WordEntry> words;
  words.reserve(word_counts.size());
  std::map<std::string, int64_t> symbol_counts;
  for (const auto& [word, count] : word_counts) {
    WordEntry entry;
    entry.count = count;
    const std::vector<uint32_t> cps = decode_utf8(word);
    for (size_t k = 0; k < cps.size(); ++k) {
      std::string sym = k == 0 ? "" : Vocab::kContinuation;
      append_utf8(sym, cps[k]);
      symbol_counts[sym] += count;
      entry.symbols.push_back(std::move(sym));
    }
    words.push_back(std::move(entry));
  }

  // Alphabet ordered by count descending, then token ascending.
  std::vector<std::pair<std::string, int64_t>> alphabet;
  for (const auto& [sym, count] : symbol_counts) {
    if (count >= min_frequency) alphabet.emplace_back(sym, count);
  }
  std::sort(alphabet.begin(), alphabet.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  std::vector<std::string> tokens = Vocab::special_tokens();
  if (static_cast<int64_t>(tokens.size() + alphabet.size()) > vocab_size) {
    throw std::runtime_error("vocab_size too small: need at least " +
                             std::to_string(tokens.size() + alphabet.size()) +
                             " entries for specials plus the alphabet");
  }
  for (auto& [sym, count] : alphabet) tokens.push_back(std::move(sym));

  Vocab vocab = Vocab::from_tokens(std::move(tokens));

  // Greedy merges until the budget is reached or no pair is frequent enough.
  while (vocab.size() < vocab_size) {
    std::map<std::pair<std::string, std::string>, int64_t> pair_counts;
    for (const WordEntry& entry : words) {
      for (size_t k = 0; k + 1 < entry.symbols.size(); ++k) {
        pair_counts[{entry.symbols[k], entry.symbols[k + 1]}] += entry.count;
      }
    }
    // Both halves of a mergeable pair must themselves be in the vocabulary;
    // characters dropped by min_frequency never take part in merges.
    const std::pair<std::string, std::string>* best = nullptr;
    std::string best_merged;
    int64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count < min_frequency) continue;
      if (vocab.lookup(pair.first) < 0 || vocab.lookup(pair.second) < 0) continue;
      std::string merged = merge_pair(pair.first, pair.second);
      if (best == nullptr || count > best_count ||
          (count == best_count && merged < best_merged)) {
        best = &pair;
        best_merged = std::move(merged);
        best_count = count;
      }
    }
    if (best == nullptr) break;

    const auto [left, right] = *best;
    for (WordEntry& entry : words) {
      auto& syms = entry.symbols;
      for (size_t k = 0; k + 1 < syms.size();) {
        if (syms[k] == left && syms[k + 1] == right) {
          syms[k] = best_merged;
          syms.erase(syms.begin() + static_cast<ptrdiff_t>(k) + 1);
        } else {
          ++k;
        }
      }
    }
    if (vocab.lookup(best_merged) < 0) {
      vocab.id_of.emplace(best_merged, vocab.size());
      vocab.tokens.push_back(best_merged);
    }
  }
  return vocab;
}

std::vector<TokenSpan> encode_with_offsets(std::string_view text, const Vocab& vocab) {
  std::vector<TokenSpan> out;
  const std::vector<uint32_t> cps = decode_utf8(text);

  size_t i = 0;
  while (i < cps.size()) {
    if (is_whitespace_cp(cps[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < cps.size() && !is_whitespace_cp(cps[j])) ++j;

    const size_t word_len = j - i;
    std::vector<TokenSpan> pieces;
    bool ok = word_len <= kMaxWordCodepoints;
    size_t pos = i;
    while (ok && pos < j) {
      int32_t match = -1;
      size_t match_len = 0;
      std::string candidate = pos == i ? "" : Vocab::kContinuation;
      const size_t prefix_len = candidate.size();
      for (size_t k = pos; k < j; ++k) append_utf8(candidate, cps[k]);
      // Longest match first: shrink the candidate one codepoint at a time.
      size_t len = j - pos;
      while (len >= 1) {
        const int32_t id = vocab.lookup(candidate);
        if (id >= 0 && !vocab.is_special(id)) {
          match = id;
          match_len = len;
          break;
        }
        // Drop the trailing codepoint's bytes.
        size_t cut = candidate.size();
        while (cut > prefix_len && (static_cast<uint8_t>(candidate[cut - 1]) & 0xC0) == 0x80) --cut;
        if (cut > prefix_len) --cut;
        candidate.resize(cut);
        --len;
      }
      if (match < 0) {
        ok = false;
        break;
      }
      pieces.push_back({match, static_cast<uint32_t>(pos), static_cast<uint32_t>(pos + match_len)});
      pos += match_len;
    }

    if (ok) {
      out.insert(out.end(), pieces.begin(), pieces.end());
    } else {
      out.push_back({Vocab::kUnk, static_cast<uint32_t>(i), static_cast<uint32_t>(j)});
    }
    i = j;
  }
  return out;
}

std::vector<int32_t> encode(std::string_view text, const Vocab& vocab) {
  std::vector<int32_t> ids;
  for (const TokenSpan& span : encode_with_offsets(text, vocab)) ids.push_back(span.id);
  return ids;
}

std::string decode(std::span<const int32_t> ids, const Vocab& vocab) {
  std::string out;
  for (int32_t id : ids) {
    if (id < 0 || id >= vocab.size()) throw std::runtime_error("unknown token id");
    if (vocab.is_special(id)) continue;
    std::string_view token = vocab.tokens[static_cast<size_t>(id)];
    if (token.substr(0, 2) == Vocab::kContinuation) {
      out += token.substr(2);
    } else {
      if (!out.empty()) out.push_back(' ');
      out += token;
    }
  }
  return out;
}

EncodedInput build_input(std::span<const int32_t> tokens_a,
                         const std::vector<int32_t>* tokens_b,
                         int32_t max_seq_len, const Vocab& vocab) {
  const int32_t num_specials = tokens_b != nullptr ? 3 : 2;
  const int32_t min_len = tokens_b != nullptr ? 5 : 3;
  if (max_seq_len < min_len) {
    throw std::runtime_error("max_seq_len too small: need at least " +
                             std::to_string(min_len));
  }
  for (int32_t id : tokens_a) {
    if (id < 0 || id >= vocab.size()) throw std::runtime_error("unknown token id");
  }
  if (tokens_b != nullptr) {
    for (int32_t id : *tokens_b) {
      if (id < 0 || id >= vocab.size()) throw std::runtime_error("unknown token id");
    }
  }

  std::vector<int32_t> a(tokens_a.begin(), tokens_a.end());
  std::vector<int32_t> b = tokens_b != nullptr ? *tokens_b : std::vector<int32_t>{};
  const size_t budget = static_cast<size_t>(max_seq_len - num_specials);
  while (a.size() + b.size() > budget) {
    if (a.size() > b.size()) {
      a.pop_back();
    } else {
      b.pop_back();
    }
  }

  EncodedInput input;
  input.token_ids.reserve(static_cast<size_t>(max_seq_len));
  input.token_ids.push_back(Vocab::kCls);
  input.token_ids.insert(input.token_ids.end(), a.begin(), a.end());
  input.token_ids.push_back(Vocab::kSep);
  const size_t segment0_len = input.token_ids.size();
  if (tokens_b != nullptr) {
    input.token_ids.insert(input.token_ids.end(), b.begin(), b.end());
    input.token_ids.push_back(Vocab::kSep);
  }
  const size_t unpadded = input.token_ids.size();
  input.token_ids.resize(static_cast<size_t>(max_seq_len), Vocab::kPad);

  input.segment_ids.assign(static_cast<size_t>(max_seq_len), 0);
  for (size_t k = segment0_len; k < unpadded; ++k) input.segment_ids[k] = 1;
  input.attention_mask.assign(static_cast<size_t>(max_seq_len), 0);
  for (size_t k = 0; k < unpadded; ++k) input.attention_mask[k] = 1;
  return input;
}

void save_vocab(const Vocab& vocab, const std::filesystem::path& path) {
  std::string data;
  for (const std::string& token : vocab.tokens) {
    data += token;
    data.push_back('\n');
  }
  atomic_write_file(path, data);
}

Vocab load_vocab(const std::filesystem::path& path) {
  const std::string data = read_file(path);
  std::vector<std::string> tokens;
  size_t pos = 0;
  while (pos < data.size()) {
    size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) nl = data.size();
    tokens.emplace_back(data.substr(pos, nl - pos));
    pos = nl + 1;
  }
  return Vocab::from_tokens(std::move(tokens));
}

}  // namespace tunlm
