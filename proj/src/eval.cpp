// SPDX-License-Identifier: Apache-2.0
#include "eval.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "util/unicode.hpp"
#include "util/utf8.hpp"

namespace tunlm {
namespace {

std::vector<std::string> whitespace_tokens(std::string_view text) {
  std::vector<std::string> tokens;
  std::istringstream stream{std::string(text)};
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

std::unordered_map<std::string, int64_t> token_bag(const std::vector<std::string>& tokens) {
  std::unordered_map<std::string, int64_t> bag;
  for (const std::string& t : tokens) ++bag[t];
  return bag;
}

struct BagScores {
  double em, f1, recall;
};

BagScores bag_scores(std::string_view pred, std::string_view gold) {
  const std::string p = normalize_answer(pred);
  const std::string g = normalize_answer(gold);
  if (p.empty() || g.empty()) {
    const double match = p.empty() && g.empty() ? 1.0 : 0.0;
    return {match, match, match};
  }
  const auto p_tokens = whitespace_tokens(p);
  const auto g_tokens = whitespace_tokens(g);
  const auto g_bag = token_bag(g_tokens);
  int64_t common = 0;
  {
    auto remaining = g_bag;
    for (const std::string& t : p_tokens) {
      auto it = remaining.find(t);
      if (it != remaining.end() && it->second > 0) {
        --it->second;
        ++common;
      }
    }
  }
  BagScores s{};
  s.em = p == g ? 1.0 : 0.0;
  s.recall = static_cast<double>(common) / static_cast<double>(g_tokens.size());
  if (common == 0) {
    s.f1 = 0.0;
  } else {
    const double precision = static_cast<double>(common) / static_cast<double>(p_tokens.size());
    s.f1 = 2.0 * precision * s.recall / (precision + s.recall);
  }
  return s;
}

template <class F>
double max_over_golds(std::string_view pred, std::span<const std::string> golds, F&& score) {
  double best = 0.0;
  for (const std::string& gold : golds) best = std::max(best, score(pred, gold));
  return best;
}

uint64_t fnv1a(std::string_view data) {
  uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

double accuracy(const ClassificationResult& result) {
  if (result.gold.empty() || result.gold.size() != result.predicted.size()) {
    throw std::invalid_argument("empty or mismatched classification result");
  }
  int64_t correct = 0;
  for (size_t i = 0; i < result.gold.size(); ++i) {
    if (result.gold[i] == result.predicted[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(result.gold.size());
}

double macro_f1(const ClassificationResult& result) {
  if (result.gold.empty() || result.gold.size() != result.predicted.size()) {
    throw std::invalid_argument("empty or mismatched classification result");
  }
  if (result.label_set.empty()) throw std::invalid_argument("empty label set");
  double sum = 0.0;
  for (size_t c = 0; c < result.label_set.size(); ++c) {
    const auto label = static_cast<int32_t>(c);
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < result.gold.size(); ++i) {
      const bool is_gold = result.gold[i] == label;
      const bool is_pred = result.predicted[i] == label;
      if (is_gold && is_pred) ++tp;
      if (!is_gold && is_pred) ++fp;
      if (is_gold && !is_pred) ++fn;
    }
    // F1 = 2P R / (P + R), defined as 0 when P + R = 0.
    const double denom = static_cast<double>(2 * tp + fp + fn);
    sum += denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
  }
  return sum / static_cast<double>(result.label_set.size());
}

std::string normalize_answer(std::string_view text) {
  // Drop punctuation and diacritics first, then strip article prefixes per
  // word and collapse whitespace.
  std::vector<uint32_t> kept;
  for (uint32_t cp : decode_utf8(text)) {
    if (is_punctuation_cp(cp) || is_arabic_diacritic_cp(cp)) continue;
    kept.push_back(cp);
  }
  std::string out;
  size_t i = 0;
  const size_t n = kept.size();
  while (i < n) {
    if (is_whitespace_cp(kept[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < n && !is_whitespace_cp(kept[j])) ++j;
    // Strip every leading definite-article "ال" so the result is idempotent.
    size_t b = i;
    while (j - b >= 2 && kept[b] == 0x0627 /* ا */ && kept[b + 1] == 0x0644 /* ل */) b += 2;
    if (b < j) {
      if (!out.empty()) out.push_back(' ');
      for (size_t k = b; k < j; ++k) append_utf8(out, kept[k]);
    }
    i = j;
  }
  return out;
}

double exact_match(std::string_view pred, std::span<const std::string> golds) {
  if (golds.empty()) throw std::invalid_argument("golds must be nonempty");
  return max_over_golds(pred, golds,
                        [](std::string_view p, std::string_view g) { return bag_scores(p, g).em; });
}

double token_f1(std::string_view pred, std::span<const std::string> golds) {
  if (golds.empty()) throw std::invalid_argument("golds must be nonempty");
  return max_over_golds(pred, golds,
                        [](std::string_view p, std::string_view g) { return bag_scores(p, g).f1; });
}

double token_recall(std::string_view pred, std::span<const std::string> golds) {
  if (golds.empty()) throw std::invalid_argument("golds must be nonempty");
  return max_over_golds(pred, golds, [](std::string_view p, std::string_view g) {
    return bag_scores(p, g).recall;
  });
}

std::pair<int32_t, int32_t> qa_span_decode(std::span<const double> start_logits,
                                           std::span<const double> end_logits,
                                           int32_t context_begin, int32_t context_end,
                                           int32_t max_answer_len) {
  if (start_logits.size() != end_logits.size()) {
    throw std::invalid_argument("start/end logits must have equal length");
  }
  const auto seq_len = static_cast<int32_t>(start_logits.size());
  context_begin = std::max(context_begin, 0);
  context_end = std::min(context_end, seq_len);
  bool found = false;
  double best_score = 0.0;
  std::pair<int32_t, int32_t> best{0, 0};
  for (int32_t s = context_begin; s < context_end; ++s) {
    const int32_t last = std::min(context_end - 1, s + max_answer_len - 1);
    for (int32_t e = s; e <= last; ++e) {
      const double score = start_logits[static_cast<size_t>(s)] + end_logits[static_cast<size_t>(e)];
      if (!found || score > best_score) {
        found = true;
        best_score = score;
        best = {s, e};
      }
    }
  }
  if (!found) throw std::runtime_error("no valid span");
  return best;
}

double MetricsReport::metric(const std::string& name) const {
  for (const auto& [key, value] : metrics) {
    if (key == name) return value;
  }
  throw std::out_of_range("no metric named " + name);
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["example_count"] = example_count;
  j["config_hash"] = config_hash;
  nlohmann::json m = nlohmann::json::object();
  for (const auto& [key, value] : metrics) m[key] = value;
  j["metrics"] = m;
  return j.dump();
}

std::string MetricsReport::to_table() const {
  std::ostringstream out;
  out << "task: " << task << "  examples: " << example_count << "  config: " << config_hash
      << "\n";
  for (const auto& [key, value] : metrics) {
    out << "  " << key << ": " << value << "\n";
  }
  return out.str();
}

QaFeature build_qa_feature(const QaExample& example, const Vocab& vocab, int32_t max_seq_len) {
  if (max_seq_len < 5) throw std::runtime_error("max_seq_len too small: need at least 5");
  std::vector<int32_t> question_ids = encode(example.question, vocab);
  // Keep at least one context token; an oversized question is truncated.
  const auto max_question = static_cast<size_t>(max_seq_len - 4);
  if (question_ids.size() > max_question) question_ids.resize(max_question);

  QaFeature feature;
  feature.context_pieces = encode_with_offsets(example.context, vocab);
  const size_t context_budget =
      static_cast<size_t>(max_seq_len) - 3 - question_ids.size();
  if (feature.context_pieces.size() > context_budget) {
    feature.context_pieces.resize(context_budget);
  }

  auto& ids = feature.input.token_ids;
  ids.push_back(Vocab::kCls);
  ids.insert(ids.end(), question_ids.begin(), question_ids.end());
  ids.push_back(Vocab::kSep);
  feature.context_begin = static_cast<int32_t>(ids.size());
  for (const TokenSpan& piece : feature.context_pieces) ids.push_back(piece.id);
  feature.context_end = static_cast<int32_t>(ids.size());
  ids.push_back(Vocab::kSep);

  const size_t unpadded = ids.size();
  ids.resize(static_cast<size_t>(max_seq_len), Vocab::kPad);
  feature.input.segment_ids.assign(static_cast<size_t>(max_seq_len), 0);
  for (size_t k = static_cast<size_t>(feature.context_begin); k < unpadded; ++k) {
    feature.input.segment_ids[k] = 1;
  }
  feature.input.attention_mask.assign(static_cast<size_t>(max_seq_len), 0);
  for (size_t k = 0; k < unpadded; ++k) feature.input.attention_mask[k] = 1;

  // Align the first gold answer to token positions for training targets.
  const QaAnswer& gold = example.answers.front();
  const auto begin_cp = static_cast<uint32_t>(gold.answer_start);
  const auto end_cp =
      begin_cp + static_cast<uint32_t>(decode_utf8(gold.text).size());  // exclusive
  if (end_cp > begin_cp) {
    int32_t start_piece = -1, end_piece = -1;
    for (size_t p = 0; p < feature.context_pieces.size(); ++p) {
      const TokenSpan& piece = feature.context_pieces[p];
      if (start_piece < 0 && begin_cp >= piece.begin_cp && begin_cp < piece.end_cp) {
        start_piece = static_cast<int32_t>(p);
      }
      if (end_cp - 1 >= piece.begin_cp && end_cp - 1 < piece.end_cp) {
        end_piece = static_cast<int32_t>(p);
      }
    }
    if (start_piece >= 0 && end_piece >= start_piece) {
      feature.gold_start = feature.context_begin + start_piece;
      feature.gold_end = feature.context_begin + end_piece;
    }
  }
  return feature;
}

std::vector<int32_t> predict_classification(const ModelConfig& config,
                                            const Parameters<float>& params,
                                            const std::vector<EncodedInput>& inputs,
                                            int32_t batch_size) {
  std::vector<int32_t> predicted;
  predicted.reserve(inputs.size());
  for (size_t begin = 0; begin < inputs.size(); begin += static_cast<size_t>(batch_size)) {
    Batch batch;
    const size_t end = std::min(inputs.size(), begin + static_cast<size_t>(batch_size));
    for (size_t i = begin; i < end; ++i) batch.add_input(inputs[i]);
    const ForwardOutput<float> out =
        forward(config, params, batch, Task::kClassification, nullptr, nullptr);
    for (Eigen::Index b = 0; b < out.cls_logits.rows(); ++b) {
      Eigen::Index best = 0;
      out.cls_logits.row(b).maxCoeff(&best);
      predicted.push_back(static_cast<int32_t>(best));
    }
  }
  return predicted;
}

MetricsReport evaluate_classification(const Checkpoint& ckpt, const Vocab& vocab,
                                      const ClassificationDataset& dataset,
                                      std::vector<Prediction>* predictions) {
  if (dataset.examples.empty()) throw std::runtime_error("empty evaluation dataset");
  std::vector<EncodedInput> inputs;
  inputs.reserve(dataset.examples.size());
  ClassificationResult result;
  result.label_set = dataset.label_set;
  for (const ClassificationExample& example : dataset.examples) {
    const std::vector<int32_t> ids = encode(example.text, vocab);
    inputs.push_back(build_input(ids, nullptr, ckpt.train.max_seq_len, vocab));
    result.gold.push_back(example.label);
  }
  result.predicted = predict_classification(ckpt.model, ckpt.params, inputs, 32);

  if (predictions != nullptr) {
    for (size_t i = 0; i < dataset.examples.size(); ++i) {
      predictions->push_back({std::to_string(i),
                              dataset.label_set[static_cast<size_t>(result.predicted[i])]});
    }
  }
  MetricsReport report;
  report.task = "classification";
  report.example_count = static_cast<int64_t>(dataset.examples.size());
  report.config_hash = config_hash(ckpt.model);
  report.metrics = {{"accuracy", accuracy(result)}, {"macro_f1", macro_f1(result)}};
  return report;
}

namespace {

std::string context_substring(const QaFeature& feature, const std::string& context,
                              int32_t start, int32_t end) {
  const int32_t first = start - feature.context_begin;
  const int32_t last = end - feature.context_begin;
  const std::vector<uint32_t> cps = decode_utf8(context);
  const uint32_t begin_cp = feature.context_pieces[static_cast<size_t>(first)].begin_cp;
  const uint32_t end_cp = feature.context_pieces[static_cast<size_t>(last)].end_cp;
  std::string out;
  for (uint32_t k = begin_cp; k < end_cp && k < cps.size(); ++k) append_utf8(out, cps[k]);
  return out;
}

struct QaScores {
  double em = 0.0, f1 = 0.0, recall = 0.0;
};

QaScores score_qa_example(const QaExample& example, const std::string& answer) {
  std::vector<std::string> golds;
  for (const QaAnswer& gold : example.answers) golds.push_back(gold.text);
  QaScores s;
  s.em = exact_match(answer, golds);
  s.f1 = token_f1(answer, golds);
  s.recall = token_recall(answer, golds);
  return s;
}

std::string predict_qa_answer(const ModelConfig& config, const Parameters<float>& params,
                              const QaFeature& feature, const QaExample& example,
                              int32_t max_answer_len) {
  if (feature.context_pieces.empty()) return "";
  Batch batch;
  batch.add_input(feature.input);
  const ForwardOutput<float> out = forward(config, params, batch, Task::kQa, nullptr, nullptr);
  std::vector<double> start_logits(static_cast<size_t>(batch.seq_len));
  std::vector<double> end_logits(static_cast<size_t>(batch.seq_len));
  for (int32_t s = 0; s < batch.seq_len; ++s) {
    start_logits[static_cast<size_t>(s)] = out.qa_start_logits(0, s);
    end_logits[static_cast<size_t>(s)] = out.qa_end_logits(0, s);
  }
  const auto [start, end] = qa_span_decode(start_logits, end_logits, feature.context_begin,
                                           feature.context_end, max_answer_len);
  return context_substring(feature, example.context, start, end);
}

}  // namespace

MetricsReport evaluate_qa(const Checkpoint& ckpt, const Vocab& vocab, const QaDataset& dataset,
                          int32_t max_answer_len, std::vector<Prediction>* predictions) {
  if (dataset.examples.empty()) throw std::runtime_error("empty evaluation dataset");
  double em_sum = 0.0, f1_sum = 0.0, recall_sum = 0.0;
  for (const QaExample& example : dataset.examples) {
    const QaFeature feature = build_qa_feature(example, vocab, ckpt.train.max_seq_len);
    const std::string answer =
        predict_qa_answer(ckpt.model, ckpt.params, feature, example, max_answer_len);
    const QaScores s = score_qa_example(example, answer);
    em_sum += s.em;
    f1_sum += s.f1;
    recall_sum += s.recall;
    if (predictions != nullptr) predictions->push_back({example.id, answer});
  }
  const auto n = static_cast<double>(dataset.examples.size());
  MetricsReport report;
  report.task = "qa";
  report.example_count = static_cast<int64_t>(dataset.examples.size());
  report.config_hash = config_hash(ckpt.model);
  report.metrics = {{"exact_match", em_sum / n},
                    {"token_f1", f1_sum / n},
                    {"token_recall", recall_sum / n}};
  return report;
}

double qa_dev_token_f1(const ModelConfig& config, const Parameters<float>& params,
                       const Vocab& vocab, const QaDataset& dataset, int32_t max_seq_len,
                       int32_t max_answer_len) {
  if (dataset.examples.empty()) throw std::runtime_error("empty evaluation dataset");
  double f1_sum = 0.0;
  for (const QaExample& example : dataset.examples) {
    const QaFeature feature = build_qa_feature(example, vocab, max_seq_len);
    const std::string answer =
        predict_qa_answer(config, params, feature, example, max_answer_len);
    std::vector<std::string> golds;
    for (const QaAnswer& gold : example.answers) golds.push_back(gold.text);
    f1_sum += token_f1(answer, golds);
  }
  return f1_sum / static_cast<double>(dataset.examples.size());
}

std::string config_hash(const ModelConfig& c) {
  std::ostringstream key;
  key << c.num_layers << '/' << c.hidden_size << '/' << c.num_heads << '/'
      << c.intermediate_size << '/' << c.vocab_size << '/' << c.max_positions << '/'
      << c.num_segments << '/' << c.dropout_prob;
  std::ostringstream out;
  out << std::hex << fnv1a(key.str());
  return out.str();
}

}  // namespace tunlm
