// SPDX-License-Identifier: Apache-2.0
#include "tunlm/tunlm.h"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>

#include "corpus.hpp"
#include "datasets.hpp"
#include "eval.hpp"
#include "pretrain_data.hpp"
#include "run_config.hpp"
#include "tokenizer.hpp"
#include "trainer.hpp"
#include "util/bytes.hpp"

namespace {

using nlohmann::json;

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <class F>
tunlm_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return TUNLM_OK;
  } catch (const std::invalid_argument& e) {
    g_last_error = e.what();
    return TUNLM_ERR_INVALID_ARGUMENT;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    const std::string_view what = g_last_error;
    if (what.find("cannot open") != std::string_view::npos ||
        what.find("failed writing") != std::string_view::npos ||
        what.find("failed reading") != std::string_view::npos) {
      return TUNLM_ERR_IO;
    }
    return TUNLM_ERR_RUNTIME;
  }
}

const char* require(const char* value, const char* name) {
  if (value == nullptr || value[0] == '\0') {
    throw std::invalid_argument(std::string(name) + " is required");
  }
  return value;
}

void require_ptr(const void* ptr, const char* name) {
  if (ptr == nullptr) throw std::invalid_argument(std::string(name) + " is required");
}

std::string stats_json(const tunlm::CorpusStats& stats) {
  json j;
  j["sentence_count"] = stats.sentence_count;
  j["word_count"] = stats.word_count;
  j["unique_word_count"] = stats.unique_word_count;
  return j.dump();
}

std::vector<tunlm::RawDocument> read_documents(const std::string& input,
                                               const std::string& format) {
  namespace fs = std::filesystem;
  if (format == "jsonl") return tunlm::load_jsonl_documents(input);
  // Plain text: a directory holds one document per .txt file, a single file
  // is one document.
  std::vector<tunlm::RawDocument> docs;
  if (fs::is_directory(input)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(input)) {
      if (entry.is_regular_file() && entry.path().extension() == ".txt") {
        files.push_back(entry.path());
      }
    }
    std::sort(files.begin(), files.end());
    for (const fs::path& file : files) {
      docs.push_back({file.filename().string(), tunlm::read_file(file)});
    }
  } else {
    docs.push_back({fs::path(input).filename().string(), tunlm::read_file(input)});
  }
  return docs;
}

tunlm::Task parse_task(const std::string& task) {
  if (task == "classification") return tunlm::Task::kClassification;
  if (task == "qa") return tunlm::Task::kQa;
  throw std::invalid_argument("task must be 'classification' or 'qa'");
}

// Auto step count for fine-tuning: about three epochs over the training set.
int64_t resolve_finetune_steps(int64_t configured, size_t train_size, int32_t batch_size) {
  if (configured > 0) return configured;
  const auto steps_per_epoch =
      (static_cast<int64_t>(train_size) + batch_size - 1) / batch_size;
  return 3 * std::max<int64_t>(steps_per_epoch, 1);
}

struct LogFile {
  std::ofstream stream;
  std::ostream* get(const char* path) {
    if (path == nullptr || path[0] == '\0') return nullptr;
    stream.open(path, std::ios::trunc);
    if (!stream) throw std::runtime_error(std::string("cannot open file for writing: ") + path);
    return &stream;
  }
};

json finetune_report(const tunlm::Checkpoint& best) {
  json j;
  j["best_step"] = best.step;
  json history = json::array();
  for (const tunlm::MetricRecord& rec : best.history) {
    history.push_back({{"step", rec.step}, {"metric", rec.name}, {"value", rec.value}});
  }
  j["dev_history"] = history;
  if (!best.history.empty()) {
    j["best_metric"] = best.history.back().value;
    j["metric_name"] = best.history.back().name;
  }
  return j;
}

}  // namespace

extern "C" {

const char* tunlm_version(void) { return "0.1.0"; }

const char* tunlm_last_error(void) { return g_last_error.c_str(); }

void tunlm_free(void* ptr) { std::free(ptr); }

tunlm_status tunlm_prepare_corpus(const char* input_path, const char* config_path,
                                  const char* overrides_json, const char* corpus_out,
                                  char** stats_json_out) {
  return guarded([&] {
    require(input_path, "input_path");
    require(corpus_out, "corpus_out");
    const tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::RunConfig{}, config_path, overrides_json);
    const tunlm::Corpus corpus =
        tunlm::build_corpus(read_documents(input_path, config.corpus_format));
    tunlm::save_corpus(corpus, corpus_out);
    if (stats_json_out != nullptr) {
      *stats_json_out = dup_string(stats_json(tunlm::corpus_stats(corpus)));
    }
  });
}

tunlm_status tunlm_corpus_stats(const char* corpus_path, char** stats_json_out) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require_ptr(stats_json_out, "stats_json_out");
    const tunlm::Corpus corpus = tunlm::load_corpus(corpus_path);
    *stats_json_out = dup_string(stats_json(tunlm::corpus_stats(corpus)));
  });
}

tunlm_status tunlm_vocab_train(const char* corpus_path, const char* config_path,
                               const char* overrides_json, const char* vocab_out) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(vocab_out, "vocab_out");
    const tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::RunConfig{}, config_path, overrides_json);
    const tunlm::Corpus corpus = tunlm::load_corpus(corpus_path);
    const tunlm::Vocab vocab =
        tunlm::train_wordpiece(corpus, config.vocab_size, config.min_frequency);
    tunlm::save_vocab(vocab, vocab_out);
  });
}

tunlm_status tunlm_vocab_open(const char* vocab_path, tunlm_vocab** out) {
  return guarded([&] {
    require(vocab_path, "vocab_path");
    require_ptr(out, "out");
    auto vocab = std::make_unique<tunlm::Vocab>(tunlm::load_vocab(vocab_path));
    *out = reinterpret_cast<tunlm_vocab*>(vocab.release());
  });
}

void tunlm_vocab_close(tunlm_vocab* vocab) {
  delete reinterpret_cast<tunlm::Vocab*>(vocab);
}

int32_t tunlm_vocab_size(const tunlm_vocab* vocab) {
  return vocab == nullptr ? 0 : reinterpret_cast<const tunlm::Vocab*>(vocab)->size();
}

tunlm_status tunlm_encode(const tunlm_vocab* vocab, const char* text, int32_t** ids_out,
                          size_t* count_out) {
  return guarded([&] {
    if (vocab == nullptr) throw std::invalid_argument("vocab is required");
    require_ptr(ids_out, "ids_out");
    require_ptr(count_out, "count_out");
    const std::vector<int32_t> ids =
        tunlm::encode(text == nullptr ? "" : text, *reinterpret_cast<const tunlm::Vocab*>(vocab));
    auto* buffer = static_cast<int32_t*>(std::malloc(std::max<size_t>(ids.size(), 1) * 4));
    std::copy(ids.begin(), ids.end(), buffer);
    *ids_out = buffer;
    *count_out = ids.size();
  });
}

tunlm_status tunlm_decode(const tunlm_vocab* vocab, const int32_t* ids, size_t count,
                          char** text_out) {
  return guarded([&] {
    if (vocab == nullptr) throw std::invalid_argument("vocab is required");
    require_ptr(text_out, "text_out");
    const std::string text =
        tunlm::decode(std::span<const int32_t>(ids, count),
                      *reinterpret_cast<const tunlm::Vocab*>(vocab));
    *text_out = dup_string(text);
  });
}

tunlm_status tunlm_build_pretrain(const char* corpus_path, const char* vocab_path,
                                  const char* config_path, const char* overrides_json,
                                  const char* dataset_out) {
  return guarded([&] {
    require(corpus_path, "corpus_path");
    require(vocab_path, "vocab_path");
    require(dataset_out, "dataset_out");
    const tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::RunConfig{}, config_path, overrides_json);
    const tunlm::Corpus corpus = tunlm::load_corpus(corpus_path);
    const tunlm::Vocab vocab = tunlm::load_vocab(vocab_path);
    tunlm::MaskingPolicy policy;
    policy.mask_prob = config.mask_prob;
    policy.mode = config.mask_mode;
    policy.seed = config.train.seed;
    const std::vector<tunlm::PretrainExample> dataset = tunlm::build_pretrain_dataset(
        corpus, vocab, policy, config.train.max_seq_len, config.next_ratio, config.train.seed);
    tunlm::save_pretrain_dataset(dataset, dataset_out);
  });
}

tunlm_status tunlm_pretrain(const char* dataset_path, const char* config_path,
                            const char* overrides_json, const char* checkpoint_out,
                            const char* log_path) {
  return guarded([&] {
    require(dataset_path, "dataset_path");
    require(checkpoint_out, "checkpoint_out");
    const tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::RunConfig{}, config_path, overrides_json);
    const std::vector<tunlm::PretrainExample> dataset =
        tunlm::load_pretrain_dataset(dataset_path);
    LogFile log;
    const tunlm::Checkpoint ckpt =
        tunlm::pretrain(dataset, config.model, config.train, log.get(log_path));
    tunlm::save_checkpoint(ckpt, checkpoint_out);
  });
}

tunlm_status tunlm_finetune(const char* checkpoint_path, const char* task,
                            const char* train_path, const char* dev_path,
                            const char* vocab_path, const char* config_path,
                            const char* overrides_json, const char* checkpoint_out,
                            char** report_json_out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(train_path, "train_path");
    require(vocab_path, "vocab_path");
    require(checkpoint_out, "checkpoint_out");
    tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::finetune_defaults(), config_path, overrides_json);
    const tunlm::Checkpoint start = tunlm::load_checkpoint(checkpoint_path);
    const tunlm::Vocab vocab = tunlm::load_vocab(vocab_path);
    const tunlm::Task task_id = parse_task(require(task, "task"));
    LogFile log;
    std::ostream* log_stream = log.get(nullptr);

    tunlm::Checkpoint best;
    if (task_id == tunlm::Task::kClassification) {
      tunlm::ClassificationDataset train_set =
          tunlm::load_classification_dataset(train_path, config.label_set);
      tunlm::ClassificationDataset dev_set;
      dev_set.label_set = config.label_set;
      if (dev_path != nullptr && dev_path[0] != '\0') {
        dev_set = tunlm::load_classification_dataset(dev_path, config.label_set);
      } else {
        auto [train_part, dev_part] = tunlm::split_dataset(
            train_set.examples, config.split_fraction, config.train.seed);
        train_set.examples = std::move(train_part);
        dev_set.examples = std::move(dev_part);
      }
      config.train.total_steps = resolve_finetune_steps(
          config.train.total_steps, train_set.examples.size(), config.train.batch_size);
      best = tunlm::finetune_classification(start, train_set, dev_set, vocab, config.train,
                                            log_stream);
    } else {
      tunlm::QaDataset train_set = tunlm::load_qa_dataset(train_path);
      tunlm::QaDataset dev_set;
      if (dev_path != nullptr && dev_path[0] != '\0') {
        dev_set = tunlm::load_qa_dataset(dev_path);
      } else {
        auto [train_part, dev_part] = tunlm::split_dataset(
            train_set.examples, config.split_fraction, config.train.seed);
        train_set.examples = std::move(train_part);
        dev_set.examples = std::move(dev_part);
      }
      config.train.total_steps = resolve_finetune_steps(
          config.train.total_steps, train_set.examples.size(), config.train.batch_size);
      best = tunlm::finetune_qa(start, train_set, dev_set, vocab, config.train, log_stream,
                                config.max_answer_len);
    }
    tunlm::save_checkpoint(best, checkpoint_out);
    if (report_json_out != nullptr) {
      *report_json_out = dup_string(finetune_report(best).dump());
    }
  });
}

tunlm_status tunlm_transfer(const char* checkpoint_path, const char* task,
                            const char* stages_json, const char* vocab_path,
                            const char* config_path, const char* overrides_json,
                            const char* checkpoint_out, char** report_json_out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(stages_json, "stages_json");
    require(vocab_path, "vocab_path");
    require(checkpoint_out, "checkpoint_out");
    tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::finetune_defaults(), config_path, overrides_json);
    const tunlm::Checkpoint start = tunlm::load_checkpoint(checkpoint_path);
    const tunlm::Vocab vocab = tunlm::load_vocab(vocab_path);
    const tunlm::Task task_id = parse_task(require(task, "task"));

    json stages_doc;
    try {
      stages_doc = json::parse(stages_json);
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("bad stages document: ") + e.what());
    }
    if (!stages_doc.is_array() || stages_doc.empty()) {
      throw std::runtime_error("empty stage list");
    }

    std::vector<double> stage_metrics;
    tunlm::Checkpoint best;
    // Steps auto-resolve per stage; a fixed total_steps applies to each.
    const int64_t configured_steps = config.train.total_steps;
    if (task_id == tunlm::Task::kClassification) {
      std::vector<tunlm::ClassificationStage> stages;
      for (const auto& stage : stages_doc) {
        tunlm::ClassificationStage s;
        s.train = tunlm::load_classification_dataset(stage.at("train").get<std::string>(),
                                                     config.label_set);
        s.dev = tunlm::load_classification_dataset(stage.at("dev").get<std::string>(),
                                                   config.label_set);
        stages.push_back(std::move(s));
      }
      tunlm::Checkpoint current = start;
      for (size_t i = 0; i < stages.size(); ++i) {
        config.train.total_steps = resolve_finetune_steps(
            configured_steps, stages[i].train.examples.size(), config.train.batch_size);
        std::vector<tunlm::ClassificationStage> single = {stages[i]};
        current = tunlm::sequential_transfer(current, single, vocab, config.train, nullptr,
                                             &stage_metrics);
      }
      best = std::move(current);
    } else {
      std::vector<tunlm::QaStage> stages;
      for (const auto& stage : stages_doc) {
        tunlm::QaStage s;
        s.train = tunlm::load_qa_dataset(stage.at("train").get<std::string>());
        s.dev = tunlm::load_qa_dataset(stage.at("dev").get<std::string>());
        stages.push_back(std::move(s));
      }
      tunlm::Checkpoint current = start;
      for (size_t i = 0; i < stages.size(); ++i) {
        config.train.total_steps = resolve_finetune_steps(
            configured_steps, stages[i].train.examples.size(), config.train.batch_size);
        std::vector<tunlm::QaStage> single = {stages[i]};
        current = tunlm::sequential_transfer(current, single, vocab, config.train, nullptr,
                                             &stage_metrics, config.max_answer_len);
      }
      best = std::move(current);
    }
    tunlm::save_checkpoint(best, checkpoint_out);
    if (report_json_out != nullptr) {
      json report = finetune_report(best);
      report["stage_metrics"] = stage_metrics;
      *report_json_out = dup_string(report.dump());
    }
  });
}

tunlm_status tunlm_evaluate(const char* checkpoint_path, const char* task,
                            const char* data_path, const char* vocab_path,
                            const char* config_path, const char* overrides_json,
                            const char* predictions_out, char** report_json_out) {
  return guarded([&] {
    require(checkpoint_path, "checkpoint_path");
    require(data_path, "data_path");
    require(vocab_path, "vocab_path");
    const tunlm::RunConfig config =
        tunlm::make_run_config(tunlm::RunConfig{}, config_path, overrides_json);
    const tunlm::Checkpoint ckpt = tunlm::load_checkpoint(checkpoint_path);
    const tunlm::Vocab vocab = tunlm::load_vocab(vocab_path);
    const tunlm::Task task_id = parse_task(require(task, "task"));

    std::vector<tunlm::Prediction> predictions;
    std::vector<tunlm::Prediction>* predictions_ptr =
        predictions_out != nullptr && predictions_out[0] != '\0' ? &predictions : nullptr;
    tunlm::MetricsReport report;
    if (task_id == tunlm::Task::kClassification) {
      const tunlm::ClassificationDataset dataset =
          tunlm::load_classification_dataset(data_path, config.label_set);
      report = tunlm::evaluate_classification(ckpt, vocab, dataset, predictions_ptr);
    } else {
      const tunlm::QaDataset dataset = tunlm::load_qa_dataset(data_path);
      report = tunlm::evaluate_qa(ckpt, vocab, dataset, config.max_answer_len, predictions_ptr);
    }
    if (predictions_ptr != nullptr) {
      std::string lines;
      for (const tunlm::Prediction& p : predictions) {
        json j;
        j["id"] = p.id;
        j[task_id == tunlm::Task::kClassification ? "label" : "answer"] = p.value;
        lines += j.dump();
        lines += "\n";
      }
      tunlm::atomic_write_file(predictions_out, lines);
    }
    if (report_json_out != nullptr) *report_json_out = dup_string(report.to_json());
  });
}

}  // extern "C"
