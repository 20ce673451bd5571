// SPDX-License-Identifier: Apache-2.0
#include "run_config.hpp"

#include <fstream>

namespace tunlm {
namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& section, const std::string& key) {
  throw std::runtime_error("unknown config key: " + (section.empty() ? key : section + "." + key));
}

template <class T>
T as(const json& value, const std::string& section, const std::string& key) {
  try {
    return value.get<T>();
  } catch (const json::exception&) {
    throw std::runtime_error("bad value for config key " + section + "." + key);
  }
}

void apply_corpus(RunConfig& c, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (key == "format") {
      c.corpus_format = as<std::string>(value, "corpus", key);
      if (c.corpus_format != "jsonl" && c.corpus_format != "text") {
        throw std::runtime_error("corpus.format must be 'jsonl' or 'text'");
      }
    } else {
      unknown_key("corpus", key);
    }
  }
}

void apply_tokenizer(RunConfig& c, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (key == "vocab_size") {
      c.vocab_size = as<int32_t>(value, "tokenizer", key);
    } else if (key == "min_frequency") {
      c.min_frequency = as<int32_t>(value, "tokenizer", key);
    } else {
      unknown_key("tokenizer", key);
    }
  }
}

void apply_model(RunConfig& c, const json& section) {
  // The profile is applied first so explicit keys can override it.
  if (section.contains("profile")) {
    const auto profile = as<std::string>(section["profile"], "model", "profile");
    if (profile == "tiny") {
      c.model = ModelConfig::tiny();
    } else if (profile == "base") {
      c.model = ModelConfig::base(c.model.vocab_size);
    } else {
      throw std::runtime_error("model.profile must be 'base' or 'tiny'");
    }
  }
  for (const auto& [key, value] : section.items()) {
    if (key == "profile") {
    } else if (key == "num_layers") {
      c.model.num_layers = as<int32_t>(value, "model", key);
    } else if (key == "hidden_size") {
      c.model.hidden_size = as<int32_t>(value, "model", key);
    } else if (key == "num_heads") {
      c.model.num_heads = as<int32_t>(value, "model", key);
    } else if (key == "intermediate_size") {
      c.model.intermediate_size = as<int32_t>(value, "model", key);
    } else if (key == "vocab_size") {
      c.model.vocab_size = as<int32_t>(value, "model", key);
    } else if (key == "max_positions") {
      c.model.max_positions = as<int32_t>(value, "model", key);
    } else if (key == "dropout") {
      c.model.dropout_prob = as<double>(value, "model", key);
    } else {
      unknown_key("model", key);
    }
  }
}

void apply_train(RunConfig& c, const json& section, const std::filesystem::path& base_dir) {
  for (const auto& [key, value] : section.items()) {
    if (key == "learning_rate") {
      c.train.learning_rate = as<double>(value, "train", key);
    } else if (key == "batch_size") {
      c.train.batch_size = as<int32_t>(value, "train", key);
    } else if (key == "max_seq_len") {
      c.train.max_seq_len = as<int32_t>(value, "train", key);
    } else if (key == "total_steps") {
      c.train.total_steps = as<int64_t>(value, "train", key);
    } else if (key == "warmup_ratio") {
      c.train.warmup_ratio = as<double>(value, "train", key);
    } else if (key == "adam_beta1") {
      c.train.adam_beta1 = as<double>(value, "train", key);
    } else if (key == "adam_beta2") {
      c.train.adam_beta2 = as<double>(value, "train", key);
    } else if (key == "adam_epsilon") {
      c.train.adam_epsilon = as<double>(value, "train", key);
    } else if (key == "seed") {
      c.train.seed = as<uint64_t>(value, "train", key);
    } else if (key == "eval_every") {
      c.train.eval_every = as<int64_t>(value, "train", key);
    } else if (key == "checkpoint_every") {
      c.train.checkpoint_every = as<int64_t>(value, "train", key);
    } else if (key == "checkpoint_dir") {
      const auto dir = as<std::string>(value, "train", key);
      c.train.checkpoint_dir =
          dir.empty() ? dir : (base_dir / dir).lexically_normal().string();
    } else if (key == "grad_clip") {
      c.train.grad_clip = as<double>(value, "train", key);
    } else if (key == "weight_decay") {
      c.train.weight_decay = as<double>(value, "train", key);
    } else if (key == "mask_prob") {
      c.mask_prob = as<double>(value, "train", key);
    } else if (key == "mask_mode") {
      c.mask_mode = parse_mask_mode(as<std::string>(value, "train", key));
    } else if (key == "next_ratio") {
      c.next_ratio = as<double>(value, "train", key);
    } else {
      unknown_key("train", key);
    }
  }
}

void apply_eval(RunConfig& c, const json& section) {
  for (const auto& [key, value] : section.items()) {
    if (key == "label_set") {
      c.label_set = as<std::vector<std::string>>(value, "eval", key);
    } else if (key == "max_answer_len") {
      c.max_answer_len = as<int32_t>(value, "eval", key);
    } else if (key == "split_fraction") {
      c.split_fraction = as<double>(value, "eval", key);
    } else {
      unknown_key("eval", key);
    }
  }
}

}  // namespace

MaskMode parse_mask_mode(const std::string& name) {
  if (name == "paper_literal") return MaskMode::kPaperLiteral;
  if (name == "bert_80_10_10") return MaskMode::kBert801010;
  throw std::runtime_error("mask_mode must be 'paper_literal' or 'bert_80_10_10'");
}

void apply_config_json(RunConfig& config, const nlohmann::json& doc,
                       const std::filesystem::path& base_dir) {
  if (!doc.is_object()) throw std::runtime_error("config must be a JSON object");
  for (const auto& [key, value] : doc.items()) {
    if (key == "corpus") {
      apply_corpus(config, value);
    } else if (key == "tokenizer") {
      apply_tokenizer(config, value);
    } else if (key == "model") {
      apply_model(config, value);
    } else if (key == "train") {
      apply_train(config, value, base_dir);
    } else if (key == "eval") {
      apply_eval(config, value);
    } else {
      unknown_key("", key);
    }
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  RunConfig config;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw std::runtime_error("bad config file " + path.string() + ": " + e.what());
  }
  apply_config_json(config, doc, std::filesystem::absolute(path).parent_path());
  return config;
}

RunConfig make_run_config(const RunConfig& defaults, const char* config_path,
                          const char* overrides_json) {
  RunConfig config = defaults;
  if (config_path != nullptr && config_path[0] != '\0') {
    const std::filesystem::path path(config_path);
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path.string());
    json doc;
    try {
      in >> doc;
    } catch (const json::exception& e) {
      throw std::runtime_error("bad config file " + path.string() + ": " + e.what());
    }
    apply_config_json(config, doc, std::filesystem::absolute(path).parent_path());
  }
  if (overrides_json != nullptr && overrides_json[0] != '\0') {
    json doc;
    try {
      doc = json::parse(overrides_json);
    } catch (const json::exception& e) {
      throw std::runtime_error(std::string("bad config overrides: ") + e.what());
    }
    apply_config_json(config, doc, std::filesystem::current_path());
  }
  return config;
}

RunConfig finetune_defaults() {
  RunConfig config;
  config.train.learning_rate = 3e-5;
  config.train.batch_size = 16;
  config.train.total_steps = 0;  // auto: about three epochs
  config.train.eval_every = 50;
  return config;
}

}  // namespace tunlm
