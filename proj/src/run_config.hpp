// SPDX-License-Identifier: Apache-2.0
//
// Structured run configuration with sections corpus/tokenizer/model/train/
// eval. Unknown keys are rejected; paths resolve relative to the config file;
// precedence is CLI flag > config file > default.
#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "model.hpp"
#include "pretrain_data.hpp"

namespace tunlm {

struct RunConfig {
  // corpus
  std::string corpus_format = "jsonl";  // "jsonl" or "text"
  // tokenizer
  int32_t vocab_size = 30000;
  int32_t min_frequency = 2;
  // model
  ModelConfig model = ModelConfig::base(30000);
  // train, including the pretraining-data knobs
  TrainConfig train;
  double mask_prob = 0.15;
  MaskMode mask_mode = MaskMode::kPaperLiteral;
  double next_ratio = 0.5;
  // eval
  std::vector<std::string> label_set = {"negative", "positive"};
  int32_t max_answer_len = 30;
  double split_fraction = 0.8;
};

MaskMode parse_mask_mode(const std::string& name);

// Applies a (partial) config document on top of `config`. Relative paths in
// the document resolve against base_dir.
void apply_config_json(RunConfig& config, const nlohmann::json& doc,
                       const std::filesystem::path& base_dir);

RunConfig load_run_config(const std::filesystem::path& path);

// defaults -> optional config file -> optional overrides document (from CLI
// flags; resolved against the current directory).
RunConfig make_run_config(const RunConfig& defaults, const char* config_path,
                          const char* overrides_json);

// Fine-tuning defaults: lr 3e-5, batch 16, total_steps 0 (auto: about three
// epochs over the training set), eval every 50 steps.
RunConfig finetune_defaults();

}  // namespace tunlm
