// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format DLMCKPT1: bit-exact round trip of model parameters,
// optimizer state, configs, step counter and metric history. Tensors are
// stored as little-endian 32-bit floats.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "model.hpp"

namespace tunlm {

struct TrainConfig {
  double learning_rate = 1e-4;
  int32_t batch_size = 128;
  int32_t max_seq_len = 128;
  int64_t total_steps = 2000;
  double warmup_ratio = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  uint64_t seed = 42;
  int64_t eval_every = 100;
  int64_t checkpoint_every = 0;  // 0: only the final checkpoint
  std::string checkpoint_dir;
  // Both default off; the training recipe uses neither.
  double grad_clip = 0.0;
  double weight_decay = 0.0;

  void validate() const;
};

struct AdamState {
  Parameters<float> m, v;
  int64_t t = 0;

  static AdamState shaped(const ModelConfig& config);
};

struct MetricRecord {
  int64_t step = 0;
  double value = 0.0;
  std::string name;
  bool operator==(const MetricRecord&) const = default;
};

struct Checkpoint {
  uint32_t version = 1;
  ModelConfig model;
  TrainConfig train;
  Parameters<float> params;
  AdamState opt;
  int64_t step = 0;
  std::vector<MetricRecord> history;
};

std::string checkpoint_to_bytes(const Checkpoint& ckpt);
Checkpoint checkpoint_from_bytes(std::string_view data);
// Atomic: writes a temporary file and renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace tunlm
