// SPDX-License-Identifier: Apache-2.0
//
// Shared test helpers: scratch directories, batch construction and the
// central-finite-difference gradient harness.
#pragma once

#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "checkpoint.hpp"
#include "model.hpp"
#include "util/rng.hpp"

namespace tunlm::test {

inline std::filesystem::path scratch_dir(const std::string& name) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / ("tunlm_tests_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A synthetic packed batch covering the structural variety the model must
// handle: a paired example, a single-segment example with padding, masked
// positions, NSP/classification labels and QA spans.
inline Batch make_synthetic_batch(const ModelConfig& config, uint64_t seed, int32_t seq_len = 12) {
  Rng rng(seed);
  Batch batch;
  batch.batch_size = 2;
  batch.seq_len = seq_len;
  const auto draw_token = [&] {
    return Vocab::kNumSpecials +
           static_cast<int32_t>(rng.uniform_u32(
               static_cast<uint32_t>(config.vocab_size - Vocab::kNumSpecials)));
  };
  const int32_t n = 2 * seq_len;
  batch.token_ids.assign(static_cast<size_t>(n), Vocab::kPad);
  batch.segment_ids.assign(static_cast<size_t>(n), 0);
  batch.attention_mask.assign(static_cast<size_t>(n), 0);
  batch.mlm_labels.assign(static_cast<size_t>(n), -1);

  // Example 0: [CLS] a a a [SEP] b b ... b [SEP], fully unpadded pair.
  {
    const int32_t sep1 = 4;
    batch.token_ids[0] = Vocab::kCls;
    batch.attention_mask[0] = 1;
    for (int32_t i = 1; i < seq_len; ++i) {
      batch.token_ids[static_cast<size_t>(i)] =
          (i == sep1 || i == seq_len - 1) ? Vocab::kSep : draw_token();
      batch.attention_mask[static_cast<size_t>(i)] = 1;
      batch.segment_ids[static_cast<size_t>(i)] = i > sep1 ? 1 : 0;
    }
    // Mask two interior positions and record the original ids.
    for (int32_t pos : {2, sep1 + 2}) {
      batch.mlm_labels[static_cast<size_t>(pos)] = batch.token_ids[static_cast<size_t>(pos)];
      batch.token_ids[static_cast<size_t>(pos)] = Vocab::kMask;
    }
  }
  // Example 1: single segment with a padded tail.
  {
    const int32_t base = seq_len;
    const int32_t unpadded = seq_len - 3;
    batch.token_ids[static_cast<size_t>(base)] = Vocab::kCls;
    batch.attention_mask[static_cast<size_t>(base)] = 1;
    for (int32_t i = 1; i < unpadded; ++i) {
      batch.token_ids[static_cast<size_t>(base + i)] =
          i == unpadded - 1 ? Vocab::kSep : draw_token();
      batch.attention_mask[static_cast<size_t>(base + i)] = 1;
    }
    batch.mlm_labels[static_cast<size_t>(base + 3)] =
        batch.token_ids[static_cast<size_t>(base + 3)];
    batch.token_ids[static_cast<size_t>(base + 3)] = Vocab::kMask;
  }

  batch.nsp_labels = {kIsNext, kNotNext};
  batch.cls_labels = {1, 0};
  batch.qa_starts = {6, 2};
  batch.qa_ends = {8, 4};
  return batch;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int64_t checked = 0;
};

// Central finite differences with h = 1e-5 against the analytic gradients.
// Relative error |a - n| / max(|a|, |n|, 1e-3), coordinates sampled per
// tensor so every parameter group is exercised.
inline GradCheckReport gradient_check(const ModelConfig& config, Parameters<double>& params,
                                      const Batch& batch, Task task, int coords_per_tensor,
                                      uint64_t seed) {
  Parameters<double> grads = Parameters<double>::shaped(config);
  loss_and_gradients(config, params, batch, task, grads, nullptr);

  const auto eval_loss = [&]() -> double {
    ForwardOutput<double> out = forward(config, params, batch, task, nullptr, nullptr);
    if (task == Task::kPretrain) return mlm_nsp_loss(out, batch).total;
    if (task == Task::kClassification) return classification_loss(out, batch);
    return qa_loss(out, batch);
  };

  std::vector<Mat<double>*> tensors;
  std::vector<const Mat<double>*> grad_tensors;
  std::vector<std::string> names;
  params.for_each([&](const std::string& name, TensorKind, Mat<double>& t) {
    tensors.push_back(&t);
    names.push_back(name);
  });
  grads.for_each(
      [&](const std::string&, TensorKind, const Mat<double>& g) { grad_tensors.push_back(&g); });

  const double h = 1e-5;
  Rng rng(seed);
  GradCheckReport report;
  for (size_t ti = 0; ti < tensors.size(); ++ti) {
    Mat<double>& tensor = *tensors[ti];
    for (int c = 0; c < coords_per_tensor; ++c) {
      const auto index =
          static_cast<Eigen::Index>(rng.uniform_u32(static_cast<uint32_t>(tensor.size())));
      const double saved = tensor.data()[index];
      tensor.data()[index] = saved + h;
      const double loss_plus = eval_loss();
      tensor.data()[index] = saved - h;
      const double loss_minus = eval_loss();
      tensor.data()[index] = saved;
      const double numeric = (loss_plus - loss_minus) / (2.0 * h);
      const double analytic = grad_tensors[ti]->data()[index];
      const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-3});
      const double rel = std::abs(numeric - analytic) / denom;
      ++report.checked;
      if (rel > report.max_rel_error) {
        report.max_rel_error = rel;
        report.worst_tensor = names[ti];
      }
    }
  }
  return report;
}

}  // namespace tunlm::test
