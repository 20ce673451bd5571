// SPDX-License-Identifier: Apache-2.0
//
// Optimization: Adam with bias correction, linear-warmup + cosine-annealing
// schedule, the pretraining and fine-tuning loops, and the sequential
// transfer driver that folds fine-tuning over an ordered list of stages.
#pragma once

#include <cmath>
#include <ostream>

#include "checkpoint.hpp"
#include "datasets.hpp"
#include "eval.hpp"
#include "model.hpp"
#include "pretrain_data.hpp"

namespace tunlm {

// Warmup steps W = ceil(warmup_ratio * total_steps); lr ramps linearly from 0
// over [0, W) and follows half-cosine decay from the peak back to 0 over
// [W, total_steps].
double lr_schedule(int64_t step, const TrainConfig& config);

// One Adam update over every tensor (fixed visitation order), t is the
// 1-based step count after this update. Throws on non-finite gradients.
template <class T>
void adam_update(Parameters<T>& params, const Parameters<T>& grads, Parameters<T>& m,
                 Parameters<T>& v, int64_t t, double lr, double beta1, double beta2,
                 double epsilon) {
  std::vector<Mat<T>*> param_list, m_list, v_list;
  std::vector<const Mat<T>*> grad_list;
  params.for_each([&](const std::string&, TensorKind, Mat<T>& x) { param_list.push_back(&x); });
  grads.for_each([&](const std::string&, TensorKind, const Mat<T>& g) { grad_list.push_back(&g); });
  m.for_each([&](const std::string&, TensorKind, Mat<T>& x) { m_list.push_back(&x); });
  v.for_each([&](const std::string&, TensorKind, Mat<T>& x) { v_list.push_back(&x); });

  const T b1 = static_cast<T>(beta1);
  const T b2 = static_cast<T>(beta2);
  const T bias1 = static_cast<T>(1) - static_cast<T>(std::pow(beta1, static_cast<double>(t)));
  const T bias2 = static_cast<T>(1) - static_cast<T>(std::pow(beta2, static_cast<double>(t)));
  for (size_t i = 0; i < param_list.size(); ++i) {
    const Mat<T>& g = *grad_list[i];
    if (!g.allFinite()) throw std::runtime_error("non-finite gradient");
    Mat<T>& mm = *m_list[i];
    Mat<T>& vv = *v_list[i];
    mm = b1 * mm + (static_cast<T>(1) - b1) * g;
    vv = b2 * vv.array() + (static_cast<T>(1) - b2) * g.array().square();
    const auto m_hat = (mm.array() / bias1).eval();
    const auto v_hat = (vv.array() / bias2).eval();
    param_list[i]->array() -=
        static_cast<T>(lr) * m_hat / (v_hat.sqrt() + static_cast<T>(epsilon));
  }
}

// Wrapper over the optimizer state; applies the opt-in global-norm clip and
// decoupled weight decay when enabled in the config (both default off).
void adam_step(Parameters<float>& params, Parameters<float>& grads, AdamState& state,
               double lr, const TrainConfig& config);

// MLM+NSP training from scratch over a static masked dataset. Logs one JSON
// record per step: {"step", "lr", "loss", "task"}. Deterministic per
// (seed, dataset bytes, config).
Checkpoint pretrain(const std::vector<PretrainExample>& dataset, const ModelConfig& model_config,
                    const TrainConfig& train_config, std::ostream* log = nullptr);

// Aggregate MLM loss / NSP accuracy of a checkpoint over a dataset,
// dropout disabled. Used for reporting and convergence checks.
struct PretrainEval {
  double mlm_loss = 0.0;
  double nsp_accuracy = 0.0;
};
PretrainEval evaluate_pretrain(const ModelConfig& config, const Parameters<float>& params,
                               const std::vector<PretrainExample>& dataset,
                               int32_t batch_size = 32);

// Fine-tunes all parameters from a checkpoint with a freshly initialized task
// head; evaluates on dev every eval_every steps (and at the final step) and
// returns the checkpoint with the best dev metric, earlier step on ties.
Checkpoint finetune_classification(const Checkpoint& start,
                                   const ClassificationDataset& train,
                                   const ClassificationDataset& dev, const Vocab& vocab,
                                   const TrainConfig& config, std::ostream* log = nullptr);

Checkpoint finetune_qa(const Checkpoint& start, const QaDataset& train, const QaDataset& dev,
                       const Vocab& vocab, const TrainConfig& config, std::ostream* log = nullptr,
                       int32_t max_answer_len = 30);

// Folds fine-tuning over stages, feeding each stage the previous stage's best
// checkpoint; per-stage best dev metrics are appended to stage_metrics.
struct ClassificationStage {
  ClassificationDataset train, dev;
};
struct QaStage {
  QaDataset train, dev;
};
Checkpoint sequential_transfer(const Checkpoint& start,
                               const std::vector<ClassificationStage>& stages, const Vocab& vocab,
                               const TrainConfig& config, std::ostream* log = nullptr,
                               std::vector<double>* stage_metrics = nullptr);
Checkpoint sequential_transfer(const Checkpoint& start, const std::vector<QaStage>& stages,
                               const Vocab& vocab, const TrainConfig& config,
                               std::ostream* log = nullptr,
                               std::vector<double>* stage_metrics = nullptr,
                               int32_t max_answer_len = 30);

}  // namespace tunlm
