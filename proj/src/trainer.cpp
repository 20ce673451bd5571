// SPDX-License-Identifier: Apache-2.0
#include "trainer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <limits>

namespace tunlm {
namespace {

constexpr uint64_t kEpochStream = 0x45504F43;    // "EPOC"
constexpr uint64_t kDropoutStream = 0x44524F50;  // "DROP"
constexpr uint64_t kHeadStream = 0x48454144;     // "HEAD"

// Deterministic epoch shuffling; batch composition is a pure function of
// (seed, dataset size, batch size).
class EpochBatcher {
 public:
  EpochBatcher(size_t count, int32_t batch_size, uint64_t seed)
      : count_(count), batch_size_(static_cast<size_t>(batch_size)), seed_(seed) {
    if (count_ == 0) throw std::runtime_error("empty training dataset");
    order_.resize(count_);
    reshuffle();
  }

  std::vector<size_t> next() {
    if (cursor_ >= count_) {
      ++epoch_;
      reshuffle();
    }
    const size_t end = std::min(count_, cursor_ + batch_size_);
    std::vector<size_t> batch(order_.begin() + static_cast<ptrdiff_t>(cursor_),
                              order_.begin() + static_cast<ptrdiff_t>(end));
    cursor_ = end;
    return batch;
  }

 private:
  void reshuffle() {
    for (size_t i = 0; i < count_; ++i) order_[i] = i;
    Rng rng(derive_seed(seed_, kEpochStream, epoch_));
    for (size_t i = count_ - 1; i > 0; --i) {
      const size_t j = rng.uniform_u32(static_cast<uint32_t>(i + 1));
      std::swap(order_[i], order_[j]);
    }
    cursor_ = 0;
  }

  size_t count_;
  size_t batch_size_;
  uint64_t seed_;
  uint64_t epoch_ = 0;
  size_t cursor_ = 0;
  std::vector<size_t> order_;
};

void log_step(std::ostream* log, int64_t step, double lr, double loss, const char* task) {
  if (log == nullptr) return;
  nlohmann::json j;
  j["step"] = step;
  j["lr"] = lr;
  j["loss"] = loss;
  j["task"] = task;
  *log << j.dump() << "\n";
}

void maybe_periodic_checkpoint(const Checkpoint& ckpt, const TrainConfig& config, int64_t step) {
  if (config.checkpoint_every <= 0 || config.checkpoint_dir.empty()) return;
  if (step % config.checkpoint_every != 0) return;
  std::filesystem::create_directories(config.checkpoint_dir);
  save_checkpoint(ckpt, std::filesystem::path(config.checkpoint_dir) /
                            ("step_" + std::to_string(step) + ".ckpt"));
}

}  // namespace

double lr_schedule(int64_t step, const TrainConfig& config) {
  config.validate();
  const int64_t total = config.total_steps;
  const auto warmup = static_cast<int64_t>(
      std::ceil(config.warmup_ratio * static_cast<double>(total)));
  const double peak = config.learning_rate;
  if (step < warmup) {
    return peak * static_cast<double>(step) / static_cast<double>(warmup);
  }
  if (step >= total) return 0.0;
  const double progress =
      static_cast<double>(step - warmup) / static_cast<double>(total - warmup);
  return peak * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void adam_step(Parameters<float>& params, Parameters<float>& grads, AdamState& state,
               double lr, const TrainConfig& config) {
  if (config.grad_clip > 0.0) {
    double sq_norm = 0.0;
    grads.for_each([&](const std::string&, TensorKind, const Mat<float>& g) {
      sq_norm += static_cast<double>(g.squaredNorm());
    });
    const double norm = std::sqrt(sq_norm);
    if (norm > config.grad_clip) {
      const auto scale = static_cast<float>(config.grad_clip / norm);
      grads.for_each([&](const std::string&, TensorKind, Mat<float>& g) { g *= scale; });
    }
  }
  state.t += 1;
  adam_update(params, grads, state.m, state.v, state.t, lr, config.adam_beta1,
              config.adam_beta2, config.adam_epsilon);
  if (config.weight_decay > 0.0) {
    const auto decay = static_cast<float>(lr * config.weight_decay);
    params.for_each([&](const std::string&, TensorKind kind, Mat<float>& p) {
      if (kind == TensorKind::kWeight) p -= decay * p;
    });
  }
}

Checkpoint pretrain(const std::vector<PretrainExample>& dataset, const ModelConfig& model_config,
                    const TrainConfig& train_config, std::ostream* log) {
  model_config.validate();
  train_config.validate();
  if (dataset.empty()) throw std::runtime_error("empty pretraining dataset");

  Checkpoint ckpt;
  ckpt.model = model_config;
  ckpt.train = train_config;
  ckpt.params = init_params<float>(model_config, train_config.seed);
  ckpt.opt = AdamState::shaped(model_config);

  Parameters<float> grads = Parameters<float>::shaped(model_config);
  EpochBatcher batcher(dataset.size(), train_config.batch_size, train_config.seed);
  for (int64_t step = 1; step <= train_config.total_steps; ++step) {
    Batch batch;
    for (size_t index : batcher.next()) {
      const PretrainExample& example = dataset[index];
      batch.add_input(example.input);
      batch.mlm_labels.insert(batch.mlm_labels.end(), example.mlm_labels.begin(),
                              example.mlm_labels.end());
      batch.nsp_labels.push_back(example.nsp_label);
    }
    const double lr = lr_schedule(step, train_config);
    Rng dropout_rng(derive_seed(train_config.seed, kDropoutStream, static_cast<uint64_t>(step)));
    const StepLoss<float> loss =
        loss_and_gradients(model_config, ckpt.params, batch, Task::kPretrain, grads,
                           model_config.dropout_prob > 0.0 ? &dropout_rng : nullptr);
    adam_step(ckpt.params, grads, ckpt.opt, lr, train_config);
    ckpt.step = step;
    ckpt.history.push_back({step, static_cast<double>(loss.total), "pretrain_loss"});
    log_step(log, step, lr, static_cast<double>(loss.total), "pretrain");
    maybe_periodic_checkpoint(ckpt, train_config, step);
  }
  return ckpt;
}

PretrainEval evaluate_pretrain(const ModelConfig& config, const Parameters<float>& params,
                               const std::vector<PretrainExample>& dataset, int32_t batch_size) {
  if (dataset.empty()) throw std::runtime_error("empty pretraining dataset");
  double mlm_loss_sum = 0.0;
  int64_t mlm_positions = 0;
  int64_t nsp_correct = 0;
  for (size_t begin = 0; begin < dataset.size(); begin += static_cast<size_t>(batch_size)) {
    Batch batch;
    const size_t end = std::min(dataset.size(), begin + static_cast<size_t>(batch_size));
    for (size_t i = begin; i < end; ++i) {
      batch.add_input(dataset[i].input);
      batch.mlm_labels.insert(batch.mlm_labels.end(), dataset[i].mlm_labels.begin(),
                              dataset[i].mlm_labels.end());
      batch.nsp_labels.push_back(dataset[i].nsp_label);
    }
    const ForwardOutput<float> out = forward(config, params, batch, Task::kPretrain);
    const auto batch_positions = static_cast<int64_t>(out.mlm_positions.size());
    if (batch_positions > 0) {
      const PretrainLoss<float> loss = mlm_nsp_loss(out, batch);
      mlm_loss_sum += static_cast<double>(loss.mlm) * static_cast<double>(batch_positions);
      mlm_positions += batch_positions;
    }
    for (Eigen::Index b = 0; b < out.nsp_logits.rows(); ++b) {
      const int32_t predicted = out.nsp_logits(b, 1) > out.nsp_logits(b, 0) ? 1 : 0;
      if (predicted == batch.nsp_labels[static_cast<size_t>(b)]) ++nsp_correct;
    }
  }
  PretrainEval eval;
  eval.mlm_loss = mlm_positions > 0 ? mlm_loss_sum / static_cast<double>(mlm_positions) : 0.0;
  eval.nsp_accuracy = static_cast<double>(nsp_correct) / static_cast<double>(dataset.size());
  return eval;
}

namespace {

// Shared fine-tuning skeleton. BuildBatch fills a Batch from example indices;
// DevMetric scores the current parameters on the dev set.
template <class BuildBatch, class DevMetric>
Checkpoint finetune_loop(const Checkpoint& start, size_t train_count, Task task,
                         const TrainConfig& config, const char* task_name,
                         const std::string& metric_name, BuildBatch&& build_batch,
                         DevMetric&& dev_metric, std::ostream* log) {
  start.model.validate();
  config.validate();

  Checkpoint current;
  current.model = start.model;
  current.train = config;
  current.params = start.params;
  current.opt = AdamState::shaped(start.model);
  reinit_head(current.params, task, derive_seed(config.seed, kHeadStream, 0));
  if (config.total_steps == 0) return current;

  Checkpoint best = current;
  double best_metric = -std::numeric_limits<double>::infinity();

  Parameters<float> grads = Parameters<float>::shaped(start.model);
  EpochBatcher batcher(train_count, config.batch_size, config.seed);
  for (int64_t step = 1; step <= config.total_steps; ++step) {
    Batch batch = build_batch(batcher.next());
    const double lr = lr_schedule(step, config);
    Rng dropout_rng(derive_seed(config.seed, kDropoutStream, static_cast<uint64_t>(step)));
    const StepLoss<float> loss =
        loss_and_gradients(start.model, current.params, batch, task, grads,
                           start.model.dropout_prob > 0.0 ? &dropout_rng : nullptr);
    adam_step(current.params, grads, current.opt, lr, config);
    current.step = step;
    log_step(log, step, lr, static_cast<double>(loss.total), task_name);

    const bool eval_now =
        (config.eval_every > 0 && step % config.eval_every == 0) || step == config.total_steps;
    if (eval_now) {
      const double metric = dev_metric(current.params);
      current.history.push_back({step, metric, metric_name});
      // Strict improvement only, so ties keep the earlier step.
      if (metric > best_metric) {
        best_metric = metric;
        best = current;
      }
    }
    maybe_periodic_checkpoint(current, config, step);
  }
  return best;
}

}  // namespace

Checkpoint finetune_classification(const Checkpoint& start, const ClassificationDataset& train,
                                   const ClassificationDataset& dev, const Vocab& vocab,
                                   const TrainConfig& config, std::ostream* log) {
  if (train.examples.empty()) throw std::runtime_error("empty training dataset");
  const auto arity = static_cast<int32_t>(train.label_set.size());
  if (arity != 2) throw std::runtime_error("classification head supports exactly 2 labels");

  std::vector<EncodedInput> train_inputs;
  std::vector<int32_t> train_labels;
  for (const ClassificationExample& example : train.examples) {
    if (example.label < 0 || example.label >= arity) {
      throw std::runtime_error("label outside task arity");
    }
    train_inputs.push_back(
        build_input(encode(example.text, vocab), nullptr, config.max_seq_len, vocab));
    train_labels.push_back(example.label);
  }
  std::vector<EncodedInput> dev_inputs;
  std::vector<int32_t> dev_labels;
  for (const ClassificationExample& example : dev.examples) {
    dev_inputs.push_back(
        build_input(encode(example.text, vocab), nullptr, config.max_seq_len, vocab));
    dev_labels.push_back(example.label);
  }

  return finetune_loop(
      start, train_inputs.size(), Task::kClassification, config, "finetune_classification",
      "dev_accuracy",
      [&](const std::vector<size_t>& indices) {
        Batch batch;
        for (size_t i : indices) {
          batch.add_input(train_inputs[i]);
          batch.cls_labels.push_back(train_labels[i]);
        }
        return batch;
      },
      [&](const Parameters<float>& params) {
        if (dev_inputs.empty()) return 0.0;
        ClassificationResult result;
        result.label_set = dev.label_set;
        result.gold = dev_labels;
        result.predicted = predict_classification(start.model, params, dev_inputs, 32);
        return accuracy(result);
      },
      log);
}

Checkpoint finetune_qa(const Checkpoint& start, const QaDataset& train, const QaDataset& dev,
                       const Vocab& vocab, const TrainConfig& config, std::ostream* log,
                       int32_t max_answer_len) {
  if (train.examples.empty()) throw std::runtime_error("empty training dataset");

  // Keep only examples whose gold span survives tokenization and truncation.
  std::vector<QaFeature> features;
  for (const QaExample& example : train.examples) {
    QaFeature feature = build_qa_feature(example, vocab, config.max_seq_len);
    if (feature.gold_start >= 0) features.push_back(std::move(feature));
  }
  if (features.empty()) {
    throw std::runtime_error("no trainable QA examples after span alignment");
  }

  return finetune_loop(
      start, features.size(), Task::kQa, config, "finetune_qa", "dev_token_f1",
      [&](const std::vector<size_t>& indices) {
        Batch batch;
        for (size_t i : indices) {
          batch.add_input(features[i].input);
          batch.qa_starts.push_back(features[i].gold_start);
          batch.qa_ends.push_back(features[i].gold_end);
        }
        return batch;
      },
      [&](const Parameters<float>& params) {
        if (dev.examples.empty()) return 0.0;
        return qa_dev_token_f1(start.model, params, vocab, dev, config.max_seq_len,
                               max_answer_len);
      },
      log);
}

Checkpoint sequential_transfer(const Checkpoint& start,
                               const std::vector<ClassificationStage>& stages, const Vocab& vocab,
                               const TrainConfig& config, std::ostream* log,
                               std::vector<double>* stage_metrics) {
  if (stages.empty()) throw std::runtime_error("empty stage list");
  Checkpoint current = start;
  for (size_t i = 0; i < stages.size(); ++i) {
    try {
      current = finetune_classification(current, stages[i].train, stages[i].dev, vocab, config,
                                        log);
    } catch (const std::exception& e) {
      throw std::runtime_error("stage " + std::to_string(i) + ": " + e.what());
    }
    if (stage_metrics != nullptr) {
      stage_metrics->push_back(current.history.empty() ? 0.0 : current.history.back().value);
    }
  }
  return current;
}

Checkpoint sequential_transfer(const Checkpoint& start, const std::vector<QaStage>& stages,
                               const Vocab& vocab, const TrainConfig& config, std::ostream* log,
                               std::vector<double>* stage_metrics, int32_t max_answer_len) {
  if (stages.empty()) throw std::runtime_error("empty stage list");
  Checkpoint current = start;
  for (size_t i = 0; i < stages.size(); ++i) {
    try {
      current = finetune_qa(current, stages[i].train, stages[i].dev, vocab, config, log,
                            max_answer_len);
    } catch (const std::exception& e) {
      throw std::runtime_error("stage " + std::to_string(i) + ": " + e.what());
    }
    if (stage_metrics != nullptr) {
      stage_metrics->push_back(current.history.empty() ? 0.0 : current.history.back().value);
    }
  }
  return current;
}

}  // namespace tunlm
