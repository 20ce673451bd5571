// SPDX-License-Identifier: Apache-2.0
#include "checkpoint.hpp"

#include <stdexcept>

#include "util/bytes.hpp"

namespace tunlm {
namespace {

constexpr char kMagic[9] = "DLMCKPT1";
constexpr uint32_t kVersion = 1;

void write_model_config(ByteWriter& w, const ModelConfig& c) {
  w.i32(c.num_layers);
  w.i32(c.hidden_size);
  w.i32(c.num_heads);
  w.i32(c.intermediate_size);
  w.i32(c.vocab_size);
  w.i32(c.max_positions);
  w.i32(c.num_segments);
  w.f64(c.dropout_prob);
}

ModelConfig read_model_config(ByteReader& r) {
  ModelConfig c;
  c.num_layers = r.i32();
  c.hidden_size = r.i32();
  c.num_heads = r.i32();
  c.intermediate_size = r.i32();
  c.vocab_size = r.i32();
  c.max_positions = r.i32();
  c.num_segments = r.i32();
  c.dropout_prob = r.f64();
  return c;
}

void write_train_config(ByteWriter& w, const TrainConfig& c) {
  w.f64(c.learning_rate);
  w.i32(c.batch_size);
  w.i32(c.max_seq_len);
  w.u64(static_cast<uint64_t>(c.total_steps));
  w.f64(c.warmup_ratio);
  w.f64(c.adam_beta1);
  w.f64(c.adam_beta2);
  w.f64(c.adam_epsilon);
  w.u64(c.seed);
  w.u64(static_cast<uint64_t>(c.eval_every));
  w.u64(static_cast<uint64_t>(c.checkpoint_every));
  w.str(c.checkpoint_dir);
  w.f64(c.grad_clip);
  w.f64(c.weight_decay);
}

TrainConfig read_train_config(ByteReader& r) {
  TrainConfig c;
  c.learning_rate = r.f64();
  c.batch_size = r.i32();
  c.max_seq_len = r.i32();
  c.total_steps = static_cast<int64_t>(r.u64());
  c.warmup_ratio = r.f64();
  c.adam_beta1 = r.f64();
  c.adam_beta2 = r.f64();
  c.adam_epsilon = r.f64();
  c.seed = r.u64();
  c.eval_every = static_cast<int64_t>(r.u64());
  c.checkpoint_every = static_cast<int64_t>(r.u64());
  c.checkpoint_dir = r.str();
  c.grad_clip = r.f64();
  c.weight_decay = r.f64();
  return c;
}

void write_tensors(ByteWriter& w, const Parameters<float>& params, const std::string& prefix) {
  params.for_each([&](const std::string& name, TensorKind, const Mat<float>& t) {
    w.str(prefix + name);
    w.u32(static_cast<uint32_t>(t.rows()));
    w.u32(static_cast<uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) w.f32(t.data()[i]);
  });
}

void read_tensors(ByteReader& r, Parameters<float>& params, const std::string& prefix) {
  params.for_each([&](const std::string& name, TensorKind, Mat<float>& t) {
    if (r.str() != prefix + name) throw std::runtime_error("corrupt checkpoint");
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (rows != static_cast<uint32_t>(t.rows()) || cols != static_cast<uint32_t>(t.cols())) {
      throw std::runtime_error("corrupt checkpoint");
    }
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.f32();
  });
}

}  // namespace

void TrainConfig::validate() const {
  if (total_steps < 0) throw std::invalid_argument("total_steps must be non-negative");
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (warmup_ratio <= 0.0 || warmup_ratio >= 1.0) {
    throw std::invalid_argument("warmup_ratio must lie in (0, 1)");
  }
  if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must be non-negative");
  if (max_seq_len < 3) throw std::invalid_argument("max_seq_len must be at least 3");
}

AdamState AdamState::shaped(const ModelConfig& config) {
  AdamState state;
  state.m = Parameters<float>::shaped(config);
  state.v = Parameters<float>::shaped(config);
  state.t = 0;
  return state;
}

std::string checkpoint_to_bytes(const Checkpoint& ckpt) {
  ByteWriter w;
  w.bytes(kMagic, 8);
  w.u32(ckpt.version);
  write_model_config(w, ckpt.model);
  write_train_config(w, ckpt.train);
  w.u64(static_cast<uint64_t>(ckpt.step));
  w.u32(static_cast<uint32_t>(ckpt.history.size()));
  for (const MetricRecord& rec : ckpt.history) {
    w.u64(static_cast<uint64_t>(rec.step));
    w.f64(rec.value);
    w.str(rec.name);
  }
  w.u64(static_cast<uint64_t>(ckpt.opt.t));
  write_tensors(w, ckpt.params, "");
  write_tensors(w, ckpt.opt.m, "adam.m.");
  write_tensors(w, ckpt.opt.v, "adam.v.");
  return w.data();
}

Checkpoint checkpoint_from_bytes(std::string_view data) {
  if (data.size() < 8 || data.substr(0, 8) != std::string_view(kMagic, 8)) {
    throw std::runtime_error("not a checkpoint");
  }
  ByteReader r(data, "corrupt checkpoint");
  r.raw(8);
  Checkpoint ckpt;
  ckpt.version = r.u32();
  if (ckpt.version != kVersion) throw std::runtime_error("unsupported checkpoint version");
  ckpt.model = read_model_config(r);
  ckpt.model.validate();
  ckpt.train = read_train_config(r);
  ckpt.step = static_cast<int64_t>(r.u64());
  const uint32_t history_count = r.u32();
  ckpt.history.reserve(history_count);
  for (uint32_t i = 0; i < history_count; ++i) {
    MetricRecord rec;
    rec.step = static_cast<int64_t>(r.u64());
    rec.value = r.f64();
    rec.name = r.str();
    ckpt.history.push_back(std::move(rec));
  }
  ckpt.params = Parameters<float>::shaped(ckpt.model);
  ckpt.opt = AdamState::shaped(ckpt.model);
  ckpt.opt.t = static_cast<int64_t>(r.u64());
  read_tensors(r, ckpt.params, "");
  read_tensors(r, ckpt.opt.m, "adam.m.");
  read_tensors(r, ckpt.opt.v, "adam.v.");
  if (!r.at_end()) throw std::runtime_error("corrupt checkpoint");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  atomic_write_file(path, checkpoint_to_bytes(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file(path));
}

}  // namespace tunlm
