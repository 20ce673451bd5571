// SPDX-License-Identifier: Apache-2.0
//
// Transformer encoder with token/position/segment embeddings, multi-head
// self-attention, GELU feed-forward blocks (post-layer-norm ordering) and
// four output heads: masked-token prediction (decoder tied to the token
// embedding), next-sentence prediction, sequence classification and span
// extraction. Forward, losses and exact reverse-mode gradients are all here,
// templated on the scalar type: float for training, double for gradient
// checking.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "tensor.hpp"
#include "tokenizer.hpp"
#include "util/rng.hpp"

namespace tunlm {

struct ModelConfig {
  int32_t num_layers = 12;
  int32_t hidden_size = 768;
  int32_t num_heads = 12;
  int32_t intermediate_size = 3072;
  int32_t vocab_size = 30000;
  int32_t max_positions = 128;
  int32_t num_segments = 2;
  double dropout_prob = 0.1;

  int32_t head_dim() const { return hidden_size / num_heads; }
  void validate() const;

  static ModelConfig base(int32_t vocab_size);
  // Test profile: 2 layers, 64 hidden, 2 heads, 256 intermediate, 1000 vocab.
  static ModelConfig tiny();
};

// Closed-form trainable parameter count (MLM decoder tied to the token
// embedding, so it contributes only its output bias).
int64_t param_count(const ModelConfig& config);

enum class TensorKind { kWeight, kBias, kLnScale, kLnShift };

enum class Task { kPretrain, kClassification, kQa };

template <class T>
struct LayerParams {
  Mat<T> q_w, q_b, k_w, k_b, v_w, v_b;
  Mat<T> attn_out_w, attn_out_b;
  Mat<T> ln_attn_g, ln_attn_b;
  Mat<T> ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
  Mat<T> ln_ffn_g, ln_ffn_b;
};

template <class T>
struct Parameters {
  Mat<T> tok_emb, pos_emb, seg_emb;
  Mat<T> emb_ln_g, emb_ln_b;
  std::vector<LayerParams<T>> layers;
  Mat<T> pooler_w, pooler_b;
  Mat<T> mlm_w, mlm_b, mlm_ln_g, mlm_ln_b, mlm_out_b;
  Mat<T> nsp_w, nsp_b;
  Mat<T> cls_w, cls_b;
  Mat<T> qa_w, qa_b;

  // Visits every tensor in one fixed canonical order; the checkpoint format,
  // the optimizer and initialization all rely on this order being stable.
  template <class F>
  void for_each(F&& f) {
    visit(*this, f);
  }
  template <class F>
  void for_each(F&& f) const {
    visit(*this, f);
  }

  static Parameters shaped(const ModelConfig& config);

  void set_zero() {
    for_each([](const std::string&, TensorKind, auto& t) { t.setZero(); });
  }
  int64_t element_count() const {
    int64_t n = 0;
    for_each([&](const std::string&, TensorKind, const auto& t) { n += t.size(); });
    return n;
  }
  bool all_finite() const {
    bool ok = true;
    for_each([&](const std::string&, TensorKind, const auto& t) { ok = ok && t.allFinite(); });
    return ok;
  }

 private:
  template <class Self, class F>
  static void visit(Self& self, F& f) {
    f("embeddings.token", TensorKind::kWeight, self.tok_emb);
    f("embeddings.position", TensorKind::kWeight, self.pos_emb);
    f("embeddings.segment", TensorKind::kWeight, self.seg_emb);
    f("embeddings.ln.gamma", TensorKind::kLnScale, self.emb_ln_g);
    f("embeddings.ln.beta", TensorKind::kLnShift, self.emb_ln_b);
    for (size_t i = 0; i < self.layers.size(); ++i) {
      auto& layer = self.layers[i];
      const std::string prefix = "encoder." + std::to_string(i) + ".";
      f(prefix + "attn.q.w", TensorKind::kWeight, layer.q_w);
      f(prefix + "attn.q.b", TensorKind::kBias, layer.q_b);
      f(prefix + "attn.k.w", TensorKind::kWeight, layer.k_w);
      f(prefix + "attn.k.b", TensorKind::kBias, layer.k_b);
      f(prefix + "attn.v.w", TensorKind::kWeight, layer.v_w);
      f(prefix + "attn.v.b", TensorKind::kBias, layer.v_b);
      f(prefix + "attn.out.w", TensorKind::kWeight, layer.attn_out_w);
      f(prefix + "attn.out.b", TensorKind::kBias, layer.attn_out_b);
      f(prefix + "ln_attn.gamma", TensorKind::kLnScale, layer.ln_attn_g);
      f(prefix + "ln_attn.beta", TensorKind::kLnShift, layer.ln_attn_b);
      f(prefix + "ffn.in.w", TensorKind::kWeight, layer.ffn_in_w);
      f(prefix + "ffn.in.b", TensorKind::kBias, layer.ffn_in_b);
      f(prefix + "ffn.out.w", TensorKind::kWeight, layer.ffn_out_w);
      f(prefix + "ffn.out.b", TensorKind::kBias, layer.ffn_out_b);
      f(prefix + "ln_ffn.gamma", TensorKind::kLnScale, layer.ln_ffn_g);
      f(prefix + "ln_ffn.beta", TensorKind::kLnShift, layer.ln_ffn_b);
    }
    f("pooler.w", TensorKind::kWeight, self.pooler_w);
    f("pooler.b", TensorKind::kBias, self.pooler_b);
    f("mlm.transform.w", TensorKind::kWeight, self.mlm_w);
    f("mlm.transform.b", TensorKind::kBias, self.mlm_b);
    f("mlm.ln.gamma", TensorKind::kLnScale, self.mlm_ln_g);
    f("mlm.ln.beta", TensorKind::kLnShift, self.mlm_ln_b);
    f("mlm.out_bias", TensorKind::kBias, self.mlm_out_b);
    f("nsp.w", TensorKind::kWeight, self.nsp_w);
    f("nsp.b", TensorKind::kBias, self.nsp_b);
    f("classifier.w", TensorKind::kWeight, self.cls_w);
    f("classifier.b", TensorKind::kBias, self.cls_b);
    f("qa.w", TensorKind::kWeight, self.qa_w);
    f("qa.b", TensorKind::kBias, self.qa_b);
  }
};

// A packed batch; arrays are row-major [batch * seq_len]. Label arrays are
// optional and only consulted by the matching task.
struct Batch {
  int32_t batch_size = 0;
  int32_t seq_len = 0;
  std::vector<int32_t> token_ids;
  std::vector<int32_t> segment_ids;
  std::vector<int32_t> attention_mask;
  std::vector<int32_t> mlm_labels;  // [B*S], -1 where unlabeled
  std::vector<int32_t> nsp_labels;  // [B]
  std::vector<int32_t> cls_labels;  // [B]
  std::vector<int32_t> qa_starts;   // [B], positions into the packed sequence
  std::vector<int32_t> qa_ends;     // [B]

  void add_input(const EncodedInput& input);
  int64_t rows() const { return int64_t{1} * batch_size * seq_len; }
};

template <class T>
struct LnCache {
  Mat<T> xhat;
  std::vector<T> inv_std;
};

template <class T>
struct LayerCache {
  Mat<T> input;
  Mat<T> q, k, v;
  std::vector<Mat<T>> attn;  // [B*num_heads] matrices of S x S softmax rows
  Mat<T> ctx;
  Mat<T> attn_drop_mask;
  LnCache<T> ln_attn;
  Mat<T> n1;
  Mat<T> ffn_pre;
  Mat<T> ffn_act;
  Mat<T> ffn_drop_mask;
  LnCache<T> ln_ffn;
};

template <class T>
struct Cache {
  Mat<T> emb_sum;
  LnCache<T> emb_ln;
  Mat<T> emb_drop_mask;
  Mat<T> emb_out;
  std::vector<LayerCache<T>> layers;
  Mat<T> pooled_pre_tanh;
  Mat<T> pooled_drop_mask;
  Mat<T> pooled_dropped;
  Mat<T> mlm_z0, mlm_z1, mlm_gelu, mlm_z2;
  LnCache<T> mlm_ln;
};

template <class T>
struct ForwardOutput {
  Mat<T> sequence_output;            // (B*S) x H
  Mat<T> pooled;                     // B x H
  Mat<T> mlm_logits;                 // M x V
  std::vector<int32_t> mlm_positions;  // M flattened row indices
  Mat<T> nsp_logits;                 // B x 2
  Mat<T> cls_logits;                 // B x 2
  Mat<T> qa_start_logits;            // B x S
  Mat<T> qa_end_logits;              // B x S
};

// Gradients of the scalar loss with respect to each head's logits, as
// produced by the loss functions below. Null entries contribute nothing.
template <class T>
struct HeadGrads {
  const Mat<T>* mlm = nullptr;
  const Mat<T>* nsp = nullptr;
  const Mat<T>* cls = nullptr;
  const Mat<T>* qa_start = nullptr;
  const Mat<T>* qa_end = nullptr;
};

template <class T>
struct PretrainLoss {
  T total, mlm, nsp;
};

inline constexpr double kLayerNormEps = 1e-12;
inline constexpr double kAttentionMaskValue = -1e9;
inline constexpr double kInitStddev = 0.02;

// ---------------------------------------------------------------------------
// Building blocks

template <class T>
T gelu_scalar(T x) {
  const T c0 = static_cast<T>(0.7978845608028654);  // sqrt(2/pi)
  const T c1 = static_cast<T>(0.044715);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(c0 * (x + c1 * x * x * x)));
}

template <class T>
T gelu_grad_scalar(T x) {
  const T c0 = static_cast<T>(0.7978845608028654);
  const T c1 = static_cast<T>(0.044715);
  const T u = c0 * (x + c1 * x * x * x);
  const T th = std::tanh(u);
  const T sech2 = static_cast<T>(1) - th * th;
  return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
         static_cast<T>(0.5) * x * sech2 * c0 * (static_cast<T>(1) + static_cast<T>(3) * c1 * x * x);
}

template <class T>
Mat<T> layer_norm_forward(const Mat<T>& x, const Mat<T>& gamma, const Mat<T>& beta,
                          LnCache<T>* cache) {
  const auto rows = x.rows();
  const auto cols = x.cols();
  Mat<T> xhat(rows, cols);
  std::vector<T> inv_std(static_cast<size_t>(rows));
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T mean = x.row(r).mean();
    const T var = (x.row(r).array() - mean).square().sum() / static_cast<T>(cols);
    const T is = static_cast<T>(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    inv_std[static_cast<size_t>(r)] = is;
    xhat.row(r) = (x.row(r).array() - mean) * is;
  }
  Mat<T> y = (xhat.array().rowwise() * gamma.row(0).array()).rowwise() + beta.row(0).array();
  if (cache != nullptr) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LnCache<T>& cache, const Mat<T>& gamma,
                           Mat<T>& dgamma, Mat<T>& dbeta) {
  const auto rows = dy.rows();
  const auto cols = dy.cols();
  dgamma.row(0).array() += (dy.array() * cache.xhat.array()).colwise().sum();
  dbeta.row(0).array() += dy.array().colwise().sum();
  Mat<T> dx(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const auto dxhat = (dy.row(r).array() * gamma.row(0).array()).eval();
    const T m1 = dxhat.mean();
    const T m2 = (dxhat * cache.xhat.row(r).array()).mean();
    dx.row(r) = cache.inv_std[static_cast<size_t>(r)] *
                (dxhat - m1 - cache.xhat.row(r).array() * m2);
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Initialization

template <class T>
Parameters<T> Parameters<T>::shaped(const ModelConfig& c) {
  c.validate();
  const auto H = c.hidden_size;
  const auto I = c.intermediate_size;
  Parameters<T> p;
  p.tok_emb = Mat<T>::Zero(c.vocab_size, H);
  p.pos_emb = Mat<T>::Zero(c.max_positions, H);
  p.seg_emb = Mat<T>::Zero(c.num_segments, H);
  p.emb_ln_g = Mat<T>::Zero(1, H);
  p.emb_ln_b = Mat<T>::Zero(1, H);
  p.layers.resize(static_cast<size_t>(c.num_layers));
  for (auto& layer : p.layers) {
    layer.q_w = Mat<T>::Zero(H, H);
    layer.q_b = Mat<T>::Zero(1, H);
    layer.k_w = Mat<T>::Zero(H, H);
    layer.k_b = Mat<T>::Zero(1, H);
    layer.v_w = Mat<T>::Zero(H, H);
    layer.v_b = Mat<T>::Zero(1, H);
    layer.attn_out_w = Mat<T>::Zero(H, H);
    layer.attn_out_b = Mat<T>::Zero(1, H);
    layer.ln_attn_g = Mat<T>::Zero(1, H);
    layer.ln_attn_b = Mat<T>::Zero(1, H);
    layer.ffn_in_w = Mat<T>::Zero(H, I);
    layer.ffn_in_b = Mat<T>::Zero(1, I);
    layer.ffn_out_w = Mat<T>::Zero(I, H);
    layer.ffn_out_b = Mat<T>::Zero(1, H);
    layer.ln_ffn_g = Mat<T>::Zero(1, H);
    layer.ln_ffn_b = Mat<T>::Zero(1, H);
  }
  p.pooler_w = Mat<T>::Zero(H, H);
  p.pooler_b = Mat<T>::Zero(1, H);
  p.mlm_w = Mat<T>::Zero(H, H);
  p.mlm_b = Mat<T>::Zero(1, H);
  p.mlm_ln_g = Mat<T>::Zero(1, H);
  p.mlm_ln_b = Mat<T>::Zero(1, H);
  p.mlm_out_b = Mat<T>::Zero(1, c.vocab_size);
  p.nsp_w = Mat<T>::Zero(H, 2);
  p.nsp_b = Mat<T>::Zero(1, 2);
  p.cls_w = Mat<T>::Zero(H, 2);
  p.cls_b = Mat<T>::Zero(1, 2);
  p.qa_w = Mat<T>::Zero(H, 2);
  p.qa_b = Mat<T>::Zero(1, 2);
  return p;
}

// Weights: Normal(0, 0.02^2) with draws clamped to +/-2 sigma (the clamped
// spread has empirical stddev ~0.0192). Biases zero, norm scales one.
template <class T>
void init_tensor(Mat<T>& t, TensorKind kind, Rng& rng) {
  switch (kind) {
    case TensorKind::kWeight: {
      const double sigma = kInitStddev;
      for (Eigen::Index i = 0; i < t.size(); ++i) {
        double z = rng.normal() * sigma;
        z = std::min(std::max(z, -2.0 * sigma), 2.0 * sigma);
        t.data()[i] = static_cast<T>(z);
      }
      break;
    }
    case TensorKind::kBias:
    case TensorKind::kLnShift:
      t.setZero();
      break;
    case TensorKind::kLnScale:
      t.setOnes();
      break;
  }
}

template <class T>
Parameters<T> init_params(const ModelConfig& config, uint64_t seed) {
  Parameters<T> params = Parameters<T>::shaped(config);
  Rng rng(seed);
  params.for_each([&](const std::string&, TensorKind kind, Mat<T>& t) {
    init_tensor(t, kind, rng);
  });
  return params;
}

// Fresh initialization of one head's tensors, used when fine-tuning starts a
// new task from a pretrained checkpoint.
template <class T>
void reinit_head(Parameters<T>& params, Task task, uint64_t seed) {
  Rng rng(seed);
  if (task == Task::kClassification) {
    init_tensor(params.cls_w, TensorKind::kWeight, rng);
    init_tensor(params.cls_b, TensorKind::kBias, rng);
  } else if (task == Task::kQa) {
    init_tensor(params.qa_w, TensorKind::kWeight, rng);
    init_tensor(params.qa_b, TensorKind::kBias, rng);
  }
}

// ---------------------------------------------------------------------------
// Forward

namespace detail {

template <class T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  Mat<T> mask(rows, cols);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < mask.size(); ++i) {
    mask.data()[i] = rng.uniform_double() < p ? static_cast<T>(0) : keep_scale;
  }
  return mask;
}

}  // namespace detail

template <class T>
ForwardOutput<T> forward(const ModelConfig& config, const Parameters<T>& params,
                         const Batch& batch, Task task, Cache<T>* cache = nullptr,
                         Rng* dropout_rng = nullptr) {
  config.validate();
  const int32_t B = batch.batch_size;
  const int32_t S = batch.seq_len;
  const int32_t H = config.hidden_size;
  const int32_t A = config.num_heads;
  const int32_t dh = config.head_dim();
  const int64_t N = batch.rows();
  if (B <= 0 || S <= 0) throw std::invalid_argument("empty batch");
  if (S > config.max_positions) throw std::runtime_error("sequence length exceeds max_positions");
  const bool training = dropout_rng != nullptr && config.dropout_prob > 0.0;
  Cache<T> local_cache;
  Cache<T>& cc = cache != nullptr ? *cache : local_cache;

  // Embeddings: token + position + segment, then layer norm (+ dropout).
  Mat<T> emb_sum(N, H);
  for (int64_t i = 0; i < N; ++i) {
    const int32_t tok = batch.token_ids[static_cast<size_t>(i)];
    const int32_t seg = batch.segment_ids[static_cast<size_t>(i)];
    const int32_t pos = static_cast<int32_t>(i % S);
    if (tok < 0 || tok >= config.vocab_size) throw std::runtime_error("token id out of range");
    if (seg < 0 || seg >= config.num_segments) throw std::runtime_error("segment id out of range");
    emb_sum.row(i) = params.tok_emb.row(tok) + params.pos_emb.row(pos) + params.seg_emb.row(seg);
  }
  cc.emb_sum = emb_sum;
  Mat<T> hidden = layer_norm_forward(emb_sum, params.emb_ln_g, params.emb_ln_b, &cc.emb_ln);
  if (training) {
    cc.emb_drop_mask = detail::dropout_mask<T>(N, H, config.dropout_prob, *dropout_rng);
    hidden.array() *= cc.emb_drop_mask.array();
  }
  cc.emb_out = hidden;

  // Additive attention mask per example: 0 on real keys, -1e9 on padding, so
  // softmax gives padded keys weight exactly zero.
  Mat<T> key_mask(B, S);
  for (int32_t b = 0; b < B; ++b) {
    for (int32_t s = 0; s < S; ++s) {
      key_mask(b, s) = batch.attention_mask[static_cast<size_t>(b) * S + s] == 1
                           ? static_cast<T>(0)
                           : static_cast<T>(kAttentionMaskValue);
    }
  }

  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));
  cc.layers.resize(static_cast<size_t>(config.num_layers));
  for (int32_t l = 0; l < config.num_layers; ++l) {
    const LayerParams<T>& lp = params.layers[static_cast<size_t>(l)];
    LayerCache<T>& lc = cc.layers[static_cast<size_t>(l)];
    lc.input = hidden;

    lc.q = (hidden * lp.q_w).rowwise() + lp.q_b.row(0);
    lc.k = (hidden * lp.k_w).rowwise() + lp.k_b.row(0);
    lc.v = (hidden * lp.v_w).rowwise() + lp.v_b.row(0);

    lc.attn.assign(static_cast<size_t>(B) * A, Mat<T>());
    Mat<T> ctx(N, H);
    for (int32_t b = 0; b < B; ++b) {
      for (int32_t h = 0; h < A; ++h) {
        const auto qb = lc.q.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        const auto kb = lc.k.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        const auto vb = lc.v.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        Mat<T> scores = (qb * kb.transpose()) * scale;
        scores.rowwise() += key_mask.row(b);
        for (Eigen::Index r = 0; r < scores.rows(); ++r) {
          const T row_max = scores.row(r).maxCoeff();
          scores.row(r) = (scores.row(r).array() - row_max).exp();
          scores.row(r) /= scores.row(r).sum();
        }
        ctx.block(int64_t{b} * S, int64_t{h} * dh, S, dh).noalias() = scores * vb;
        lc.attn[static_cast<size_t>(b) * A + h] = std::move(scores);
      }
    }
    lc.ctx = ctx;

    Mat<T> proj = (ctx * lp.attn_out_w).rowwise() + lp.attn_out_b.row(0);
    if (training) {
      lc.attn_drop_mask = detail::dropout_mask<T>(N, H, config.dropout_prob, *dropout_rng);
      proj.array() *= lc.attn_drop_mask.array();
    }
    Mat<T> res1 = hidden + proj;
    lc.n1 = layer_norm_forward(res1, lp.ln_attn_g, lp.ln_attn_b, &lc.ln_attn);

    lc.ffn_pre = (lc.n1 * lp.ffn_in_w).rowwise() + lp.ffn_in_b.row(0);
    lc.ffn_act = lc.ffn_pre.unaryExpr([](T x) { return gelu_scalar(x); });
    Mat<T> ffn_out = (lc.ffn_act * lp.ffn_out_w).rowwise() + lp.ffn_out_b.row(0);
    if (training) {
      lc.ffn_drop_mask = detail::dropout_mask<T>(N, H, config.dropout_prob, *dropout_rng);
      ffn_out.array() *= lc.ffn_drop_mask.array();
    }
    Mat<T> res2 = lc.n1 + ffn_out;
    hidden = layer_norm_forward(res2, lp.ln_ffn_g, lp.ln_ffn_b, &lc.ln_ffn);
  }

  ForwardOutput<T> out;
  out.sequence_output = hidden;

  // Pooled output: tanh-projected hidden state of [CLS] (position 0).
  Mat<T> cls_rows(B, H);
  for (int32_t b = 0; b < B; ++b) cls_rows.row(b) = hidden.row(int64_t{b} * S);
  cc.pooled_pre_tanh = (cls_rows * params.pooler_w).rowwise() + params.pooler_b.row(0);
  out.pooled = cc.pooled_pre_tanh.unaryExpr([](T x) { return std::tanh(x); });

  if (task == Task::kPretrain) {
    if (batch.mlm_labels.size() != static_cast<size_t>(N)) {
      throw std::invalid_argument("pretrain batch requires mlm_labels");
    }
    for (int64_t i = 0; i < N; ++i) {
      if (batch.mlm_labels[static_cast<size_t>(i)] != -1) {
        out.mlm_positions.push_back(static_cast<int32_t>(i));
      }
    }
    const auto M = static_cast<Eigen::Index>(out.mlm_positions.size());
    cc.mlm_z0.resize(M, H);
    for (Eigen::Index m = 0; m < M; ++m) {
      cc.mlm_z0.row(m) = hidden.row(out.mlm_positions[static_cast<size_t>(m)]);
    }
    cc.mlm_z1 = (cc.mlm_z0 * params.mlm_w).rowwise() + params.mlm_b.row(0);
    cc.mlm_gelu = cc.mlm_z1.unaryExpr([](T x) { return gelu_scalar(x); });
    cc.mlm_z2 = layer_norm_forward(cc.mlm_gelu, params.mlm_ln_g, params.mlm_ln_b, &cc.mlm_ln);
    out.mlm_logits = (cc.mlm_z2 * params.tok_emb.transpose()).rowwise() + params.mlm_out_b.row(0);
    out.nsp_logits = (out.pooled * params.nsp_w).rowwise() + params.nsp_b.row(0);
  } else if (task == Task::kClassification) {
    cc.pooled_dropped = out.pooled;
    if (training) {
      cc.pooled_drop_mask = detail::dropout_mask<T>(B, H, config.dropout_prob, *dropout_rng);
      cc.pooled_dropped.array() *= cc.pooled_drop_mask.array();
    }
    out.cls_logits = (cc.pooled_dropped * params.cls_w).rowwise() + params.cls_b.row(0);
  } else if (task == Task::kQa) {
    Mat<T> span_logits = (hidden * params.qa_w).rowwise() + params.qa_b.row(0);  // (B*S) x 2
    out.qa_start_logits.resize(B, S);
    out.qa_end_logits.resize(B, S);
    for (int32_t b = 0; b < B; ++b) {
      for (int32_t s = 0; s < S; ++s) {
        out.qa_start_logits(b, s) = span_logits(int64_t{b} * S + s, 0);
        out.qa_end_logits(b, s) = span_logits(int64_t{b} * S + s, 1);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Losses (each writes the gradient of the scalar loss w.r.t. its logits)

namespace detail {

// Cross-entropy with natural log over one logit row; returns the loss and
// adds weight * (softmax - onehot) into the gradient row when given.
template <class T, class LogitsRow, class GradRow>
T xent_row(const LogitsRow& logits, int32_t target, T weight, GradRow* grad) {
  const T row_max = logits.maxCoeff();
  const auto shifted = (logits.array() - row_max).eval();
  const T lse = std::log(shifted.exp().sum()) + row_max;
  const T loss = lse - logits(target);
  if (grad != nullptr) {
    grad->array() += (shifted - (lse - row_max)).exp() * weight;
    (*grad)(target) -= weight;
  }
  return loss * weight;
}

}  // namespace detail

template <class T>
PretrainLoss<T> mlm_nsp_loss(const ForwardOutput<T>& out, const Batch& batch,
                             Mat<T>* d_mlm = nullptr, Mat<T>* d_nsp = nullptr) {
  const auto M = out.mlm_logits.rows();
  if (M == 0) throw std::runtime_error("no MLM targets");
  if (batch.nsp_labels.size() != static_cast<size_t>(batch.batch_size)) {
    throw std::invalid_argument("pretrain batch requires nsp_labels");
  }
  if (d_mlm != nullptr) d_mlm->setZero(M, out.mlm_logits.cols());
  if (d_nsp != nullptr) d_nsp->setZero(batch.batch_size, 2);

  T mlm = 0;
  const T w_mlm = static_cast<T>(1) / static_cast<T>(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const int32_t label = batch.mlm_labels[static_cast<size_t>(
        out.mlm_positions[static_cast<size_t>(m)])];
    if (label < 0 || label >= out.mlm_logits.cols()) {
      throw std::runtime_error("mlm label out of range");
    }
    if (d_mlm != nullptr) {
      auto row = d_mlm->row(m);
      mlm += detail::xent_row(out.mlm_logits.row(m), label, w_mlm, &row);
    } else {
      mlm += detail::xent_row<T, decltype(out.mlm_logits.row(m)), Mat<T>>(
          out.mlm_logits.row(m), label, w_mlm, nullptr);
    }
  }

  T nsp = 0;
  const T w_nsp = static_cast<T>(1) / static_cast<T>(batch.batch_size);
  for (int32_t b = 0; b < batch.batch_size; ++b) {
    const int32_t label = batch.nsp_labels[static_cast<size_t>(b)];
    if (label != 0 && label != 1) throw std::runtime_error("nsp label out of range");
    if (d_nsp != nullptr) {
      auto row = d_nsp->row(b);
      nsp += detail::xent_row(out.nsp_logits.row(b), label, w_nsp, &row);
    } else {
      nsp += detail::xent_row<T, decltype(out.nsp_logits.row(b)), Mat<T>>(
          out.nsp_logits.row(b), label, w_nsp, nullptr);
    }
  }
  return {mlm + nsp, mlm, nsp};
}

template <class T>
T classification_loss(const ForwardOutput<T>& out, const Batch& batch, Mat<T>* d_cls = nullptr) {
  if (batch.cls_labels.size() != static_cast<size_t>(batch.batch_size)) {
    throw std::invalid_argument("classification batch requires cls_labels");
  }
  if (d_cls != nullptr) d_cls->setZero(batch.batch_size, 2);
  T loss = 0;
  const T w = static_cast<T>(1) / static_cast<T>(batch.batch_size);
  for (int32_t b = 0; b < batch.batch_size; ++b) {
    const int32_t label = batch.cls_labels[static_cast<size_t>(b)];
    if (label < 0 || label >= out.cls_logits.cols()) {
      throw std::runtime_error("classification label out of range");
    }
    if (d_cls != nullptr) {
      auto row = d_cls->row(b);
      loss += detail::xent_row(out.cls_logits.row(b), label, w, &row);
    } else {
      loss += detail::xent_row<T, decltype(out.cls_logits.row(b)), Mat<T>>(
          out.cls_logits.row(b), label, w, nullptr);
    }
  }
  return loss;
}

// Span loss: softmax over unpadded positions; (start CE + end CE) / 2,
// averaged over the batch.
template <class T>
T qa_loss(const ForwardOutput<T>& out, const Batch& batch, Mat<T>* d_start = nullptr,
          Mat<T>* d_end = nullptr) {
  const int32_t B = batch.batch_size;
  const int32_t S = batch.seq_len;
  if (batch.qa_starts.size() != static_cast<size_t>(B) ||
      batch.qa_ends.size() != static_cast<size_t>(B)) {
    throw std::invalid_argument("qa batch requires qa_starts and qa_ends");
  }
  if (d_start != nullptr) d_start->setZero(B, S);
  if (d_end != nullptr) d_end->setZero(B, S);
  T loss = 0;
  const T w = static_cast<T>(1) / (static_cast<T>(2) * static_cast<T>(B));
  for (int32_t b = 0; b < B; ++b) {
    const int32_t start = batch.qa_starts[static_cast<size_t>(b)];
    const int32_t end = batch.qa_ends[static_cast<size_t>(b)];
    const auto valid = [&](int32_t pos) {
      return pos >= 0 && pos < S && batch.attention_mask[static_cast<size_t>(b) * S + pos] == 1;
    };
    if (!valid(start) || !valid(end) || start > end) {
      throw std::runtime_error("index out of range");
    }
    // Mask padded positions out of the softmax with the same additive
    // constant the attention uses.
    Mat<T> masked_start(1, S), masked_end(1, S);
    for (int32_t s = 0; s < S; ++s) {
      const bool on = batch.attention_mask[static_cast<size_t>(b) * S + s] == 1;
      masked_start(0, s) = on ? out.qa_start_logits(b, s) : static_cast<T>(kAttentionMaskValue);
      masked_end(0, s) = on ? out.qa_end_logits(b, s) : static_cast<T>(kAttentionMaskValue);
    }
    if (d_start != nullptr) {
      auto row_s = d_start->row(b);
      auto row_e = d_end->row(b);
      loss += detail::xent_row(masked_start.row(0), start, w, &row_s);
      loss += detail::xent_row(masked_end.row(0), end, w, &row_e);
      // Gradients at padded positions are an exact zero of the softmax.
      for (int32_t s = 0; s < S; ++s) {
        if (batch.attention_mask[static_cast<size_t>(b) * S + s] != 1) {
          (*d_start)(b, s) = 0;
          (*d_end)(b, s) = 0;
        }
      }
    } else {
      loss += detail::xent_row<T, decltype(masked_start.row(0)), Mat<T>>(masked_start.row(0),
                                                                         start, w, nullptr);
      loss += detail::xent_row<T, decltype(masked_end.row(0)), Mat<T>>(masked_end.row(0), end, w,
                                                                       nullptr);
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Backward

template <class T>
void backward(const ModelConfig& config, const Parameters<T>& params, const Batch& batch,
              const Cache<T>& cache, const ForwardOutput<T>& out, const HeadGrads<T>& heads,
              Parameters<T>& grads) {
  const int32_t B = batch.batch_size;
  const int32_t S = batch.seq_len;
  const int32_t H = config.hidden_size;
  const int32_t A = config.num_heads;
  const int32_t dh = config.head_dim();
  const int64_t N = batch.rows();
  const bool training = cache.emb_drop_mask.size() > 0;

  Mat<T> d_seq = Mat<T>::Zero(N, H);
  Mat<T> d_pooled = Mat<T>::Zero(B, H);

  // MLM head: logits = z2 * tok_emb^T + out_bias, decoder tied to the token
  // embedding so its gradient accumulates into tok_emb.
  if (heads.mlm != nullptr && heads.mlm->rows() > 0) {
    const Mat<T>& dl = *heads.mlm;
    grads.mlm_out_b.row(0).array() += dl.array().colwise().sum();
    grads.tok_emb.noalias() += dl.transpose() * cache.mlm_z2;
    Mat<T> d_z2 = dl * params.tok_emb;
    Mat<T> d_gelu = layer_norm_backward(d_z2, cache.mlm_ln, params.mlm_ln_g, grads.mlm_ln_g,
                                        grads.mlm_ln_b);
    Mat<T> d_z1 =
        d_gelu.array() * cache.mlm_z1.unaryExpr([](T x) { return gelu_grad_scalar(x); }).array();
    grads.mlm_w.noalias() += cache.mlm_z0.transpose() * d_z1;
    grads.mlm_b.row(0).array() += d_z1.array().colwise().sum();
    Mat<T> d_z0 = d_z1 * params.mlm_w.transpose();
    for (Eigen::Index m = 0; m < d_z0.rows(); ++m) {
      d_seq.row(out.mlm_positions[static_cast<size_t>(m)]) += d_z0.row(m);
    }
  }

  // QA head: per-position two-way projection of the sequence output.
  if (heads.qa_start != nullptr || heads.qa_end != nullptr) {
    Mat<T> d_span = Mat<T>::Zero(N, 2);
    for (int32_t b = 0; b < B; ++b) {
      for (int32_t s = 0; s < S; ++s) {
        if (heads.qa_start != nullptr) d_span(int64_t{b} * S + s, 0) = (*heads.qa_start)(b, s);
        if (heads.qa_end != nullptr) d_span(int64_t{b} * S + s, 1) = (*heads.qa_end)(b, s);
      }
    }
    grads.qa_w.noalias() += out.sequence_output.transpose() * d_span;
    grads.qa_b.row(0).array() += d_span.array().colwise().sum();
    d_seq.noalias() += d_span * params.qa_w.transpose();
  }

  if (heads.nsp != nullptr) {
    grads.nsp_w.noalias() += out.pooled.transpose() * (*heads.nsp);
    grads.nsp_b.row(0).array() += heads.nsp->array().colwise().sum();
    d_pooled.noalias() += (*heads.nsp) * params.nsp_w.transpose();
  }

  if (heads.cls != nullptr) {
    grads.cls_w.noalias() += cache.pooled_dropped.transpose() * (*heads.cls);
    grads.cls_b.row(0).array() += heads.cls->array().colwise().sum();
    Mat<T> d_dropped = (*heads.cls) * params.cls_w.transpose();
    if (cache.pooled_drop_mask.size() > 0) {
      d_dropped.array() *= cache.pooled_drop_mask.array();
    }
    d_pooled += d_dropped;
  }

  // Pooler: pooled = tanh(cls_row * W + b).
  if (d_pooled.squaredNorm() > 0 || heads.nsp != nullptr || heads.cls != nullptr) {
    Mat<T> d_pre = d_pooled.array() * (1 - out.pooled.array().square());
    Mat<T> cls_rows(B, H);
    for (int32_t b = 0; b < B; ++b) cls_rows.row(b) = out.sequence_output.row(int64_t{b} * S);
    grads.pooler_w.noalias() += cls_rows.transpose() * d_pre;
    grads.pooler_b.row(0).array() += d_pre.array().colwise().sum();
    Mat<T> d_cls_rows = d_pre * params.pooler_w.transpose();
    for (int32_t b = 0; b < B; ++b) d_seq.row(int64_t{b} * S) += d_cls_rows.row(b);
  }

  // Encoder layers in reverse.
  const T scale = static_cast<T>(1) / std::sqrt(static_cast<T>(dh));
  Mat<T> d_hidden = std::move(d_seq);
  for (int32_t l = config.num_layers - 1; l >= 0; --l) {
    const LayerParams<T>& lp = params.layers[static_cast<size_t>(l)];
    LayerParams<T>& lg = grads.layers[static_cast<size_t>(l)];
    const LayerCache<T>& lc = cache.layers[static_cast<size_t>(l)];

    Mat<T> d_res2 =
        layer_norm_backward(d_hidden, lc.ln_ffn, lp.ln_ffn_g, lg.ln_ffn_g, lg.ln_ffn_b);
    Mat<T> d_ffn_out = d_res2;  // branch
    Mat<T> d_n1 = std::move(d_res2);
    if (training) d_ffn_out.array() *= lc.ffn_drop_mask.array();
    lg.ffn_out_w.noalias() += lc.ffn_act.transpose() * d_ffn_out;
    lg.ffn_out_b.row(0).array() += d_ffn_out.array().colwise().sum();
    Mat<T> d_act = d_ffn_out * lp.ffn_out_w.transpose();
    Mat<T> d_pre =
        d_act.array() * lc.ffn_pre.unaryExpr([](T x) { return gelu_grad_scalar(x); }).array();
    lg.ffn_in_w.noalias() += lc.n1.transpose() * d_pre;
    lg.ffn_in_b.row(0).array() += d_pre.array().colwise().sum();
    d_n1.noalias() += d_pre * lp.ffn_in_w.transpose();

    Mat<T> d_res1 = layer_norm_backward(d_n1, lc.ln_attn, lp.ln_attn_g, lg.ln_attn_g,
                                        lg.ln_attn_b);
    Mat<T> d_proj = d_res1;  // branch
    Mat<T> d_input = std::move(d_res1);
    if (training) d_proj.array() *= lc.attn_drop_mask.array();
    lg.attn_out_w.noalias() += lc.ctx.transpose() * d_proj;
    lg.attn_out_b.row(0).array() += d_proj.array().colwise().sum();
    Mat<T> d_ctx = d_proj * lp.attn_out_w.transpose();

    Mat<T> d_q = Mat<T>::Zero(N, H), d_k = Mat<T>::Zero(N, H), d_v = Mat<T>::Zero(N, H);
    for (int32_t b = 0; b < B; ++b) {
      for (int32_t h = 0; h < A; ++h) {
        const Mat<T>& attn = lc.attn[static_cast<size_t>(b) * A + h];
        const auto qb = lc.q.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        const auto kb = lc.k.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        const auto vb = lc.v.block(int64_t{b} * S, int64_t{h} * dh, S, dh);
        const auto d_ctx_b = d_ctx.block(int64_t{b} * S, int64_t{h} * dh, S, dh);

        Mat<T> d_attn = d_ctx_b * vb.transpose();
        d_v.block(int64_t{b} * S, int64_t{h} * dh, S, dh).noalias() +=
            attn.transpose() * d_ctx_b;

        Mat<T> d_scores(S, S);
        for (int32_t r = 0; r < S; ++r) {
          const T inner = d_attn.row(r).dot(attn.row(r));
          d_scores.row(r) = attn.row(r).array() * (d_attn.row(r).array() - inner);
        }
        d_q.block(int64_t{b} * S, int64_t{h} * dh, S, dh).noalias() += scale * (d_scores * kb);
        d_k.block(int64_t{b} * S, int64_t{h} * dh, S, dh).noalias() +=
            scale * (d_scores.transpose() * qb);
      }
    }

    lg.q_w.noalias() += lc.input.transpose() * d_q;
    lg.q_b.row(0).array() += d_q.array().colwise().sum();
    lg.k_w.noalias() += lc.input.transpose() * d_k;
    lg.k_b.row(0).array() += d_k.array().colwise().sum();
    lg.v_w.noalias() += lc.input.transpose() * d_v;
    lg.v_b.row(0).array() += d_v.array().colwise().sum();
    d_input.noalias() += d_q * lp.q_w.transpose();
    d_input.noalias() += d_k * lp.k_w.transpose();
    d_input.noalias() += d_v * lp.v_w.transpose();
    d_hidden = std::move(d_input);
  }

  // Embeddings.
  if (training) d_hidden.array() *= cache.emb_drop_mask.array();
  Mat<T> d_emb_sum =
      layer_norm_backward(d_hidden, cache.emb_ln, params.emb_ln_g, grads.emb_ln_g, grads.emb_ln_b);
  for (int64_t i = 0; i < N; ++i) {
    const int32_t tok = batch.token_ids[static_cast<size_t>(i)];
    const int32_t seg = batch.segment_ids[static_cast<size_t>(i)];
    const int32_t pos = static_cast<int32_t>(i % S);
    grads.tok_emb.row(tok) += d_emb_sum.row(i);
    grads.pos_emb.row(pos) += d_emb_sum.row(i);
    grads.seg_emb.row(seg) += d_emb_sum.row(i);
  }
}

// ---------------------------------------------------------------------------
// Convenience: forward + loss + backward in one call.

template <class T>
struct StepLoss {
  T total = 0;
  T mlm = 0;
  T nsp = 0;
};

template <class T>
StepLoss<T> loss_and_gradients(const ModelConfig& config, const Parameters<T>& params,
                               const Batch& batch, Task task, Parameters<T>& grads,
                               Rng* dropout_rng = nullptr) {
  grads.set_zero();
  Cache<T> cache;
  ForwardOutput<T> out = forward(config, params, batch, task, &cache, dropout_rng);
  StepLoss<T> result;
  HeadGrads<T> heads;
  Mat<T> d_mlm, d_nsp, d_cls, d_qa_start, d_qa_end;
  if (task == Task::kPretrain) {
    const PretrainLoss<T> loss = mlm_nsp_loss(out, batch, &d_mlm, &d_nsp);
    result.total = loss.total;
    result.mlm = loss.mlm;
    result.nsp = loss.nsp;
    heads.mlm = &d_mlm;
    heads.nsp = &d_nsp;
  } else if (task == Task::kClassification) {
    result.total = classification_loss(out, batch, &d_cls);
    heads.cls = &d_cls;
  } else {
    result.total = qa_loss(out, batch, &d_qa_start, &d_qa_end);
    heads.qa_start = &d_qa_start;
    heads.qa_end = &d_qa_end;
  }
  backward(config, params, batch, cache, out, heads, grads);
  return result;
}

}  // namespace tunlm
