// SPDX-License-Identifier: Apache-2.0
#include "model.hpp"

namespace tunlm {

void ModelConfig::validate() const {
  if (num_layers < 0) throw std::invalid_argument("num_layers must be non-negative");
  if (hidden_size <= 0 || num_heads <= 0 || hidden_size % num_heads != 0) {
    throw std::invalid_argument("hidden_size must be a positive multiple of num_heads");
  }
  if (intermediate_size < hidden_size) {
    throw std::invalid_argument("intermediate_size must be at least hidden_size");
  }
  if (vocab_size < Vocab::kNumSpecials) {
    throw std::invalid_argument("vocab_size must cover the special tokens");
  }
  if (max_positions <= 0) throw std::invalid_argument("max_positions must be positive");
  if (num_segments != 2) throw std::invalid_argument("num_segments is fixed at 2");
  if (dropout_prob < 0.0 || dropout_prob >= 1.0) {
    throw std::invalid_argument("dropout_prob must lie in [0, 1)");
  }
}

ModelConfig ModelConfig::base(int32_t vocab_size) {
  ModelConfig c;
  c.vocab_size = vocab_size;
  return c;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.num_layers = 2;
  c.hidden_size = 64;
  c.num_heads = 2;
  c.intermediate_size = 256;
  c.vocab_size = 1000;
  c.max_positions = 128;
  return c;
}

int64_t param_count(const ModelConfig& c) {
  const int64_t H = c.hidden_size;
  const int64_t V = c.vocab_size;
  const int64_t P = c.max_positions;
  const int64_t L = c.num_layers;
  const int64_t I = c.intermediate_size;
  const int64_t G = c.num_segments;
  const int64_t embeddings = V * H + P * H + G * H + 2 * H;
  const int64_t per_layer = 4 * H * H + 4 * H   // q/k/v/out projections
                            + H * I + I         // ffn in
                            + I * H + H         // ffn out
                            + 4 * H;            // two layer norms
  const int64_t pooler = H * H + H;
  const int64_t mlm_head = H * H + H + 2 * H + V;  // decoder tied to tok_emb
  const int64_t nsp_head = 2 * H + 2;
  const int64_t cls_head = 2 * H + 2;
  const int64_t qa_head = 2 * H + 2;
  return embeddings + L * per_layer + pooler + mlm_head + nsp_head + cls_head + qa_head;
}

void Batch::add_input(const EncodedInput& input) {
  if (batch_size == 0) {
    seq_len = input.seq_len();
  } else if (input.seq_len() != seq_len) {
    throw std::invalid_argument("all inputs in a batch must share one sequence length");
  }
  token_ids.insert(token_ids.end(), input.token_ids.begin(), input.token_ids.end());
  segment_ids.insert(segment_ids.end(), input.segment_ids.begin(), input.segment_ids.end());
  attention_mask.insert(attention_mask.end(), input.attention_mask.begin(),
                        input.attention_mask.end());
  ++batch_size;
}

}  // namespace tunlm
