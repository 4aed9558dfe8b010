#pragma once

#include <string>
#include <vector>

#include "rtv/nn.hpp"
#include "rtv/tensor.hpp"
#include "rtv/text.hpp"

namespace rtv {

struct GptConfig {
  int n_layers = 2;
  int model_dim = 64;
  int n_heads = 4;
  int ffn_dim = 128;
  int max_position = 512;
  double dropout = 0.1;
  int batch = 32;
};

// Serialized <s> S Q $ A </s> verifier input.
struct SequentialInput {
  std::vector<int> token_ids;
  bool truncated = false;  // sentence cut from the left to fit max_position
};

SequentialInput serialize(const AnswerSentence& sentence,
                          const std::vector<Token>& question,
                          const std::vector<Token>& answer, const Vocab& vocab,
                          int max_position);

// Transformer-decoder sequence classifier. The final token's activation
// feeds a 2-way softmax whose "no answer" probability is returned.
class SequentialVerifier {
 public:
  SequentialVerifier(int vocab_size, GptConfig cfg, uint64_t seed);

  // Returns the pre-classifier final-token activation, width model_dim.
  Tensor trunk(const SequentialInput& input, bool training, Rng& rng) const;
  Tensor no_answer_prob(const SequentialInput& input, bool training, Rng& rng) const;

  const GptConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

 private:
  struct Block {
    MultiHeadSelfAttention attn;
    LayerNorm norm1, norm2;
    Linear ffn1, ffn2;
  };

  GptConfig cfg_;
  ParamStore params_;
  Tensor token_emb_, pos_emb_;
  std::vector<Block> blocks_;
  Linear classifier_;
};

// -log p(label), with the probability clamped at 1e-12.
Tensor seq_loss(const Tensor& no_answer_prob, bool label_unanswerable);

}  // namespace rtv
