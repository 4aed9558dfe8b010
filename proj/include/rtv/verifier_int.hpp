#pragma once

#include <string>
#include <vector>

#include "rtv/nn.hpp"
#include "rtv/tensor.hpp"
#include "rtv/text.hpp"

namespace rtv {

struct InteractiveConfig {
  int word_dim = 300;
  int char_dim = 16;
  int char_hidden = 25;  // per direction; char vector width = 2*char_hidden
  int hidden = 300;      // per direction; token width = 2*hidden
  double dropout = 0.3;
  double learning_rate = 0.0008;
  int batch = 64;
};

// Cross-attention entailment model over (answer sentence, question).
class InteractiveVerifier {
 public:
  InteractiveVerifier(int vocab_size, InteractiveConfig cfg, uint64_t seed);

  // Context-encoded sentence and question, each [len x 2h].
  std::pair<Tensor, Tensor> encode_pair(const AnswerSentence& sentence,
                                        const std::vector<Token>& question,
                                        const Vocab& vocab, bool training,
                                        Rng& rng) const;

  // Pre-classifier pooled representation, width 8h.
  Tensor trunk(const AnswerSentence& sentence, const std::vector<Token>& question,
               const Vocab& vocab, bool training, Rng& rng) const;

  Tensor no_answer_prob(const AnswerSentence& sentence,
                        const std::vector<Token>& question, const Vocab& vocab,
                        bool training, Rng& rng) const;

  const InteractiveConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // Exposed for unit tests of individual layers.
  Tensor fuse_inference(const Tensor& x, const Tensor& y) const;
  Tensor intra_sentence(const Tensor& inference_aware, bool training, Rng& rng) const;
  Tensor embed(const std::vector<Token>& tokens, const std::vector<uint8_t>& flags,
               const Vocab& vocab) const;
  Tensor char_embed(const std::string& word) const;

 private:

  InteractiveConfig cfg_;
  ParamStore params_;
  Tensor word_emb_, char_emb_;
  BiLstm char_lstm_, ctx_lstm_, intra_lstm_, final_lstm_;
  FuseGate fuse_inf_, fuse_intra_;
  Linear proj_, out_;
};

// Dot-product alignment between encoded sentence and question. Returns
// (b, c, a): attended vectors for each side and the raw score matrix.
struct Alignment {
  Tensor b;  // [l_s x 2h] question evidence per sentence token
  Tensor c;  // [l_q x 2h] sentence evidence per question token
  Tensor a;  // [l_s x l_q]
};
Alignment align(const Tensor& s, const Tensor& q);

// Case-insensitive lexical match of question tokens against answer tokens;
// the question-side analogue of the sentence answer mask.
std::vector<uint8_t> question_answer_flags(const std::vector<Token>& question,
                                           const std::vector<Token>& answer);

}  // namespace rtv
