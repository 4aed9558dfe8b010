#include "rtv/verifier_seq.hpp"

#include <stdexcept>

namespace rtv {

SequentialInput serialize(const AnswerSentence& sentence,
                          const std::vector<Token>& question,
                          const std::vector<Token>& answer, const Vocab& vocab,
                          int max_position) {
  if (sentence.tokens.empty() || question.empty() || answer.empty())
    throw std::invalid_argument("serialize: empty sentence, question or answer");
  std::vector<int> s = to_indices(sentence.tokens, vocab);
  std::vector<int> q = to_indices(question, vocab);
  std::vector<int> a = to_indices(answer, vocab);

  SequentialInput input;
  // fixed framing: <s> S Q $ A </s>; on overflow the sentence loses tokens
  // from the left so the question and answer stay whole
  int fixed = 4 + static_cast<int>(q.size() + a.size());
  int s_keep = static_cast<int>(s.size());
  if (fixed + s_keep - 1 > max_position) {
    s_keep = max_position - fixed + 1;
    if (s_keep < 1)
      throw std::invalid_argument("serialize: question and answer alone exceed max position");
    input.truncated = true;
  }
  input.token_ids.push_back(Vocab::kStart);
  input.token_ids.insert(input.token_ids.end(), s.end() - s_keep, s.end());
  input.token_ids.insert(input.token_ids.end(), q.begin(), q.end());
  input.token_ids.push_back(Vocab::kDelim);
  input.token_ids.insert(input.token_ids.end(), a.begin(), a.end());
  input.token_ids.push_back(Vocab::kEnd);
  return input;
}

SequentialVerifier::SequentialVerifier(int vocab_size, GptConfig cfg, uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  token_emb_ = params_.add("token_emb", glorot({vocab_size, cfg.model_dim},
                                               cfg.model_dim, cfg.model_dim, rng));
  pos_emb_ = params_.add("pos_emb", glorot({cfg.max_position, cfg.model_dim},
                                           cfg.model_dim, cfg.model_dim, rng));
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string name = "block" + std::to_string(l);
    Block b;
    b.attn = MultiHeadSelfAttention(params_, name + "/attn", cfg.model_dim,
                                    cfg.n_heads, rng);
    b.norm1 = LayerNorm(params_, name + "/norm1", cfg.model_dim);
    b.ffn1 = Linear(params_, name + "/ffn1", cfg.model_dim, cfg.ffn_dim, rng);
    b.ffn2 = Linear(params_, name + "/ffn2", cfg.ffn_dim, cfg.model_dim, rng);
    b.norm2 = LayerNorm(params_, name + "/norm2", cfg.model_dim);
    blocks_.push_back(std::move(b));
  }
  classifier_ = Linear(params_, "classifier", cfg.model_dim, 2, rng, /*bias=*/false);
}

Tensor SequentialVerifier::trunk(const SequentialInput& input, bool training,
                                 Rng& rng) const {
  int L = static_cast<int>(input.token_ids.size());
  if (L > cfg_.max_position)
    throw std::invalid_argument("sequential verifier: input length " +
                                std::to_string(L) + " exceeds max position " +
                                std::to_string(cfg_.max_position));
  for (int id : input.token_ids)
    if (id < 0 || id >= token_emb_.dim(0))
      throw std::out_of_range("sequential verifier: token id " + std::to_string(id) +
                              " outside vocabulary");
  std::vector<int> positions(static_cast<size_t>(L));
  for (int i = 0; i < L; ++i) positions[static_cast<size_t>(i)] = i;
  Tensor x = add(gather_rows(token_emb_, input.token_ids),
                 gather_rows(pos_emb_, positions));
  x = dropout(x, cfg_.dropout, training, rng);
  for (const auto& b : blocks_) {
    Tensor attn_out = dropout(b.attn(x, /*causal=*/true), cfg_.dropout, training, rng);
    x = b.norm1(add(x, attn_out));
    Tensor ffn_out = dropout(b.ffn2(gelu(b.ffn1(x))), cfg_.dropout, training, rng);
    x = b.norm2(add(x, ffn_out));
  }
  return row(x, L - 1);
}

Tensor SequentialVerifier::no_answer_prob(const SequentialInput& input, bool training,
                                          Rng& rng) const {
  Tensor logits = classifier_.apply_vec(trunk(input, training, rng));
  Tensor probs = softmax(logits, 1);
  return index(probs, 1);  // class 1 = unanswerable
}

Tensor seq_loss(const Tensor& no_answer_prob, bool label_unanswerable) {
  Tensor p = label_unanswerable ? no_answer_prob
                                : sub(Tensor::scalar(1.0), no_answer_prob);
  return neg(log(clamp_min(p, 1e-12)));
}

}  // namespace rtv
