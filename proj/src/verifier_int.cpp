#include "rtv/verifier_int.hpp"

#include <cctype>
#include <stdexcept>

namespace rtv {

namespace {

std::string lower_copy(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::vector<uint8_t> question_answer_flags(const std::vector<Token>& question,
                                           const std::vector<Token>& answer) {
  std::vector<uint8_t> flags(question.size(), 0);
  for (size_t j = 0; j < question.size(); ++j) {
    std::string qw = lower_copy(question[j].text);
    for (const auto& a : answer)
      if (qw == lower_copy(a.text)) {
        flags[j] = 1;
        break;
      }
  }
  return flags;
}

Alignment align(const Tensor& s, const Tensor& q) {
  Alignment out;
  out.a = matmul(s, transpose(q));
  out.b = matmul(softmax(out.a, 1), q);
  out.c = matmul(transpose(softmax(out.a, 0)), s);
  return out;
}

InteractiveVerifier::InteractiveVerifier(int vocab_size, InteractiveConfig cfg,
                                         uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  int h2 = 2 * cfg.hidden;
  word_emb_ = params_.add("word_emb", glorot({vocab_size, cfg.word_dim},
                                             cfg.word_dim, cfg.word_dim, rng));
  char_emb_ = params_.add("char_emb", glorot({256, cfg.char_dim}, cfg.char_dim,
                                             cfg.char_dim, rng));
  char_lstm_ = BiLstm(params_, "char_lstm", cfg.char_dim, cfg.char_hidden, rng);
  int token_width = cfg.word_dim + 2 * cfg.char_hidden + 1;
  ctx_lstm_ = BiLstm(params_, "ctx_lstm", token_width, cfg.hidden, rng);
  fuse_inf_ = FuseGate(params_, "fuse_inf", h2, rng);
  intra_lstm_ = BiLstm(params_, "intra_lstm", h2, cfg.hidden, rng);
  fuse_intra_ = FuseGate(params_, "fuse_intra", h2, rng);
  final_lstm_ = BiLstm(params_, "final_lstm", 2 * h2, cfg.hidden, rng);
  proj_ = Linear(params_, "proj", 4 * h2, cfg.hidden, rng);
  out_ = Linear(params_, "out", cfg.hidden, 2, rng);
}

Tensor InteractiveVerifier::char_embed(const std::string& word) const {
  std::vector<int> ids;
  for (unsigned char c : word) ids.push_back(static_cast<int>(c));
  Tensor chars = char_lstm_(gather_rows(char_emb_, ids));
  int last = chars.dim(0) - 1;
  int ch = cfg_.char_hidden;
  // forward last state lives at the final position, backward at the first
  return concat({cols(row(chars, last), 0, ch), cols(row(chars, 0), ch, 2 * ch)});
}

Tensor InteractiveVerifier::embed(const std::vector<Token>& tokens,
                                  const std::vector<uint8_t>& flags,
                                  const Vocab& vocab) const {
  Tensor words = gather_rows(word_emb_, to_indices(tokens, vocab));
  std::vector<Tensor> rows_out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    double flag = i < flags.size() && flags[i] ? 1.0 : 0.0;
    rows_out.push_back(concat({row(words, static_cast<int>(i)),
                               char_embed(tokens[i].text),
                               Tensor::from({1}, {flag})}));
  }
  return stack_rows(rows_out);
}

std::pair<Tensor, Tensor> InteractiveVerifier::encode_pair(
    const AnswerSentence& sentence, const std::vector<Token>& question,
    const Vocab& vocab, bool training, Rng& rng) const {
  if (sentence.tokens.empty() || question.empty())
    throw std::invalid_argument("interactive verifier: empty sentence or question");
  auto qflags = question_answer_flags(question, answer_tokens(sentence));
  Tensor s_in = dropout(embed(sentence.tokens, sentence.answer_mask, vocab),
                        cfg_.dropout, training, rng);
  Tensor q_in = dropout(embed(question, qflags, vocab), cfg_.dropout, training, rng);
  return {ctx_lstm_(s_in), ctx_lstm_(q_in)};
}

Tensor InteractiveVerifier::fuse_inference(const Tensor& x, const Tensor& y) const {
  return fuse_inf_(x, y);
}

Tensor InteractiveVerifier::intra_sentence(const Tensor& inference_aware,
                                           bool training, Rng& rng) const {
  Tensor y = intra_lstm_(dropout(inference_aware, cfg_.dropout, training, rng));
  int l = y.dim(0);
  Tensor attended;
  if (l == 1) {
    attended = Tensor::zeros({1, y.dim(1)});
  } else {
    Tensor scores = matmul(y, transpose(y));
    std::vector<uint8_t> mask(static_cast<size_t>(l * l), 1);
    for (int i = 0; i < l; ++i) mask[static_cast<size_t>(i * l + i)] = 0;
    attended = matmul(masked_softmax(scores, mask, 1), y);
  }
  return fuse_intra_(y, attended);
}

Tensor InteractiveVerifier::trunk(const AnswerSentence& sentence,
                                  const std::vector<Token>& question,
                                  const Vocab& vocab, bool training, Rng& rng) const {
  auto [s, q] = encode_pair(sentence, question, vocab, training, rng);
  Alignment al = align(s, q);
  Tensor s_inf = fuse_inf_(s, al.b);
  Tensor q_inf = fuse_inf_(q, al.c);
  Tensor s_self = intra_sentence(s_inf, training, rng);
  Tensor q_self = intra_sentence(q_inf, training, rng);
  Tensor s_bar = final_lstm_(concat_cols({s_inf, s_self}));
  Tensor q_bar = final_lstm_(concat_cols({q_inf, q_self}));
  return concat({mean_over_rows(s_bar), max_over_rows(s_bar),
                 mean_over_rows(q_bar), max_over_rows(q_bar)});
}

Tensor InteractiveVerifier::no_answer_prob(const AnswerSentence& sentence,
                                           const std::vector<Token>& question,
                                           const Vocab& vocab, bool training,
                                           Rng& rng) const {
  Tensor pooled = trunk(sentence, question, vocab, training, rng);
  Tensor hidden = gelu(proj_.apply_vec(pooled));
  Tensor probs = softmax(out_.apply_vec(hidden), 1);
  return index(probs, 1);
}

}  // namespace rtv
