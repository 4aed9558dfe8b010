#include "rtv/verifier_hybrid.hpp"

#include <stdexcept>

#include "rtv/checkpoint.hpp"

namespace rtv {

namespace {

std::map<std::string, double> seq_meta(const GptConfig& c) {
  return {{"arch", 1.0},
          {"n_layers", static_cast<double>(c.n_layers)},
          {"model_dim", static_cast<double>(c.model_dim)},
          {"n_heads", static_cast<double>(c.n_heads)},
          {"ffn_dim", static_cast<double>(c.ffn_dim)},
          {"max_position", static_cast<double>(c.max_position)}};
}

std::map<std::string, double> int_meta(const InteractiveConfig& c) {
  return {{"arch", 2.0},
          {"word_dim", static_cast<double>(c.word_dim)},
          {"char_dim", static_cast<double>(c.char_dim)},
          {"char_hidden", static_cast<double>(c.char_hidden)},
          {"hidden", static_cast<double>(c.hidden)}};
}

void check_meta(const std::map<std::string, double>& expected,
                const std::map<std::string, double>& actual,
                const std::string& path) {
  std::string diffs;
  for (const auto& [key, val] : expected) {
    auto it = actual.find(key);
    if (it == actual.end() || it->second != val)
      diffs += (diffs.empty() ? "" : ", ") + key;
  }
  if (!diffs.empty())
    throw std::runtime_error("incompatible checkpoint " + path +
                             ": differing fields [" + diffs + "]");
}

}  // namespace

void save_seq_checkpoint(const std::string& path, const SequentialVerifier& model) {
  save_checkpoint(path, model.params(), seq_meta(model.config()));
}

void save_int_checkpoint(const std::string& path, const InteractiveVerifier& model) {
  save_checkpoint(path, model.params(), int_meta(model.config()));
}

HybridVerifier::HybridVerifier(int vocab_size, GptConfig seq_cfg,
                               InteractiveConfig int_cfg, uint64_t seed) {
  Rng rng(seed);
  seq_ = std::make_unique<SequentialVerifier>(vocab_size, seq_cfg, rng.next_u64());
  int_ = std::make_unique<InteractiveVerifier>(vocab_size, int_cfg, rng.next_u64());
  // Mirror trunk parameters into the unified store so one optimizer drives
  // the whole model. The sub-models' own classifier heads stay out: the
  // hybrid forward never touches them.
  for (const auto& [name, t] : seq_->params().items())
    if (name != "classifier/W") params_.add("seq/" + name, t);
  for (const auto& [name, t] : int_->params().items())
    if (name.rfind("proj/", 0) != 0 && name.rfind("out/", 0) != 0)
      params_.add("int/" + name, t);
  proj_ = Linear(params_, "unified/proj", joint_width(), int_cfg.hidden, rng);
  out_ = Linear(params_, "unified/out", int_cfg.hidden, 2, rng);
}

int HybridVerifier::joint_width() const {
  return seq_->config().model_dim + 8 * int_->config().hidden;
}

void HybridVerifier::init_from_pretrained(const std::string& seq_ckpt_path,
                                          const std::string& int_ckpt_path) {
  Checkpoint seq_ckpt = load_checkpoint(seq_ckpt_path);
  Checkpoint int_ckpt = load_checkpoint(int_ckpt_path);
  check_meta(seq_meta(seq_->config()), seq_ckpt.meta(), seq_ckpt_path);
  check_meta(int_meta(int_->config()), int_ckpt.meta(), int_ckpt_path);
  restore_params(seq_->params(), seq_ckpt);
  restore_params(int_->params(), int_ckpt);
}

Tensor HybridVerifier::no_answer_prob(const AnswerSentence& sentence,
                                      const std::vector<Token>& question,
                                      const Vocab& vocab, int max_position,
                                      bool training, Rng& rng) const {
  SequentialInput input =
      serialize(sentence, question, answer_tokens(sentence), vocab, max_position);
  Tensor seq_vec = seq_->trunk(input, training, rng);
  Tensor int_vec = int_->trunk(sentence, question, vocab, training, rng);
  Tensor joint = concat({seq_vec, int_vec});
  Tensor hidden = gelu(proj_.apply_vec(joint));
  Tensor probs = softmax(out_.apply_vec(hidden), 1);
  return index(probs, 1);
}

}  // namespace rtv
