#pragma once

#include <memory>
#include <string>

#include "rtv/verifier_int.hpp"
#include "rtv/verifier_seq.hpp"

namespace rtv {

// Model joining the sequential and interactive trunks under one classifier.
// Trunk parameters are initialized from pretrained checkpoints and stay
// trainable; the unified head is fresh.
class HybridVerifier {
 public:
  HybridVerifier(int vocab_size, GptConfig seq_cfg, InteractiveConfig int_cfg,
                 uint64_t seed);

  // Load both trunks from checkpoints written by the individual models.
  // Configuration mismatches raise an error listing the differing fields.
  void init_from_pretrained(const std::string& seq_ckpt_path,
                            const std::string& int_ckpt_path);

  Tensor no_answer_prob(const AnswerSentence& sentence,
                        const std::vector<Token>& question, const Vocab& vocab,
                        int max_position, bool training, Rng& rng) const;

  // All parameters (both trunks plus the unified head) in one store, for
  // the optimizer and for single-file checkpoints.
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  SequentialVerifier& seq() { return *seq_; }
  InteractiveVerifier& interactive() { return *int_; }
  int joint_width() const;

 private:
  ParamStore params_;
  std::unique_ptr<SequentialVerifier> seq_;
  std::unique_ptr<InteractiveVerifier> int_;
  Linear proj_, out_;
};

// Save a trunk checkpoint with its config recorded as meta entries.
void save_seq_checkpoint(const std::string& path, const SequentialVerifier& model);
void save_int_checkpoint(const std::string& path, const InteractiveVerifier& model);

}  // namespace rtv
