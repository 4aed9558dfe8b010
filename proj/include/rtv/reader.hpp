#pragma once

#include <optional>
#include <string>
#include <vector>

#include "rtv/nn.hpp"
#include "rtv/tensor.hpp"
#include "rtv/text.hpp"

namespace rtv {

struct ReaderConfig {
  int emb_dim = 100;
  int hidden = 64;  // per BiLSTM direction; model width d = 2*hidden
  double gamma = 0.3;
  double lambda = 1.0;
  int max_span = 15;  // W: spans longer than this score zero everywhere
  double dropout = 0.3;
  int batch = 48;
};

// Live-graph outputs of one reader forward pass.
struct ReaderForward {
  Tensor alpha, beta;              // head 1, shared-normalized with z
  Tensor alpha_tilde, beta_tilde;  // head 2, independent span loss
  Tensor z;                        // no-answer score
};

// Decoded, graph-free view of a forward pass.
struct ReaderOutput {
  std::vector<double> alpha, beta, alpha_tilde, beta_tilde;
  double z = 0.0;
  double na_prob = 0.0;
  std::vector<double> span_start_prob, span_end_prob;  // mean over both heads
  Span best_span{0, 0};
};

class ReaderModel {
 public:
  ReaderModel(int vocab_size, ReaderConfig cfg, uint64_t seed);

  ReaderForward forward(const Example& ex, const Vocab& vocab, bool training,
                        Rng& rng) const;

  // Question-aware passage and passage-aware question representations.
  std::pair<Tensor, Tensor> encode(const Example& ex, const Vocab& vocab,
                                   bool training, Rng& rng) const;

  const ReaderConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  struct PointerHead {
    Tensor w_summary;  // question-summary weight vector, [d x 1]
    Linear start_proj, end_proj;
    Tensor w_start, w_end;  // [d x 1]
  };

  // Exposed for unit tests of individual stages.
  Tensor summarize_question(const Tensor& v, const Tensor& w_summary) const;
  std::pair<Tensor, Tensor> pointer_head(const Tensor& u, const Tensor& t,
                                         const PointerHead& head) const;
  Tensor no_answer_score(const Tensor& u, const Tensor& t) const;
  const PointerHead& head1() const { return head1_; }
  const PointerHead& head2() const { return head2_; }

 private:
  ReaderConfig cfg_;
  ParamStore params_;
  Tensor embedding_;
  BiLstm enc1_, enc2_;
  FuseGate fuse_;
  PointerHead head1_, head2_;
  Linear z_proj_;
  Tensor w_z_;
};

// L_joint: shared softmax over the no-answer score and all valid spans.
Tensor joint_loss(const ReaderForward& fwd, const Example& ex, int max_span);

// L_indep-I over head 2, targeting the gold span (answerable) or the
// plausible span (unanswerable). Contributes zero when neither exists;
// `skipped` reports that case.
Tensor indep_span_loss(const ReaderForward& fwd, const Example& ex, int max_span,
                       bool* skipped = nullptr);

// L_indep-II: binary cross-entropy on sigmoid(z), target 1 for unanswerable.
Tensor indep_noanswer_loss(const ReaderForward& fwd, const Example& ex);

// L_joint + gamma * L_indep-I + lambda * L_indep-II. With gamma = lambda = 0
// this returns the joint loss tensor itself.
Tensor total_loss(const ReaderForward& fwd, const Example& ex,
                  const ReaderConfig& cfg);

ReaderOutput decode(const ReaderForward& fwd, int max_span);

}  // namespace rtv
