#include "rtv/reader.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace rtv {

namespace {

// [m x 1] matrix -> length-m vector
Tensor to_vec(const Tensor& col) { return row(transpose(col), 0); }

Tensor tile_rows(const Tensor& v, int m) {
  std::vector<Tensor> rows(static_cast<size_t>(m), v);
  return stack_rows(rows);
}

}  // namespace

ReaderModel::ReaderModel(int vocab_size, ReaderConfig cfg, uint64_t seed)
    : cfg_(cfg) {
  Rng rng(seed);
  int d = 2 * cfg.hidden;
  embedding_ = params_.add("embedding",
                           glorot({vocab_size, cfg.emb_dim}, cfg.emb_dim, cfg.emb_dim, rng));
  enc1_ = BiLstm(params_, "enc1", cfg.emb_dim, cfg.hidden, rng);
  fuse_ = FuseGate(params_, "fuse", d, rng);
  enc2_ = BiLstm(params_, "enc2", d, cfg.hidden, rng);

  auto make_head = [&](const std::string& name) {
    PointerHead h;
    h.w_summary = params_.add(name + "/w_summary", glorot({d, 1}, d, 1, rng));
    h.start_proj = Linear(params_, name + "/start", 2 * d, d, rng);
    h.w_start = params_.add(name + "/w_start", glorot({d, 1}, d, 1, rng));
    h.end_proj = Linear(params_, name + "/end", 3 * d, d, rng);
    h.w_end = params_.add(name + "/w_end", glorot({d, 1}, d, 1, rng));
    return h;
  };
  head1_ = make_head("head1");
  head2_ = make_head("head2");
  z_proj_ = Linear(params_, "noans", 3 * d, d, rng);
  w_z_ = params_.add("noans/w_z", glorot({d, 1}, d, 1, rng));
}

std::pair<Tensor, Tensor> ReaderModel::encode(const Example& ex, const Vocab& vocab,
                                              bool training, Rng& rng) const {
  if (ex.passage_tokens.empty() || ex.question_tokens.empty())
    throw std::invalid_argument("reader encode: empty passage or question in " + ex.id);
  Tensor p = gather_rows(embedding_, to_indices(ex.passage_tokens, vocab));
  Tensor q = gather_rows(embedding_, to_indices(ex.question_tokens, vocab));
  p = dropout(p, cfg_.dropout, training, rng);
  q = dropout(q, cfg_.dropout, training, rng);
  Tensor u0 = enc1_(p);
  Tensor v0 = enc1_(q);
  // bidirectional dot-product attention
  Tensor a = matmul(u0, transpose(v0));
  Tensor attended_q = matmul(softmax(a, 1), v0);             // per passage token
  Tensor attended_p = matmul(transpose(softmax(a, 0)), u0);  // per question token
  Tensor u1 = fuse_(u0, attended_q);
  Tensor v1 = fuse_(v0, attended_p);
  u1 = dropout(u1, cfg_.dropout, training, rng);
  v1 = dropout(v1, cfg_.dropout, training, rng);
  return {enc2_(u1), enc2_(v1)};
}

Tensor ReaderModel::summarize_question(const Tensor& v, const Tensor& w_summary) const {
  Tensor logits = to_vec(matmul(v, w_summary));
  Tensor probs = softmax(logits, 1);
  return row(matmul(stack_rows({probs}), v), 0);
}

std::pair<Tensor, Tensor> ReaderModel::pointer_head(const Tensor& u, const Tensor& t,
                                                    const PointerHead& head) const {
  int lp = u.dim(0);
  Tensor tt = tile_rows(t, lp);
  Tensor start_scores =
      to_vec(matmul(tanh(head.start_proj(concat_cols({u, tt}))), head.w_start));
  Tensor start_probs = softmax(start_scores, 1);
  Tensor t_prime = row(matmul(stack_rows({start_probs}), u), 0);
  Tensor end_scores = to_vec(matmul(
      tanh(head.end_proj(concat_cols({u, tt, tile_rows(t_prime, lp)}))), head.w_end));
  return {start_scores, end_scores};
}

Tensor ReaderModel::no_answer_score(const Tensor& u, const Tensor& t) const {
  Tensor pooled = concat({mean_over_rows(u), max_over_rows(u), t});
  Tensor hidden = gelu(z_proj_.apply_vec(pooled));
  return index(to_vec(matmul(stack_rows({hidden}), w_z_)), 0);
}

ReaderForward ReaderModel::forward(const Example& ex, const Vocab& vocab,
                                   bool training, Rng& rng) const {
  auto [u, v] = encode(ex, vocab, training, rng);
  Tensor t1 = summarize_question(v, head1_.w_summary);
  Tensor t2 = summarize_question(v, head2_.w_summary);
  ReaderForward fwd;
  std::tie(fwd.alpha, fwd.beta) = pointer_head(u, t1, head1_);
  std::tie(fwd.alpha_tilde, fwd.beta_tilde) = pointer_head(u, t2, head2_);
  fwd.z = no_answer_score(u, t1);
  return fwd;
}

// ---- losses ----

Tensor joint_loss(const ReaderForward& fwd, const Example& ex, int max_span) {
  Tensor logits = concat({fwd.z, span_logits(fwd.alpha, fwd.beta, max_span)});
  Tensor target;
  if (ex.is_answerable) {
    if (!ex.gold_span)
      throw std::invalid_argument("joint_loss: answerable example " + ex.id +
                                  " has no gold span");
    target = add(index(fwd.alpha, ex.gold_span->first),
                 index(fwd.beta, ex.gold_span->second));
  } else {
    target = fwd.z;
  }
  return sub(logsumexp(logits), target);
}

Tensor indep_span_loss(const ReaderForward& fwd, const Example& ex, int max_span,
                       bool* skipped) {
  std::optional<Span> span = ex.is_answerable ? ex.gold_span : ex.plausible_span;
  if (skipped) *skipped = !span.has_value();
  if (!span) return Tensor::scalar(0.0);
  Tensor logits = span_logits(fwd.alpha_tilde, fwd.beta_tilde, max_span);
  Tensor target = add(index(fwd.alpha_tilde, span->first),
                      index(fwd.beta_tilde, span->second));
  return sub(logsumexp(logits), target);
}

Tensor indep_noanswer_loss(const ReaderForward& fwd, const Example& ex) {
  Tensor s = sigmoid(fwd.z);
  Tensor p;  // probability assigned to the correct binary label
  if (ex.is_answerable) {
    p = sub(Tensor::scalar(1.0), s);
  } else {
    p = s;
  }
  return neg(log(clamp_min(p, 1e-12)));
}

Tensor total_loss(const ReaderForward& fwd, const Example& ex,
                  const ReaderConfig& cfg) {
  Tensor loss = joint_loss(fwd, ex, cfg.max_span);
  if (cfg.gamma > 0.0)
    loss = add(loss, scale(indep_span_loss(fwd, ex, cfg.max_span), cfg.gamma));
  if (cfg.lambda > 0.0)
    loss = add(loss, scale(indep_noanswer_loss(fwd, ex), cfg.lambda));
  return loss;
}

// ---- decoding ----

ReaderOutput decode(const ReaderForward& fwd, int max_span) {
  ReaderOutput out;
  out.alpha = fwd.alpha.values();
  out.beta = fwd.beta.values();
  out.alpha_tilde = fwd.alpha_tilde.values();
  out.beta_tilde = fwd.beta_tilde.values();
  out.z = fwd.z.item();

  auto soft = [](const std::vector<double>& x) {
    double m = -std::numeric_limits<double>::infinity();
    for (double v : x) m = std::max(m, v);
    double zsum = 0.0;
    for (double v : x) zsum += std::exp(v - m);
    std::vector<double> p(x.size());
    for (size_t i = 0; i < x.size(); ++i) p[i] = std::exp(x[i] - m) / zsum;
    return p;
  };
  auto sp1 = soft(out.alpha), sp2 = soft(out.alpha_tilde);
  auto ep1 = soft(out.beta), ep2 = soft(out.beta_tilde);
  size_t lp = out.alpha.size();
  out.span_start_prob.resize(lp);
  out.span_end_prob.resize(lp);
  for (size_t i = 0; i < lp; ++i) {
    out.span_start_prob[i] = 0.5 * (sp1[i] + sp2[i]);
    out.span_end_prob[i] = 0.5 * (ep1[i] + ep2[i]);
  }

  auto spans = enumerate_spans(static_cast<int>(lp), max_span);
  double best = -1.0;
  for (auto [i, j] : spans) {
    double score = out.span_start_prob[static_cast<size_t>(i)] *
                   out.span_end_prob[static_cast<size_t>(j)];
    if (score > best) {  // enumeration order breaks ties toward small (i, j)
      best = score;
      out.best_span = {i, j};
    }
  }

  // shared normalization of head 1 with z
  double m = out.z;
  for (auto [i, j] : spans)
    m = std::max(m, out.alpha[static_cast<size_t>(i)] + out.beta[static_cast<size_t>(j)]);
  double denom = std::exp(out.z - m);
  for (auto [i, j] : spans)
    denom += std::exp(out.alpha[static_cast<size_t>(i)] +
                      out.beta[static_cast<size_t>(j)] - m);
  out.na_prob = std::exp(out.z - m) / denom;
  return out;
}

}  // namespace rtv
