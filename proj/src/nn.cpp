#include "rtv/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace rtv {

Linear::Linear(ParamStore& params, const std::string& name, int in, int out,
               Rng& rng, bool bias)
    : has_bias(bias) {
  W = params.add(name + "/W", glorot({in, out}, in, out, rng));
  if (bias) b = params.add(name + "/b", Tensor::zeros({out}));
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, W);
  return has_bias ? add_rowvec(y, b) : y;
}

Tensor Linear::apply_vec(const Tensor& x) const {
  Tensor y = row((*this)(stack_rows({x})), 0);
  return y;
}

BiLstm::BiLstm(ParamStore& params, const std::string& name, int in, int h, Rng& rng)
    : in_dim(in), hidden(h) {
  wx_f = params.add(name + "/wx_f", glorot({in, 4 * h}, in, 4 * h, rng));
  wh_f = params.add(name + "/wh_f", glorot({h, 4 * h}, h, 4 * h, rng));
  b_f = params.add(name + "/b_f", Tensor::zeros({4 * h}));
  wx_b = params.add(name + "/wx_b", glorot({in, 4 * h}, in, 4 * h, rng));
  wh_b = params.add(name + "/wh_b", glorot({h, 4 * h}, h, 4 * h, rng));
  b_b = params.add(name + "/b_b", Tensor::zeros({4 * h}));
}

namespace {

// One direction of an LSTM over `seq`, iterating positions in `order`.
// Returns hidden states indexed by original position.
std::vector<Tensor> lstm_pass(const Tensor& seq, const std::vector<int>& order,
                              const Tensor& wx, const Tensor& wh, const Tensor& b,
                              int h) {
  std::vector<Tensor> hs(order.size());
  Tensor hprev = Tensor::zeros({1, h});
  Tensor cprev = Tensor::zeros({1, h});
  for (int t : order) {
    Tensor x = stack_rows({row(seq, t)});
    Tensor gates = add_rowvec(add(matmul(x, wx), matmul(hprev, wh)), b);
    Tensor gi = sigmoid(cols(gates, 0, h));
    Tensor gf = sigmoid(cols(gates, h, 2 * h));
    Tensor go = sigmoid(cols(gates, 2 * h, 3 * h));
    Tensor gc = tanh(cols(gates, 3 * h, 4 * h));
    Tensor c = add(mul(gf, cprev), mul(gi, gc));
    Tensor hh = mul(go, tanh(c));
    hs[static_cast<size_t>(t)] = row(hh, 0);
    hprev = hh;
    cprev = c;
  }
  return hs;
}

}  // namespace

Tensor BiLstm::operator()(const Tensor& seq) const {
  if (seq.rank() != 2 || seq.dim(0) < 1)
    throw std::invalid_argument("BiLstm: empty or non-matrix input");
  if (seq.dim(1) != in_dim)
    throw std::invalid_argument("BiLstm: input width " + std::to_string(seq.dim(1)) +
                                ", expected " + std::to_string(in_dim));
  int L = seq.dim(0);
  std::vector<int> fwd(static_cast<size_t>(L)), bwd(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t) {
    fwd[static_cast<size_t>(t)] = t;
    bwd[static_cast<size_t>(t)] = L - 1 - t;
  }
  auto hf = lstm_pass(seq, fwd, wx_f, wh_f, b_f, hidden);
  auto hb = lstm_pass(seq, bwd, wx_b, wh_b, b_b, hidden);
  std::vector<Tensor> out(static_cast<size_t>(L));
  for (int t = 0; t < L; ++t)
    out[static_cast<size_t>(t)] = concat({hf[static_cast<size_t>(t)], hb[static_cast<size_t>(t)]});
  return stack_rows(out);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(ParamStore& params,
                                               const std::string& name, int d,
                                               int heads, Rng& rng)
    : dim(d), n_heads(heads) {
  if (heads <= 0 || d % heads != 0)
    throw std::invalid_argument("MultiHeadSelfAttention: dim " + std::to_string(d) +
                                " not divisible by " + std::to_string(heads) + " heads");
  wq = Linear(params, name + "/wq", d, d, rng);
  wk = Linear(params, name + "/wk", d, d, rng);
  wv = Linear(params, name + "/wv", d, d, rng);
  wo = Linear(params, name + "/wo", d, d, rng);
}

Tensor MultiHeadSelfAttention::operator()(const Tensor& h, bool causal) const {
  int L = h.dim(0);
  int dk = dim / n_heads;
  Tensor q = wq(h), k = wk(h), v = wv(h);
  std::vector<uint8_t> mask;
  if (causal) {
    mask.assign(static_cast<size_t>(L * L), 0);
    for (int i = 0; i < L; ++i)
      for (int j = 0; j <= i; ++j) mask[static_cast<size_t>(i * L + j)] = 1;
  }
  std::vector<Tensor> heads;
  for (int head = 0; head < n_heads; ++head) {
    Tensor qh = cols(q, head * dk, (head + 1) * dk);
    Tensor kh = cols(k, head * dk, (head + 1) * dk);
    Tensor vh = cols(v, head * dk, (head + 1) * dk);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(dk));
    Tensor attn = masked_softmax(scores, mask, 1);
    heads.push_back(matmul(attn, vh));
  }
  return wo(concat_cols(heads));
}

LayerNorm::LayerNorm(ParamStore& params, const std::string& name, int d) {
  gain = params.add(name + "/gain", Tensor::from({d}, std::vector<double>(static_cast<size_t>(d), 1.0)));
  bias = params.add(name + "/bias", Tensor::zeros({d}));
}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gain, bias, eps);
}

FuseGate::FuseGate(ParamStore& params, const std::string& name, int d, Rng& rng) {
  wr = Linear(params, name + "/wr", 4 * d, d, rng);
  wg = Linear(params, name + "/wg", 4 * d, d, rng);
}

Tensor FuseGate::operator()(const Tensor& x, const Tensor& y) const {
  if (x.shape() != y.shape())
    throw std::invalid_argument("FuseGate: operand shapes differ");
  bool vec = x.rank() == 1;
  Tensor xm = vec ? stack_rows({x}) : x;
  Tensor ym = vec ? stack_rows({y}) : y;
  Tensor feat = concat_cols({xm, ym, mul(xm, ym), sub(xm, ym)});
  Tensor r = gelu(wr(feat));
  Tensor g = sigmoid(wg(feat));
  Tensor ones = Tensor::from(g.shape(), std::vector<double>(static_cast<size_t>(g.size()), 1.0));
  Tensor o = add(mul(g, r), mul(sub(ones, g), xm));
  return vec ? row(o, 0) : o;
}

}  // namespace rtv
