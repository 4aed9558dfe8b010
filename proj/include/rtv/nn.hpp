#pragma once

#include <string>
#include <vector>

#include "rtv/tensor.hpp"

namespace rtv {

// Dense layer y = xW + b. Registers its parameters under `name/W`, `name/b`.
struct Linear {
  Tensor W, b;
  bool has_bias = true;

  Linear() = default;
  Linear(ParamStore& params, const std::string& name, int in, int out, Rng& rng,
         bool bias = true);

  Tensor operator()(const Tensor& x) const;  // [m x in] -> [m x out]
  Tensor apply_vec(const Tensor& x) const;   // [in] -> [out]
};

// Single-layer bidirectional LSTM. Output is the forward and backward hidden
// states concatenated per position, width 2*hidden.
struct BiLstm {
  int in_dim = 0, hidden = 0;
  Tensor wx_f, wh_f, b_f, wx_b, wh_b, b_b;

  BiLstm() = default;
  BiLstm(ParamStore& params, const std::string& name, int in, int h, Rng& rng);

  Tensor operator()(const Tensor& seq) const;  // [L x in] -> [L x 2h]
};

// Multi-head scaled dot-product self-attention with optional causal mask.
struct MultiHeadSelfAttention {
  int dim = 0, n_heads = 0;
  Linear wq, wk, wv, wo;

  MultiHeadSelfAttention() = default;
  MultiHeadSelfAttention(ParamStore& params, const std::string& name, int d,
                         int heads, Rng& rng);

  Tensor operator()(const Tensor& h, bool causal) const;  // [L x d] -> [L x d]
};

struct LayerNorm {
  Tensor gain, bias;
  double eps = 1e-5;

  LayerNorm() = default;
  LayerNorm(ParamStore& params, const std::string& name, int d);

  Tensor operator()(const Tensor& x) const;
};

// Gated fusion o = g.r + (1-g).x with r = gelu(Wr[x;y;x.y;x-y]),
// g = sigmoid(Wg[x;y;x.y;x-y]). x and y must share width d.
struct FuseGate {
  Linear wr, wg;

  FuseGate() = default;
  FuseGate(ParamStore& params, const std::string& name, int d, Rng& rng);

  Tensor operator()(const Tensor& x, const Tensor& y) const;
};

}  // namespace rtv
