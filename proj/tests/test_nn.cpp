#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "rtv/nn.hpp"

using namespace rtv;
using rtvtest::max_grad_rel_err;

namespace {

Tensor randt(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.raw()) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("linear layer applies xW + b") {
  Rng rng(1);
  ParamStore ps;
  Linear lin(ps, "lin", 2, 3, rng);
  lin.W.raw() = {1, 2, 3, 4, 5, 6};
  lin.b.raw() = {10, 20, 30};
  Tensor y = lin(Tensor::from({1, 2}, {1, 1}));
  CHECK(y.values() == std::vector<double>{15, 27, 39});
  Tensor yv = lin.apply_vec(Tensor::from({2}, {1, 1}));
  CHECK(yv.values() == std::vector<double>{15, 27, 39});
  CHECK(ps.has("lin/W"));
  CHECK(ps.has("lin/b"));
}

TEST_CASE("bilstm shapes and the L=1 case") {
  Rng rng(2);
  ParamStore ps;
  BiLstm lstm(ps, "l", 4, 3, rng);
  Tensor one = lstm(randt({1, 4}, rng));
  CHECK(one.shape() == Shape{1, 6});
  Tensor three = lstm(randt({3, 4}, rng));
  CHECK(three.shape() == Shape{3, 6});
  CHECK_THROWS_AS(lstm(randt({2, 5}, rng)), std::invalid_argument);
}

TEST_CASE("bilstm with zero parameters outputs zero") {
  Rng rng(3);
  ParamStore ps;
  BiLstm lstm(ps, "l", 2, 2, rng);
  for (const auto& [name, t] : ps.items()) {
    Tensor h = t;
    h.raw().assign(h.raw().size(), 0.0);
  }
  Tensor y = lstm(randt({4, 2}, rng));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("reversing a bilstm input swaps its directional halves") {
  Rng rng(4);
  ParamStore ps;
  // same parameters for both directions so reversal is an exact symmetry
  BiLstm lstm(ps, "l", 3, 2, rng);
  lstm.wx_b.raw() = lstm.wx_f.values();
  lstm.wh_b.raw() = lstm.wh_f.values();
  lstm.b_b.raw() = lstm.b_f.values();
  Tensor x = randt({3, 3}, rng);
  std::vector<double> rev_vals(9);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      rev_vals[static_cast<size_t>((2 - i) * 3 + j)] = x.at(i, j);
  Tensor y = lstm(x);
  Tensor yr = lstm(Tensor::from({3, 3}, rev_vals));
  // forward half at position t == backward half at mirrored position
  for (int t = 0; t < 3; ++t)
    for (int j = 0; j < 2; ++j) {
      CHECK(y.at(t, j) == doctest::Approx(yr.at(2 - t, 2 + j)).epsilon(1e-12));
      CHECK(y.at(t, 2 + j) == doctest::Approx(yr.at(2 - t, j)).epsilon(1e-12));
    }
}

TEST_CASE("bilstm gradients pass the finite-difference check") {
  Rng rng(5);
  ParamStore ps;
  BiLstm lstm(ps, "l", 3, 2, rng);
  Tensor x = randt({3, 3}, rng);
  Rng coords(6);
  auto leaves = rtvtest::store_tensors(ps);
  leaves.push_back(x);
  CHECK(max_grad_rel_err([&] { return sum(mul(lstm(x), lstm(x))); }, leaves, 100,
                         coords) < 1e-4);
}

TEST_CASE("self-attention with one token reduces to wo(wv(h))") {
  Rng rng(7);
  ParamStore ps;
  MultiHeadSelfAttention attn(ps, "a", 4, 2, rng);
  Tensor h = randt({1, 4}, rng);
  Tensor y = attn(h, true);
  Tensor expect = attn.wo(attn.wv(h));
  for (int j = 0; j < 4; ++j)
    CHECK(y.at(0, j) == doctest::Approx(expect.at(0, j)).epsilon(1e-12));
}

TEST_CASE("causal attention ignores future positions") {
  Rng rng(8);
  ParamStore ps;
  MultiHeadSelfAttention attn(ps, "a", 4, 2, rng);
  for (int L = 2; L <= 8; ++L) {
    Tensor x = randt({L, 4}, rng);
    Tensor y = attn(x, true);
    for (int t = 0; t + 1 < L; ++t) {
      std::vector<double> perturbed = x.values();
      for (int j = 0; j < 4; ++j)
        perturbed[static_cast<size_t>((t + 1) * 4 + j)] += rng.uniform(0.5, 1.5);
      Tensor y2 = attn(Tensor::from({L, 4}, perturbed), true);
      for (int s = 0; s <= t; ++s)
        for (int j = 0; j < 4; ++j) CHECK(y.at(s, j) == y2.at(s, j));
    }
  }
}

TEST_CASE("two heads match a per-head single-head reference") {
  Rng rng(9);
  ParamStore ps;
  MultiHeadSelfAttention attn(ps, "a", 4, 2, rng);
  Tensor h = randt({3, 4}, rng);
  Tensor q = attn.wq(h), k = attn.wk(h), v = attn.wv(h);
  std::vector<Tensor> heads;
  for (int head = 0; head < 2; ++head) {
    Tensor qh = cols(q, head * 2, head * 2 + 2);
    Tensor kh = cols(k, head * 2, head * 2 + 2);
    Tensor vh = cols(v, head * 2, head * 2 + 2);
    Tensor scores = scale(matmul(qh, transpose(kh)), 1.0 / std::sqrt(2.0));
    heads.push_back(matmul(softmax(scores, 1), vh));
  }
  Tensor expect = attn.wo(concat_cols(heads));
  Tensor y = attn(h, false);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(y.at(i, j) == doctest::Approx(expect.at(i, j)).epsilon(1e-12));
}

TEST_CASE("attention dim must divide into heads") {
  Rng rng(10);
  ParamStore ps;
  CHECK_THROWS_AS(MultiHeadSelfAttention(ps, "bad", 5, 2, rng),
                  std::invalid_argument);
}

TEST_CASE("attention gradients pass the finite-difference check") {
  Rng rng(11);
  ParamStore ps;
  MultiHeadSelfAttention attn(ps, "a", 4, 2, rng);
  Tensor x = randt({3, 4}, rng);
  Rng coords(12);
  auto leaves = rtvtest::store_tensors(ps);
  leaves.push_back(x);
  CHECK(max_grad_rel_err([&] { return sum(tanh(attn(x, true))); }, leaves, 100,
                         coords) < 1e-4);
}

TEST_CASE("layer norm standardizes rows then rescales") {
  Rng rng(13);
  ParamStore ps;
  LayerNorm ln(ps, "ln", 4);
  Tensor x = randt({2, 4}, rng, -3, 3);
  Tensor y = ln(x);  // fresh gain=1, bias=0
  for (int i = 0; i < 2; ++i) {
    double mu = 0.0, var = 0.0;
    for (int j = 0; j < 4; ++j) mu += y.at(i, j);
    mu /= 4;
    for (int j = 0; j < 4; ++j) var += (y.at(i, j) - mu) * (y.at(i, j) - mu);
    CHECK(mu == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(var / 4 == doctest::Approx(1.0).epsilon(1e-3));
  }
}

TEST_CASE("fuse gate closed and open limits") {
  Rng rng(14);
  ParamStore ps;
  FuseGate fuse(ps, "f", 3, rng);
  Tensor x = randt({2, 3}, rng), y = randt({2, 3}, rng);

  fuse.wg.W.raw().assign(fuse.wg.W.raw().size(), 0.0);
  fuse.wg.b.raw().assign(3, -30.0);  // gate ~0: residual passthrough
  Tensor closed = fuse(x, y);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(closed.at(i, j) == doctest::Approx(x.at(i, j)).epsilon(1e-9));

  fuse.wg.b.raw().assign(3, 30.0);  // gate ~1: pure fusion r
  Tensor feat = concat_cols({x, y, mul(x, y), sub(x, y)});
  Tensor r = gelu(fuse.wr(feat));
  Tensor open = fuse(x, y);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(open.at(i, j) == doctest::Approx(r.at(i, j)).epsilon(1e-9));
}

TEST_CASE("fuse gate output lies between x and r elementwise") {
  Rng rng(15);
  ParamStore ps;
  FuseGate fuse(ps, "f", 3, rng);
  Tensor x = randt({4, 3}, rng), y = randt({4, 3}, rng);
  Tensor feat = concat_cols({x, y, mul(x, y), sub(x, y)});
  Tensor r = gelu(fuse.wr(feat));
  Tensor o = fuse(x, y);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 3; ++j) {
      double lo = std::min(x.at(i, j), r.at(i, j));
      double hi = std::max(x.at(i, j), r.at(i, j));
      CHECK(o.at(i, j) >= lo - 1e-12);
      CHECK(o.at(i, j) <= hi + 1e-12);
    }
}

TEST_CASE("fuse gate handles vectors and rejects mismatched shapes") {
  Rng rng(16);
  ParamStore ps;
  FuseGate fuse(ps, "f", 3, rng);
  Tensor v = fuse(randt({3}, rng), randt({3}, rng));
  CHECK(v.shape() == Shape{3});
  CHECK_THROWS_AS(fuse(randt({2, 3}, rng), randt({3, 3}, rng)),
                  std::invalid_argument);
}

TEST_CASE("fuse gate gradients pass the finite-difference check") {
  Rng rng(17);
  ParamStore ps;
  FuseGate fuse(ps, "f", 3, rng);
  Tensor x = randt({3, 3}, rng), y = randt({3, 3}, rng);
  Rng coords(18);
  auto leaves = rtvtest::store_tensors(ps);
  leaves.push_back(x);
  leaves.push_back(y);
  CHECK(max_grad_rel_err([&] { return sum(fuse(x, y)); }, leaves, 100, coords) <
        1e-4);
}
