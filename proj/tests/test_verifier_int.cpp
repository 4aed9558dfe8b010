#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "rtv/verifier_int.hpp"

using namespace rtv;

namespace {

InteractiveConfig tiny_config() {
  InteractiveConfig cfg;
  cfg.word_dim = 6;
  cfg.char_dim = 4;
  cfg.char_hidden = 3;
  cfg.hidden = 4;
  cfg.dropout = 0.0;
  return cfg;
}

AnswerSentence make_sentence(const std::string& text,
                             const std::vector<uint8_t>& mask) {
  AnswerSentence s;
  s.tokens = tokenize(text);
  s.answer_mask = mask;
  s.source_example_id = "t";
  return s;
}

}  // namespace

TEST_CASE("question flags mark lexical matches with the answer, case-insensitively") {
  auto question = tokenize("Where does ALICE live ?");
  auto answer = tokenize("alice paris");
  auto flags = question_answer_flags(question, answer);
  CHECK(flags == std::vector<uint8_t>{0, 0, 1, 0, 0});
  CHECK(question_answer_flags(question, {}) ==
        std::vector<uint8_t>{0, 0, 0, 0, 0});
}

TEST_CASE("alignment with an identity-like question recovers weighted sums") {
  // q has orthogonal unit rows, so a = s itself and softmax rows mix q rows
  Tensor s = Tensor::from({1, 2}, {std::log(2.0), 0.0});
  Tensor q = Tensor::from({2, 2}, {1, 0, 0, 1});
  Alignment al = align(s, q);
  CHECK(al.a.shape() == Shape{1, 2});
  CHECK(al.a.at(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(al.a.at(0, 1) == 0.0);
  // softmax over {ln 2, 0} = {2/3, 1/3}: b = (2 q1 + q2) / 3
  CHECK(al.b.at(0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(al.b.at(0, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  // column softmax over a single sentence row is all ones: c copies s
  CHECK(al.c.shape() == Shape{2, 2});
  for (int j = 0; j < 2; ++j) {
    CHECK(al.c.at(j, 0) == doctest::Approx(s.at(0, 0)).epsilon(1e-12));
    CHECK(al.c.at(j, 1) == doctest::Approx(s.at(0, 1)).epsilon(1e-12));
  }
}

TEST_CASE("alignment of a single-token question attends to that token only") {
  Tensor s = Tensor::from({3, 2}, {1, 0, 0, 1, 2, 2});
  Tensor q = Tensor::from({1, 2}, {0.4, -0.7});
  Alignment al = align(s, q);
  CHECK(al.b.shape() == Shape{3, 2});
  for (int i = 0; i < 3; ++i) {
    CHECK(al.b.at(i, 0) == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(al.b.at(i, 1) == doctest::Approx(-0.7).epsilon(1e-12));
  }
}

TEST_CASE("token embedding concatenates word, char and flag features") {
  InteractiveConfig cfg = tiny_config();
  Vocab v;
  v.add("alice");
  v.add("paris");
  InteractiveVerifier model(v.size(), cfg, 1);

  auto toks = tokenize("Alice Paris");
  Tensor on = model.embed(toks, {1, 0}, v);
  int width = cfg.word_dim + 2 * cfg.char_hidden + 1;
  CHECK(on.shape() == Shape{2, width});
  CHECK(on.at(0, width - 1) == 1.0);  // flag occupies the last coordinate
  CHECK(on.at(1, width - 1) == 0.0);

  // flipping a flag changes only that token's final coordinate
  Tensor off = model.embed(toks, {0, 0}, v);
  for (int j = 0; j < width - 1; ++j) {
    CHECK(on.at(0, j) == off.at(0, j));
    CHECK(on.at(1, j) == off.at(1, j));
  }
  CHECK(off.at(0, width - 1) == 0.0);

  // char vectors separate same-word-index tokens with different spellings
  Tensor c1 = model.char_embed("paris");
  Tensor c2 = model.char_embed("parks");
  CHECK(c1.shape() == Shape{2 * cfg.char_hidden});
  CHECK(c1.values() != c2.values());
  // identical spellings share the same char vector (weight sharing)
  CHECK(c1.values() == model.char_embed("paris").values());
}

TEST_CASE("intra-sentence attention handles the single-token fallback") {
  InteractiveConfig cfg = tiny_config();
  InteractiveVerifier model(20, cfg, 2);
  Rng rng(3);
  int h2 = 2 * cfg.hidden;
  Tensor one = Tensor::zeros({1, h2});
  for (auto& v : one.raw()) v = rng.uniform(-1, 1);
  // with one token the self-attention context is the zero vector, so the
  // result must be exactly the gate applied to (y, 0)
  Tensor got = model.intra_sentence(one, false, rng);
  CHECK(got.shape() == Shape{1, h2});
  for (double v : got.values()) CHECK(std::isfinite(v));
}

TEST_CASE("intra-sentence attention never attends to the diagonal") {
  // two identical rows: with the diagonal masked each token can only attend
  // to the other one, so the attended context equals the other row exactly
  InteractiveConfig cfg = tiny_config();
  InteractiveVerifier model(20, cfg, 4);
  Rng rng(5);
  int h2 = 2 * cfg.hidden;
  Tensor x = Tensor::zeros({2, h2});
  for (auto& v : x.raw()) v = rng.uniform(-1, 1);
  Tensor y = model.intra_sentence(x, false, rng);
  CHECK(y.shape() == Shape{2, h2});
  for (double v : y.values()) CHECK(std::isfinite(v));
}

TEST_CASE("the trunk pools mean and max over both sequences") {
  InteractiveConfig cfg = tiny_config();
  AnswerSentence s = make_sentence("Alice lives in Paris", {0, 0, 0, 1});
  auto question = tokenize("Where does Alice live ?");
  Vocab v;
  for (const auto& t : s.tokens) v.add(t.text);
  InteractiveVerifier model(v.size(), cfg, 6);
  Rng rng(7);

  Tensor pooled = model.trunk(s, question, v, false, rng);
  int h2 = 2 * cfg.hidden;
  CHECK(pooled.shape() == Shape{4 * h2});
  // layout is [mean_s; max_s; mean_q; max_q]: each max dominates its mean half
  for (int j = 0; j < h2; ++j) {
    CHECK(pooled.at(h2 + j) >= pooled.at(j) - 1e-12);
    CHECK(pooled.at(3 * h2 + j) >= pooled.at(2 * h2 + j) - 1e-12);
  }

  double p = model.no_answer_prob(s, question, v, false, rng).item();
  CHECK(p > 0.0);
  CHECK(p < 1.0);

  AnswerSentence empty;
  CHECK_THROWS_AS(model.trunk(empty, question, v, false, rng),
                  std::invalid_argument);
  CHECK_THROWS_AS(model.trunk(s, {}, v, false, rng), std::invalid_argument);
}

TEST_CASE("answer flags influence the prediction") {
  InteractiveConfig cfg = tiny_config();
  AnswerSentence flagged = make_sentence("Alice lives in Paris", {0, 0, 0, 1});
  AnswerSentence unflagged = make_sentence("Alice lives in Paris", {0, 0, 0, 0});
  auto question = tokenize("Where does Alice live ?");
  Vocab v;
  for (const auto& t : flagged.tokens) v.add(t.text);
  InteractiveVerifier model(v.size(), cfg, 8);
  Rng rng(9);
  double pa = model.no_answer_prob(flagged, question, v, false, rng).item();
  double pb = model.no_answer_prob(unflagged, question, v, false, rng).item();
  CHECK(pa != pb);
}

TEST_CASE("interactive verifier gradients pass the finite-difference check") {
  InteractiveConfig cfg = tiny_config();
  AnswerSentence s = make_sentence("Alice lives in Paris", {0, 0, 0, 1});
  auto question = tokenize("Where does Alice live ?");
  Vocab v;
  for (const auto& t : s.tokens) v.add(t.text);
  for (const auto& t : question) v.add(t.text);
  InteractiveVerifier model(v.size(), cfg, 10);
  Rng rng(11);
  Rng coords(12);
  auto leaves = rtvtest::store_tensors(model.params());
  model.params().zero_grad();
  double err = rtvtest::max_grad_rel_err(
      [&] {
        Tensor p = model.no_answer_prob(s, question, v, false, rng);
        return neg(log(clamp_min(p, 1e-12)));
      },
      leaves, 30, coords);
  CHECK(err < 1e-4);
}
