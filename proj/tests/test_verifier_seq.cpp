#include <doctest.h>

#include <cmath>
#include <vector>

#include "gradcheck.hpp"
#include "rtv/verifier_seq.hpp"

using namespace rtv;

namespace {

AnswerSentence make_sentence(const std::string& text,
                             const std::vector<uint8_t>& mask) {
  AnswerSentence s;
  s.tokens = tokenize(text);
  s.answer_mask = mask;
  s.source_example_id = "t";
  return s;
}

GptConfig tiny_config() {
  GptConfig cfg;
  cfg.n_layers = 2;
  cfg.model_dim = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 12;
  cfg.max_position = 32;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("serialize frames the input as start S Q delim A end") {
  Vocab v;
  int alice = v.add("alice"), lives = v.add("lives"), here = v.add("here");
  int where = v.add("where"), qm = v.add("?");
  AnswerSentence s = make_sentence("Alice lives here", {0, 0, 1});
  auto question = tokenize("Where ?");
  auto answer = answer_tokens(s);

  SequentialInput input = serialize(s, question, answer, v, 32);
  CHECK(input.token_ids ==
        std::vector<int>{Vocab::kStart, alice, lives, here, where, qm,
                         Vocab::kDelim, here, Vocab::kEnd});
  CHECK_FALSE(input.truncated);
}

TEST_CASE("serialize truncates the sentence from the left on overflow") {
  Vocab v;
  AnswerSentence s = make_sentence("a b c d e f g h", std::vector<uint8_t>(8, 0));
  for (const auto& t : s.tokens) v.add(t.text);
  auto question = tokenize("q1 q2");
  for (const auto& t : question) v.add(t.text);
  auto answer = tokenize("x");
  v.add("x");

  // framing costs 3 markers + |q| + |a| = 6 tokens; max position 10 keeps
  // exactly 4 sentence tokens
  SequentialInput input = serialize(s, question, answer, v, 10);
  CHECK(input.truncated);
  CHECK(static_cast<int>(input.token_ids.size()) == 10);
  CHECK(input.token_ids[1] == v.lookup("e"));  // a..d cut, e..h kept

  // a budget too small even for the question and answer is an error
  CHECK_THROWS_WITH_AS(serialize(s, question, answer, v, 5),
                       doctest::Contains("exceed max position"),
                       std::invalid_argument);

  CHECK_THROWS_AS(serialize(s, {}, answer, v, 32), std::invalid_argument);
  CHECK_THROWS_AS(serialize(s, question, {}, v, 32), std::invalid_argument);
  AnswerSentence empty;
  CHECK_THROWS_AS(serialize(empty, question, answer, v, 32),
                  std::invalid_argument);
}

TEST_CASE("a zero classifier predicts exactly one half") {
  GptConfig cfg = tiny_config();
  SequentialVerifier model(12, cfg, 1);
  Tensor w = model.params().get("classifier/W");
  w.raw().assign(w.raw().size(), 0.0);
  Rng rng(2);
  SequentialInput input{{Vocab::kStart, 5, 6, Vocab::kDelim, 7, Vocab::kEnd}, false};
  CHECK(model.no_answer_prob(input, false, rng).item() == 0.5);
}

TEST_CASE("the trunk validates length and vocabulary range") {
  GptConfig cfg = tiny_config();
  cfg.max_position = 4;
  SequentialVerifier model(12, cfg, 3);
  Rng rng(4);
  SequentialInput too_long{{1, 2, 3, 4, 5}, false};
  CHECK_THROWS_WITH_AS(model.trunk(too_long, false, rng),
                       doctest::Contains("exceeds max position"),
                       std::invalid_argument);
  SequentialInput bad_id{{1, 99}, false};
  CHECK_THROWS_AS(model.trunk(bad_id, false, rng), std::out_of_range);
  SequentialInput ok{{1, 2, 3}, false};
  CHECK(model.trunk(ok, false, rng).shape() == Shape{cfg.model_dim});
}

TEST_CASE("the final-token activation depends on every earlier token") {
  GptConfig cfg = tiny_config();
  SequentialVerifier model(12, cfg, 5);
  Rng rng(6);
  SequentialInput input{{Vocab::kStart, 5, 6, 7, Vocab::kEnd}, false};
  Tensor base = model.trunk(input, false, rng);
  for (size_t pos = 0; pos + 1 < input.token_ids.size(); ++pos) {
    SequentialInput perturbed = input;
    perturbed.token_ids[pos] = perturbed.token_ids[pos] == 5 ? 8 : 5;
    Tensor other = model.trunk(perturbed, false, rng);
    CHECK(base.values() != other.values());
  }
}

TEST_CASE("position embeddings distinguish token order") {
  GptConfig cfg = tiny_config();
  SequentialVerifier model(12, cfg, 7);
  Rng rng(8);
  SequentialInput ab{{Vocab::kStart, 5, 6, Vocab::kEnd}, false};
  SequentialInput ba{{Vocab::kStart, 6, 5, Vocab::kEnd}, false};
  CHECK(model.trunk(ab, false, rng).values() !=
        model.trunk(ba, false, rng).values());
}

TEST_CASE("seq loss is the clamped negative log likelihood") {
  CHECK(seq_loss(Tensor::scalar(0.25), true).item() ==
        doctest::Approx(-std::log(0.25)).epsilon(1e-12));
  CHECK(seq_loss(Tensor::scalar(0.25), false).item() ==
        doctest::Approx(-std::log(0.75)).epsilon(1e-12));
  CHECK(seq_loss(Tensor::scalar(0.5), true).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  double hopeless = seq_loss(Tensor::scalar(0.0), true).item();
  CHECK(std::isfinite(hopeless));
  CHECK(hopeless == doctest::Approx(-std::log(1e-12)).epsilon(1e-9));
  CHECK(std::isfinite(seq_loss(Tensor::scalar(1.0), false).item()));
}

TEST_CASE("sequential verifier gradients pass the finite-difference check") {
  GptConfig cfg = tiny_config();
  SequentialVerifier model(12, cfg, 9);
  Rng rng(10);
  Rng coords(11);
  SequentialInput input{{Vocab::kStart, 5, 6, 7, Vocab::kDelim, 8, Vocab::kEnd},
                        false};
  auto leaves = rtvtest::store_tensors(model.params());
  model.params().zero_grad();
  double err = rtvtest::max_grad_rel_err(
      [&] { return seq_loss(model.no_answer_prob(input, false, rng), true); },
      leaves, 40, coords);
  CHECK(err < 1e-4);
}
