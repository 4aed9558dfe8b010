#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rtv/pipeline.hpp"

using namespace rtv;

namespace {

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

struct FileGuard {
  std::string path;
  ~FileGuard() { std::remove(path.c_str()); }
};

ReaderConfig tiny_reader() {
  ReaderConfig cfg;
  cfg.emb_dim = 8;
  cfg.hidden = 4;
  cfg.max_span = 3;
  cfg.dropout = 0.0;
  return cfg;
}

SyntheticData tiny_data(int n, uint64_t seed) {
  SyntheticSpec spec;
  spec.n_examples = n;
  spec.seed = seed;
  return make_synthetic_dataset(spec);
}

}  // namespace

TEST_CASE("reader training is deterministic and counts steps exactly") {
  SyntheticData data = tiny_data(10, 1);
  Vocab vocab = Vocab::build(data.train);
  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch = 4;
  tcfg.lr = 0.003;
  tcfg.seed = 5;

  ReaderModel a(vocab.size(), tiny_reader(), 2);
  TrainResult ra = train_reader(a, vocab, data.train, data.dev, tcfg);
  ReaderModel b(vocab.size(), tiny_reader(), 2);
  TrainResult rb = train_reader(b, vocab, data.train, data.dev, tcfg);

  // ceil(10 / 4) = 3 batches per epoch, 2 epochs
  CHECK(ra.steps == 6);
  CHECK(ra.loss_curve.size() == 6);
  CHECK(ra.dev_metric_history.size() == 2);
  CHECK(ra.loss_curve == rb.loss_curve);
  CHECK(ra.dev_metric_history == rb.dev_metric_history);
  for (const auto& [name, t] : a.params().items())
    CHECK(t.values() == b.params().get(name).values());

  // best-dev restoration reports the max of the history
  double best = 0.0;
  for (double m : ra.dev_metric_history) best = std::max(best, m);
  CHECK(ra.best_dev_metric == best);

  // max_steps caps the loop mid-epoch
  ReaderModel c(vocab.size(), tiny_reader(), 2);
  TrainConfig capped = tcfg;
  capped.max_steps = 4;
  CHECK(train_reader(c, vocab, data.train, data.dev, capped).steps == 4);

  // the optional curve file mirrors the loss history
  ReaderModel d(vocab.size(), tiny_reader(), 2);
  TrainConfig curved = tcfg;
  curved.epochs = 1;
  curved.curve_path = tmp_path("rtv_curve.csv");
  FileGuard guard{curved.curve_path};
  train_reader(d, vocab, data.train, data.dev, curved);
  std::ifstream cf(curved.curve_path);
  std::string line;
  std::getline(cf, line);
  CHECK(line == "step,loss");
  int rows = 0;
  while (std::getline(cf, line))
    if (!line.empty()) ++rows;
  CHECK(rows == 3);

  CHECK_THROWS_AS(train_reader(a, vocab, {}, data.dev, tcfg),
                  std::invalid_argument);
}

TEST_CASE("training reports divergence with the failing step") {
  SyntheticData data = tiny_data(4, 2);
  Vocab vocab = Vocab::build(data.train);
  ReaderModel model(vocab.size(), tiny_reader(), 3);
  // poison the embedding so the first loss is non-finite
  Tensor emb = model.params().get("embedding");
  emb.raw().assign(emb.raw().size(), std::nan(""));
  TrainConfig tcfg;
  tcfg.epochs = 1;
  tcfg.batch = 4;
  CHECK_THROWS_WITH_AS(train_reader(model, vocab, data.train, {}, tcfg),
                       doctest::Contains("step 1"), std::runtime_error);
}

TEST_CASE("verifier dataset takes gold, plausible or reader spans in order") {
  SyntheticData data = tiny_data(8, 3);
  Vocab vocab = Vocab::build(data.train);

  // without a reader: answerable use gold, unanswerable use plausible
  auto items = build_verifier_dataset(data.train, nullptr, nullptr);
  CHECK(items.size() == data.train.size());  // synthetic always has plausible
  for (size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].id == data.train[i].id);
    CHECK(items[i].label_unanswerable == !data.train[i].is_answerable);
    CHECK_FALSE(items[i].answer.empty());
    CHECK_FALSE(items[i].sentence.tokens.empty());
    CHECK(items[i].question.size() == data.train[i].question_tokens.size());
    // the flagged answer tokens inside the sentence match the item answer
    auto flagged = answer_tokens(items[i].sentence);
    REQUIRE(flagged.size() == items[i].answer.size());
    for (size_t t = 0; t < flagged.size(); ++t)
      CHECK(flagged[t].text == items[i].answer[t].text);
  }

  // unanswerable without a plausible span: skipped without a reader,
  // recovered through the reader's best span with one
  std::vector<Example> bare = data.train;
  for (auto& ex : bare)
    if (!ex.is_answerable) ex.plausible_span.reset();
  auto skipped = build_verifier_dataset(bare, nullptr, nullptr);
  size_t n_ans = 0;
  for (const auto& ex : bare)
    if (ex.is_answerable) ++n_ans;
  CHECK(skipped.size() == n_ans);

  ReaderModel reader(vocab.size(), tiny_reader(), 4);
  auto recovered = build_verifier_dataset(bare, &reader, &vocab);
  CHECK(recovered.size() == bare.size());
}

TEST_CASE("joint prediction averages reader and verifier probabilities") {
  SyntheticData data = tiny_data(4, 5);
  Vocab vocab = Vocab::build(data.train);
  ReaderModel reader(vocab.size(), tiny_reader(), 6);
  const Example& ex = data.train[0];

  ReaderPrediction rp = reader_predict(reader, vocab, ex);
  CHECK(rp.na_prob >= 0.0);
  CHECK(rp.na_prob <= 1.0);
  CHECK(rp.text == span_text(ex, rp.best_span));

  // without a verifier the joint probability is the reader's
  JointPrediction alone = joint_predict(reader, vocab, ex, nullptr, 0.5);
  CHECK(alone.joint_na_prob == rp.na_prob);
  CHECK_FALSE(alone.verifier_na_prob.has_value());

  // a stub verifier pins its probability; the joint is the arithmetic mean
  for (double vp : {0.0, 0.25, 1.0}) {
    VerifierForward stub = [vp](const VerifierItem&, bool, Rng&) {
      return Tensor::scalar(vp);
    };
    JointPrediction jp = joint_predict(reader, vocab, ex, &stub, 0.5);
    REQUIRE(jp.verifier_na_prob.has_value());
    CHECK(*jp.verifier_na_prob == vp);
    CHECK(jp.joint_na_prob == 0.5 * (rp.na_prob + vp));
  }

  // the abstention decision is strictly greater-than
  VerifierForward exact = [&rp](const VerifierItem&, bool, Rng&) {
    return Tensor::scalar(1.0 - rp.na_prob);  // joint lands exactly on 0.5
  };
  JointPrediction at = joint_predict(reader, vocab, ex, &exact, 0.5);
  CHECK(at.joint_na_prob == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_FALSE(at.predicted_unanswerable);
  CHECK(at.answer_text == rp.text);

  VerifierForward high = [](const VerifierItem&, bool, Rng&) {
    return Tensor::scalar(1.0);
  };
  JointPrediction abstained = joint_predict(reader, vocab, ex, &high, 0.4);
  if (abstained.predicted_unanswerable) CHECK(abstained.answer_text.empty());
}

TEST_CASE("tuned threshold matches a dense grid search") {
  SyntheticData data = tiny_data(24, 7);
  Vocab vocab = Vocab::build(data.train);
  ReaderModel reader(vocab.size(), tiny_reader(), 8);

  std::vector<Prediction> preds;
  for (const auto& ex : data.dev) {
    ReaderPrediction rp = reader_predict(reader, vocab, ex);
    preds.push_back({ex.id, rp.text, rp.na_prob});
  }
  auto [thr, f1] = tune_threshold(preds, data.dev);

  double grid_best = -1.0;
  for (int k = 0; k <= 1000; ++k) {
    double f = dataset_f1(preds, data.dev, k / 1000.0);
    grid_best = std::max(grid_best, f);
  }
  CHECK(f1 == doctest::Approx(grid_best).epsilon(1e-12));
  CHECK(f1 == doctest::Approx(dataset_f1(preds, data.dev, thr)).epsilon(1e-12));

  // ties break toward the smallest candidate: uniform scores tune to 0
  std::vector<Prediction> flat;
  for (const auto& ex : data.dev) flat.push_back({ex.id, "", 0.7});
  auto [flat_thr, flat_f1] = tune_threshold(flat, data.dev);
  CHECK(flat_thr == 0.0);
  (void)flat_f1;

  CHECK_THROWS_AS(tune_threshold({}, data.dev), std::invalid_argument);
}

TEST_CASE("predictions survive a save and load round trip") {
  std::vector<Prediction> preds = {{"q1", "Paris", 0.125},
                                   {"q2", "", 0.875},
                                   {"q3", "two words", 0.0}};
  std::string path = tmp_path("rtv_preds.json");
  FileGuard guard{path};
  save_predictions(path, preds);
  auto loaded = load_predictions(path);
  REQUIRE(loaded.size() == 3);
  for (const auto& p : preds) {
    bool found = false;
    for (const auto& l : loaded)
      if (l.id == p.id) {
        found = true;
        CHECK(l.text == p.text);
        CHECK(l.joint_na_prob == p.joint_na_prob);
      }
    CHECK(found);
  }

  // the reader-only key is accepted as a fallback
  std::ofstream(path) << R"({"q9": {"text": "x", "na_prob": 0.25}})";
  auto alt = load_predictions(path);
  REQUIRE(alt.size() == 1);
  CHECK(alt[0].joint_na_prob == 0.25);

  std::ofstream(path) << "{ nope";
  CHECK_THROWS_WITH_AS(load_predictions(path), doctest::Contains("malformed"),
                       std::runtime_error);
  CHECK_THROWS_AS(load_predictions("/nonexistent/p.json"), std::runtime_error);
}

TEST_CASE("the seed comes from RTV_SEED when set") {
  unsetenv("RTV_SEED");
  CHECK(seed_from_env(42) == 42);
  setenv("RTV_SEED", "31337", 1);
  CHECK(seed_from_env(42) == 31337);
  setenv("RTV_SEED", "", 1);
  CHECK(seed_from_env(7) == 7);
  unsetenv("RTV_SEED");
}

TEST_CASE("verifier training learns a separable stub problem") {
  // ten items whose label correlates with question length; the sequential
  // verifier at desk scale should fit them quickly
  SyntheticData data = tiny_data(10, 9);
  Vocab vocab = Vocab::build(data.train);
  auto items = build_verifier_dataset(data.train, nullptr, nullptr);
  GptConfig cfg;
  cfg.n_layers = 1;
  cfg.model_dim = 8;
  cfg.n_heads = 2;
  cfg.ffn_dim = 16;
  cfg.max_position = 64;
  cfg.dropout = 0.0;
  SequentialVerifier model(vocab.size(), cfg, 10);
  VerifierForward forward = make_verifier_forward(model, vocab);

  TrainConfig tcfg;
  tcfg.epochs = 2;
  tcfg.batch = 5;
  tcfg.lr = 0.01;
  tcfg.seed = 11;
  TrainResult r1 = train_verifier(model.params(), forward, items, items, tcfg);
  CHECK(r1.steps == 4);
  CHECK(r1.dev_metric_history.size() == 2);
  for (double m : r1.dev_metric_history) {
    CHECK(m >= 0.0);
    CHECK(m <= 1.0);
  }

  SequentialVerifier model2(vocab.size(), cfg, 10);
  VerifierForward forward2 = make_verifier_forward(model2, vocab);
  TrainResult r2 = train_verifier(model2.params(), forward2, items, items, tcfg);
  CHECK(r1.loss_curve == r2.loss_curve);
}

TEST_CASE("a small end-to-end run is deterministic and complete") {
  namespace fs = std::filesystem;
  std::string dir_a = tmp_path("rtv_e2e_a");
  std::string dir_b = tmp_path("rtv_e2e_b");
  fs::remove_all(dir_a);
  fs::remove_all(dir_b);

  E2EConfig cfg;
  cfg.seed = 13;
  cfg.n_examples = 8;
  cfg.reader_cfg = tiny_reader();
  cfg.int_cfg.word_dim = 8;
  cfg.int_cfg.char_dim = 4;
  cfg.int_cfg.char_hidden = 3;
  cfg.int_cfg.hidden = 4;
  cfg.int_cfg.dropout = 0.0;
  cfg.arch = VerifierArch::kInteractive;
  cfg.reader_train = {.epochs = 2, .batch = 4, .lr = 0.003, .seed = 13};
  cfg.verifier_train = {.epochs = 1, .batch = 4, .lr = 0.003, .seed = 13};

  cfg.out_dir = dir_a;
  run_e2e(cfg);
  cfg.out_dir = dir_b;
  run_e2e(cfg);

  for (const char* name :
       {"train.json", "dev.json", "predictions.json", "threshold.txt",
        "report.json", "report.txt", "pr_curve.csv"}) {
    CAPTURE(name);
    std::ifstream fa(dir_a + "/" + name), fb(dir_b + "/" + name);
    REQUIRE(fa.good());
    REQUIRE(fb.good());
    std::string ca((std::istreambuf_iterator<char>(fa)),
                   std::istreambuf_iterator<char>());
    std::string cb((std::istreambuf_iterator<char>(fb)),
                   std::istreambuf_iterator<char>());
    CHECK(ca == cb);
    CHECK_FALSE(ca.empty());
  }
  CHECK(fs::exists(dir_a + "/reader.ckpt"));
  CHECK(fs::exists(dir_a + "/verifier.ckpt"));

  fs::remove_all(dir_a);
  fs::remove_all(dir_b);
}
