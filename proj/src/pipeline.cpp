#include "rtv/pipeline.hpp"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "rtv/checkpoint.hpp"

namespace rtv {

namespace {

std::vector<std::vector<double>> snapshot_params(const ParamStore& params) {
  std::vector<std::vector<double>> snap;
  for (const auto& [name, t] : params.items()) snap.push_back(t.values());
  return snap;
}

void restore_snapshot(ParamStore& params, const std::vector<std::vector<double>>& snap) {
  size_t i = 0;
  for (const auto& [name, t] : params.items()) {
    Tensor handle = t;
    handle.raw() = snap[i++];
  }
}

// Shared mini-batch loop: shuffled epochs, mean batch loss, Adam updates,
// per-epoch dev evaluation, best-dev parameters restored at the end.
TrainResult run_training(ParamStore& params,
                         const std::function<Tensor(size_t, Rng&)>& example_loss,
                         size_t n_train, const std::function<double()>& dev_eval,
                         bool has_dev, const TrainConfig& cfg) {
  if (n_train == 0) throw std::invalid_argument("training: empty dataset");
  TrainResult result;
  Rng rng(cfg.seed);
  Adam adam(params, {.lr = cfg.lr});
  std::vector<size_t> order(n_train);
  for (size_t i = 0; i < n_train; ++i) order[i] = i;

  std::ofstream curve;
  if (!cfg.curve_path.empty()) {
    curve.open(cfg.curve_path);
    curve << "step,loss\n";
  }

  std::vector<std::vector<double>> best_snap;
  double best_metric = -1.0;
  bool done = false;
  for (int epoch = 0; epoch < cfg.epochs && !done; ++epoch) {
    rng.shuffle(order);
    for (size_t b = 0; b < n_train && !done; b += static_cast<size_t>(cfg.batch)) {
      size_t b_end = std::min(n_train, b + static_cast<size_t>(cfg.batch));
      Tensor batch_loss;
      for (size_t i = b; i < b_end; ++i) {
        Tensor l = example_loss(order[i], rng);
        batch_loss = batch_loss.defined() ? add(batch_loss, l) : l;
      }
      batch_loss = scale(batch_loss, 1.0 / static_cast<double>(b_end - b));
      double loss_val = batch_loss.item();
      if (!std::isfinite(loss_val))
        throw std::runtime_error("training diverged (non-finite loss) at step " +
                                 std::to_string(result.steps + 1));
      params.zero_grad();
      backward(batch_loss);
      adam.step();
      ++result.steps;
      result.loss_curve.push_back(loss_val);
      if (curve.is_open()) curve << result.steps << "," << loss_val << "\n";
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) done = true;
    }
    if (has_dev) {
      double metric = dev_eval();
      result.dev_metric_history.push_back(metric);
      if (metric > best_metric) {
        best_metric = metric;
        best_snap = snapshot_params(params);
      }
    }
  }
  if (!best_snap.empty()) {
    restore_snapshot(params, best_snap);
    result.best_dev_metric = best_metric;
  }
  return result;
}

}  // namespace

ReaderPrediction reader_predict(const ReaderModel& model, const Vocab& vocab,
                                const Example& ex) {
  Rng rng(0);  // inference path draws nothing
  ReaderForward fwd = model.forward(ex, vocab, /*training=*/false, rng);
  ReaderOutput out = decode(fwd, model.config().max_span);
  ReaderPrediction pred;
  pred.na_prob = out.na_prob;
  pred.best_span = out.best_span;
  pred.text = span_text(ex, out.best_span);
  return pred;
}

TrainResult train_reader(ReaderModel& model, const Vocab& vocab,
                         const std::vector<Example>& train,
                         const std::vector<Example>& dev, const TrainConfig& cfg) {
  auto example_loss = [&](size_t i, Rng& rng) {
    ReaderForward fwd = model.forward(train[i], vocab, /*training=*/true, rng);
    return total_loss(fwd, train[i], model.config());
  };
  auto dev_eval = [&]() {
    std::vector<Prediction> preds;
    for (const auto& ex : dev) {
      ReaderPrediction p = reader_predict(model, vocab, ex);
      preds.push_back({ex.id, p.text, p.na_prob});
    }
    return dataset_f1(preds, dev, 0.5);
  };
  return run_training(model.params(), example_loss, train.size(), dev_eval,
                      !dev.empty(), cfg);
}

TrainResult train_verifier(ParamStore& params, const VerifierForward& forward,
                           const std::vector<VerifierItem>& train,
                           const std::vector<VerifierItem>& dev,
                           const TrainConfig& cfg) {
  auto example_loss = [&](size_t i, Rng& rng) {
    Tensor p = forward(train[i], /*training=*/true, rng);
    return seq_loss(p, train[i].label_unanswerable);
  };
  auto dev_eval = [&]() {
    Rng rng(0);
    int hits = 0;
    for (const auto& item : dev) {
      double p = forward(item, /*training=*/false, rng).item();
      if ((p > 0.5) == item.label_unanswerable) ++hits;
    }
    return dev.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(dev.size());
  };
  return run_training(params, example_loss, train.size(), dev_eval, !dev.empty(), cfg);
}

VerifierForward make_verifier_forward(SequentialVerifier& model, const Vocab& vocab) {
  return [&model, &vocab](const VerifierItem& item, bool training, Rng& rng) {
    SequentialInput input = serialize(item.sentence, item.question, item.answer,
                                      vocab, model.config().max_position);
    return model.no_answer_prob(input, training, rng);
  };
}

VerifierForward make_verifier_forward(InteractiveVerifier& model, const Vocab& vocab) {
  return [&model, &vocab](const VerifierItem& item, bool training, Rng& rng) {
    return model.no_answer_prob(item.sentence, item.question, vocab, training, rng);
  };
}

VerifierForward make_verifier_forward(HybridVerifier& model, const Vocab& vocab) {
  return [&model, &vocab](const VerifierItem& item, bool training, Rng& rng) {
    return model.no_answer_prob(item.sentence, item.question, vocab,
                                model.seq().config().max_position, training, rng);
  };
}

std::vector<VerifierItem> build_verifier_dataset(const std::vector<Example>& examples,
                                                 const ReaderModel* reader,
                                                 const Vocab* vocab) {
  std::vector<VerifierItem> items;
  for (const auto& ex : examples) {
    std::optional<Span> span;
    if (ex.is_answerable) {
      span = ex.gold_span;
    } else if (ex.plausible_span) {
      span = ex.plausible_span;
    } else if (reader && vocab) {
      span = reader_predict(*reader, *vocab, ex).best_span;
    }
    if (!span) continue;  // no annotation and no reader to extract one
    VerifierItem item;
    item.id = ex.id;
    item.sentence = locate_answer_sentence(ex, *span);
    item.question = ex.question_tokens;
    for (int t = span->first; t <= span->second; ++t)
      item.answer.push_back(ex.passage_tokens[static_cast<size_t>(t)]);
    item.label_unanswerable = !ex.is_answerable;
    items.push_back(std::move(item));
  }
  return items;
}

JointPrediction joint_predict(const ReaderModel& reader, const Vocab& vocab,
                              const Example& ex, const VerifierForward* verifier,
                              double threshold) {
  ReaderPrediction rp = reader_predict(reader, vocab, ex);
  JointPrediction jp;
  jp.id = ex.id;
  jp.reader_na_prob = rp.na_prob;
  jp.threshold = threshold;
  jp.joint_na_prob = rp.na_prob;
  if (verifier) {
    VerifierItem item;
    item.id = ex.id;
    item.sentence = locate_answer_sentence(ex, rp.best_span);
    item.question = ex.question_tokens;
    for (int t = rp.best_span.first; t <= rp.best_span.second; ++t)
      item.answer.push_back(ex.passage_tokens[static_cast<size_t>(t)]);
    Rng rng(0);
    jp.verifier_na_prob = (*verifier)(item, /*training=*/false, rng).item();
    jp.joint_na_prob = 0.5 * (jp.reader_na_prob + *jp.verifier_na_prob);
  }
  jp.predicted_unanswerable = jp.joint_na_prob > threshold;
  jp.answer_text = jp.predicted_unanswerable ? "" : rp.text;
  return jp;
}

std::pair<double, double> tune_threshold(const std::vector<Prediction>& predictions,
                                         const std::vector<Example>& gold) {
  if (predictions.empty())
    throw std::invalid_argument("tune_threshold: no predictions");
  double best_thr = 0.0, best_f1 = -1.0;
  for (double thr : threshold_candidates(predictions)) {
    double f1 = dataset_f1(predictions, gold, thr);
    if (f1 > best_f1) {  // ascending candidates: ties keep the smallest
      best_f1 = f1;
      best_thr = thr;
    }
  }
  return {best_thr, best_f1};
}

void save_predictions(const std::string& path, const std::vector<Prediction>& preds,
                      const std::string& prob_key) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& p : preds)
    j[p.id] = {{"text", p.text}, {prob_key, p.joint_na_prob}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << j.dump(1) << "\n";
}

std::vector<Prediction> load_predictions(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed predictions JSON in " + path + ": " + e.what());
  }
  std::vector<Prediction> preds;
  for (auto it = j.begin(); it != j.end(); ++it) {
    Prediction p;
    p.id = it.key();
    p.text = it.value().at("text").get<std::string>();
    if (it.value().contains("joint_na_prob"))
      p.joint_na_prob = it.value().at("joint_na_prob").get<double>();
    else
      p.joint_na_prob = it.value().at("na_prob").get<double>();
    preds.push_back(std::move(p));
  }
  return preds;
}

uint64_t seed_from_env(uint64_t fallback) {
  const char* env = std::getenv("RTV_SEED");
  if (!env || !*env) return fallback;
  return std::strtoull(env, nullptr, 10);
}

void run_e2e(const E2EConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto path = [&](const char* name) { return cfg.out_dir + "/" + name; };

  SyntheticData synth = make_synthetic_dataset({cfg.n_examples, cfg.seed});
  save_squad_json(path("train.json"), synth.train);
  save_squad_json(path("dev.json"), synth.dev);
  std::vector<Example> train = load_squad_json(path("train.json"));
  std::vector<Example> dev = load_squad_json(path("dev.json"));
  Vocab vocab = Vocab::build(train);

  ReaderModel reader(vocab.size(), cfg.reader_cfg, cfg.seed + 1);
  train_reader(reader, vocab, train, dev, cfg.reader_train);
  save_checkpoint(path("reader.ckpt"), reader.params());

  auto vtrain = build_verifier_dataset(train, &reader, &vocab);
  auto vdev = build_verifier_dataset(dev, &reader, &vocab);

  std::unique_ptr<SequentialVerifier> seq;
  std::unique_ptr<InteractiveVerifier> inter;
  std::unique_ptr<HybridVerifier> hybrid;
  VerifierForward forward;
  switch (cfg.arch) {
    case VerifierArch::kSequential:
      seq = std::make_unique<SequentialVerifier>(vocab.size(), cfg.seq_cfg, cfg.seed + 2);
      forward = make_verifier_forward(*seq, vocab);
      train_verifier(seq->params(), forward, vtrain, vdev, cfg.verifier_train);
      save_seq_checkpoint(path("verifier.ckpt"), *seq);
      break;
    case VerifierArch::kInteractive:
      inter = std::make_unique<InteractiveVerifier>(vocab.size(), cfg.int_cfg, cfg.seed + 2);
      forward = make_verifier_forward(*inter, vocab);
      train_verifier(inter->params(), forward, vtrain, vdev, cfg.verifier_train);
      save_int_checkpoint(path("verifier.ckpt"), *inter);
      break;
    case VerifierArch::kHybrid: {
      seq = std::make_unique<SequentialVerifier>(vocab.size(), cfg.seq_cfg, cfg.seed + 2);
      auto seq_fwd = make_verifier_forward(*seq, vocab);
      train_verifier(seq->params(), seq_fwd, vtrain, vdev, cfg.verifier_train);
      save_seq_checkpoint(path("verifier_seq.ckpt"), *seq);
      inter = std::make_unique<InteractiveVerifier>(vocab.size(), cfg.int_cfg, cfg.seed + 3);
      auto int_fwd = make_verifier_forward(*inter, vocab);
      train_verifier(inter->params(), int_fwd, vtrain, vdev, cfg.verifier_train);
      save_int_checkpoint(path("verifier_int.ckpt"), *inter);
      hybrid = std::make_unique<HybridVerifier>(vocab.size(), cfg.seq_cfg, cfg.int_cfg,
                                                cfg.seed + 4);
      hybrid->init_from_pretrained(path("verifier_seq.ckpt"), path("verifier_int.ckpt"));
      forward = make_verifier_forward(*hybrid, vocab);
      train_verifier(hybrid->params(), forward, vtrain, vdev, cfg.verifier_train);
      save_checkpoint(path("verifier.ckpt"), hybrid->params());
      break;
    }
  }

  // Raw extracted text plus joint probability; blanking happens at scoring
  // time so one prediction file serves every threshold.
  std::vector<Prediction> preds;
  for (const auto& ex : dev) {
    ReaderPrediction rp = reader_predict(reader, vocab, ex);
    JointPrediction jp = joint_predict(reader, vocab, ex, &forward, 0.5);
    preds.push_back({jp.id, rp.text, jp.joint_na_prob});
  }
  save_predictions(path("predictions.json"), preds);

  auto [thr, f1] = tune_threshold(preds, dev);
  {
    std::ofstream os(path("threshold.txt"));
    os << thr << " " << f1 << "\n";
  }
  EvalReport report = evaluate(preds, dev, thr);
  write_report(report, path("report.json"), path("report.txt"), path("pr_curve.csv"));
}

}  // namespace rtv
