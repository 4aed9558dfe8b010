// Command-line driver for the read-then-verify pipeline: synthetic data,
// reader and verifier training, joint prediction, threshold tuning, and
// evaluation reports.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rtv/checkpoint.hpp"
#include "rtv/eval.hpp"
#include "rtv/pipeline.hpp"

namespace {

using nlohmann::json;

void save_vocab(const std::string& path, const rtv::Vocab& vocab) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  for (int i = rtv::Vocab::kNumReserved; i < vocab.size(); ++i)
    os << vocab.word(i) << "\n";
}

rtv::Vocab load_vocab(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  rtv::Vocab vocab;
  std::string line;
  while (std::getline(is, line))
    if (!line.empty()) vocab.add(line);
  return vocab;
}

std::map<std::string, double> reader_meta(const rtv::ReaderConfig& c) {
  return {{"arch", 0.0},
          {"emb_dim", static_cast<double>(c.emb_dim)},
          {"hidden", static_cast<double>(c.hidden)},
          {"max_span", static_cast<double>(c.max_span)},
          {"gamma", c.gamma},
          {"lambda", c.lambda}};
}

double meta_at(const std::map<std::string, double>& meta, const std::string& key,
               const std::string& path) {
  auto it = meta.find(key);
  if (it == meta.end())
    throw std::runtime_error("checkpoint " + path + " missing meta field " + key);
  return it->second;
}

rtv::ReaderModel load_reader(const std::string& path, const rtv::Vocab& vocab) {
  rtv::Checkpoint ckpt = rtv::load_checkpoint(path);
  auto meta = ckpt.meta();
  rtv::ReaderConfig cfg;
  cfg.emb_dim = static_cast<int>(meta_at(meta, "emb_dim", path));
  cfg.hidden = static_cast<int>(meta_at(meta, "hidden", path));
  cfg.max_span = static_cast<int>(meta_at(meta, "max_span", path));
  if (meta.count("gamma")) cfg.gamma = meta.at("gamma");
  if (meta.count("lambda")) cfg.lambda = meta.at("lambda");
  rtv::ReaderModel model(vocab.size(), cfg, 0);
  rtv::restore_params(model.params(), ckpt);
  return model;
}

std::map<std::string, double> hybrid_meta(const rtv::GptConfig& s,
                                          const rtv::InteractiveConfig& i) {
  return {{"arch", 3.0},
          {"seq_n_layers", static_cast<double>(s.n_layers)},
          {"seq_model_dim", static_cast<double>(s.model_dim)},
          {"seq_n_heads", static_cast<double>(s.n_heads)},
          {"seq_ffn_dim", static_cast<double>(s.ffn_dim)},
          {"seq_max_position", static_cast<double>(s.max_position)},
          {"int_word_dim", static_cast<double>(i.word_dim)},
          {"int_char_dim", static_cast<double>(i.char_dim)},
          {"int_char_hidden", static_cast<double>(i.char_hidden)},
          {"int_hidden", static_cast<double>(i.hidden)}};
}

rtv::GptConfig seq_cfg_from_meta(const std::map<std::string, double>& m,
                                 const std::string& path,
                                 const std::string& prefix = "") {
  rtv::GptConfig c;
  c.n_layers = static_cast<int>(meta_at(m, prefix + "n_layers", path));
  c.model_dim = static_cast<int>(meta_at(m, prefix + "model_dim", path));
  c.n_heads = static_cast<int>(meta_at(m, prefix + "n_heads", path));
  c.ffn_dim = static_cast<int>(meta_at(m, prefix + "ffn_dim", path));
  c.max_position = static_cast<int>(meta_at(m, prefix + "max_position", path));
  return c;
}

rtv::InteractiveConfig int_cfg_from_meta(const std::map<std::string, double>& m,
                                         const std::string& path,
                                         const std::string& prefix = "") {
  rtv::InteractiveConfig c;
  c.word_dim = static_cast<int>(meta_at(m, prefix + "word_dim", path));
  c.char_dim = static_cast<int>(meta_at(m, prefix + "char_dim", path));
  c.char_hidden = static_cast<int>(meta_at(m, prefix + "char_hidden", path));
  c.hidden = static_cast<int>(meta_at(m, prefix + "hidden", path));
  return c;
}

// Holds whichever verifier architecture a checkpoint contains, plus the
// ready-to-call scoring closure.
struct LoadedVerifier {
  std::unique_ptr<rtv::SequentialVerifier> seq;
  std::unique_ptr<rtv::InteractiveVerifier> inter;
  std::unique_ptr<rtv::HybridVerifier> hybrid;
  rtv::VerifierForward forward;
};

LoadedVerifier load_verifier(const std::string& path, const rtv::Vocab& vocab) {
  rtv::Checkpoint ckpt = rtv::load_checkpoint(path);
  auto meta = ckpt.meta();
  int arch = static_cast<int>(meta_at(meta, "arch", path));
  LoadedVerifier v;
  if (arch == 1) {
    v.seq = std::make_unique<rtv::SequentialVerifier>(
        vocab.size(), seq_cfg_from_meta(meta, path), 0);
    rtv::restore_params(v.seq->params(), ckpt);
    v.forward = rtv::make_verifier_forward(*v.seq, vocab);
  } else if (arch == 2) {
    v.inter = std::make_unique<rtv::InteractiveVerifier>(
        vocab.size(), int_cfg_from_meta(meta, path), 0);
    rtv::restore_params(v.inter->params(), ckpt);
    v.forward = rtv::make_verifier_forward(*v.inter, vocab);
  } else if (arch == 3) {
    v.hybrid = std::make_unique<rtv::HybridVerifier>(
        vocab.size(), seq_cfg_from_meta(meta, path, "seq_"),
        int_cfg_from_meta(meta, path, "int_"), 0);
    rtv::restore_params(v.hybrid->params(), ckpt);
    v.forward = rtv::make_verifier_forward(*v.hybrid, vocab);
  } else {
    throw std::runtime_error("checkpoint " + path + " has unknown arch " +
                             std::to_string(arch));
  }
  return v;
}

json tokens_to_json(const std::vector<rtv::Token>& tokens) {
  json arr = json::array();
  for (const auto& t : tokens)
    arr.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
  return arr;
}

std::vector<rtv::Token> tokens_from_json(const json& arr) {
  std::vector<rtv::Token> tokens;
  for (const auto& j : arr)
    tokens.push_back({j.at("text").get<std::string>(), j.at("start").get<int>(),
                      j.at("end").get<int>()});
  return tokens;
}

void save_items(const std::string& path, const std::vector<rtv::VerifierItem>& items) {
  json arr = json::array();
  for (const auto& it : items) {
    json j;
    j["id"] = it.id;
    j["label_unanswerable"] = it.label_unanswerable;
    j["sentence"] = {{"tokens", tokens_to_json(it.sentence.tokens)},
                     {"mask", it.sentence.answer_mask},
                     {"source", it.sentence.source_example_id}};
    j["question"] = tokens_to_json(it.question);
    j["answer"] = tokens_to_json(it.answer);
    arr.push_back(std::move(j));
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << arr.dump(1) << "\n";
}

std::vector<rtv::VerifierItem> load_items(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  json arr = json::parse(is);
  std::vector<rtv::VerifierItem> items;
  for (const auto& j : arr) {
    rtv::VerifierItem it;
    it.id = j.at("id").get<std::string>();
    it.label_unanswerable = j.at("label_unanswerable").get<bool>();
    it.sentence.tokens = tokens_from_json(j.at("sentence").at("tokens"));
    it.sentence.answer_mask = j.at("sentence").at("mask").get<std::vector<uint8_t>>();
    it.sentence.source_example_id = j.at("sentence").at("source").get<std::string>();
    it.question = tokens_from_json(j.at("question"));
    it.answer = tokens_from_json(j.at("answer"));
    items.push_back(std::move(it));
  }
  return items;
}

void print_report(const rtv::EvalReport& r) {
  std::printf("%-10s %8s %8s %8s %8s %10s\n", "", "HasAns", "HasAns", "All", "All",
              "NoAns");
  std::printf("%-10s %8s %8s %8s %8s %10s\n", "", "EM", "F1", "EM", "F1", "ACC");
  std::printf("%-10s %8.1f %8.1f %8.1f %8.1f %10.1f\n", "result", r.has_ans_em,
              r.has_ans_f1, r.em, r.f1, r.no_ans_acc);
  for (const auto& [c, n] : r.case_counts)
    std::printf("Case%d  %6d  (%.1f%%)\n", c, n,
                100.0 * n / std::max(1, r.n_examples));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"read-then-verify span extraction with answer verification"};
  app.require_subcommand(1);
  app.set_config("--config");

  uint64_t seed = rtv::seed_from_env(42);

  // ---- synth-data ----
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
  std::string synth_dir = "data";
  int synth_n = 100;
  double synth_frac = 0.5;
  synth->add_option("--out-dir", synth_dir, "output directory");
  synth->add_option("--n", synth_n, "number of examples");
  synth->add_option("--unanswerable-fraction", synth_frac);
  synth->add_option("--seed", seed);

  // ---- train-reader ----
  auto* tr = app.add_subcommand("train-reader", "train the span reader");
  std::string tr_train, tr_dev, tr_out = "reader.ckpt", tr_vocab = "vocab.txt";
  std::string tr_curve;
  rtv::ReaderConfig rcfg;
  rtv::TrainConfig rtrain;
  bool no_indep_span = false, no_indep_noanswer = false;
  tr->add_option("--train", tr_train, "training SQuAD-format JSON")->required();
  tr->add_option("--dev", tr_dev, "dev SQuAD-format JSON");
  tr->add_option("--out", tr_out, "output checkpoint");
  tr->add_option("--vocab-out", tr_vocab, "output vocabulary file");
  tr->add_option("--emb-dim", rcfg.emb_dim);
  tr->add_option("--hidden", rcfg.hidden);
  tr->add_option("--gamma", rcfg.gamma, "weight of the independent span loss");
  tr->add_option("--lambda", rcfg.lambda, "weight of the no-answer loss");
  tr->add_option("--max-span", rcfg.max_span);
  tr->add_option("--dropout", rcfg.dropout);
  tr->add_option("--batch", rtrain.batch);
  tr->add_option("--epochs", rtrain.epochs);
  tr->add_option("--lr", rtrain.lr);
  tr->add_option("--max-steps", rtrain.max_steps);
  tr->add_option("--curve", tr_curve, "per-step loss CSV");
  tr->add_option("--seed", seed);
  tr->add_flag("--no-indep-span", no_indep_span, "ablation: gamma = 0");
  tr->add_flag("--no-indep-noanswer", no_indep_noanswer, "ablation: lambda = 0");

  // ---- build-verifier-data ----
  auto* bv = app.add_subcommand("build-verifier-data",
                                "extract (sentence, question, answer) items");
  std::string bv_data, bv_out = "items.json", bv_reader, bv_vocab;
  bv->add_option("--data", bv_data, "SQuAD-format JSON")->required();
  bv->add_option("--out", bv_out, "output items JSON");
  bv->add_option("--reader", bv_reader,
                 "reader checkpoint for spans of unannotated unanswerables");
  bv->add_option("--vocab", bv_vocab, "vocabulary file (with --reader)");

  // ---- train-verifier ----
  auto* tv = app.add_subcommand("train-verifier", "train an answer verifier");
  std::string tv_arch = "int", tv_train, tv_dev, tv_vocab, tv_out = "verifier.ckpt";
  std::string tv_seq_ckpt, tv_int_ckpt, tv_curve;
  rtv::GptConfig gcfg;
  rtv::InteractiveConfig icfg;
  rtv::TrainConfig vtrain;
  tv->add_option("--arch", tv_arch, "seq | int | hybrid")
      ->check(CLI::IsMember({"seq", "int", "hybrid"}));
  tv->add_option("--train-items", tv_train, "training items JSON")->required();
  tv->add_option("--dev-items", tv_dev, "dev items JSON");
  tv->add_option("--vocab", tv_vocab, "vocabulary file")->required();
  tv->add_option("--out", tv_out, "output checkpoint");
  tv->add_option("--seq-ckpt", tv_seq_ckpt, "pretrained trunk (hybrid)");
  tv->add_option("--int-ckpt", tv_int_ckpt, "pretrained trunk (hybrid)");
  tv->add_option("--layers", gcfg.n_layers);
  tv->add_option("--model-dim", gcfg.model_dim);
  tv->add_option("--heads", gcfg.n_heads);
  tv->add_option("--ffn-dim", gcfg.ffn_dim);
  tv->add_option("--max-position", gcfg.max_position);
  tv->add_option("--word-dim", icfg.word_dim);
  tv->add_option("--char-dim", icfg.char_dim);
  tv->add_option("--char-hidden", icfg.char_hidden);
  tv->add_option("--hidden", icfg.hidden);
  tv->add_option("--batch", vtrain.batch);
  tv->add_option("--epochs", vtrain.epochs);
  tv->add_option("--lr", vtrain.lr);
  tv->add_option("--max-steps", vtrain.max_steps);
  tv->add_option("--curve", tv_curve, "per-step loss CSV");
  tv->add_option("--seed", seed);

  // ---- predict ----
  auto* pr = app.add_subcommand("predict", "joint predictions on a dataset");
  std::string pr_data, pr_reader, pr_vocab, pr_verifier, pr_out = "predictions.json";
  double pr_threshold = 0.5;
  pr->add_option("--data", pr_data)->required();
  pr->add_option("--reader", pr_reader)->required();
  pr->add_option("--vocab", pr_vocab)->required();
  pr->add_option("--verifier", pr_verifier, "verifier checkpoint (optional)");
  pr->add_option("--threshold", pr_threshold);
  pr->add_option("--out", pr_out);

  // ---- tune-threshold ----
  auto* tt = app.add_subcommand("tune-threshold",
                                "exact best-F1 threshold over a prediction file");
  std::string tt_pred, tt_data, tt_out;
  tt->add_option("--pred", tt_pred)->required();
  tt->add_option("--data", tt_data)->required();
  tt->add_option("--out", tt_out, "write 'threshold f1' to this file");

  // ---- evaluate ----
  auto* ev = app.add_subcommand("evaluate", "score predictions against gold");
  std::string ev_pred, ev_data;
  double ev_threshold = 0.5;
  ev->add_option("--pred", ev_pred)->required();
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--threshold", ev_threshold);

  // ---- report ----
  auto* rp = app.add_subcommand("report", "write report.json/txt and PR curve");
  std::string rp_pred, rp_data, rp_dir = "report";
  double rp_threshold = 0.5;
  rp->add_option("--pred", rp_pred)->required();
  rp->add_option("--data", rp_data)->required();
  rp->add_option("--threshold", rp_threshold);
  rp->add_option("--out-dir", rp_dir);

  // ---- e2e ----
  auto* ee = app.add_subcommand("e2e", "full pipeline on synthetic data");
  std::string ee_dir = "e2e", ee_arch = "int";
  int ee_n = 64;
  ee->add_option("--out-dir", ee_dir);
  ee->add_option("--n", ee_n);
  ee->add_option("--arch", ee_arch)->check(CLI::IsMember({"seq", "int", "hybrid"}));
  ee->add_option("--seed", seed);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      std::filesystem::create_directories(synth_dir);
      rtv::SyntheticData data =
          rtv::make_synthetic_dataset({synth_n, seed, synth_frac});
      rtv::save_squad_json(synth_dir + "/train.json", data.train);
      rtv::save_squad_json(synth_dir + "/dev.json", data.dev);
      std::printf("wrote %zu train / %zu dev examples to %s\n", data.train.size(),
                  data.dev.size(), synth_dir.c_str());
    } else if (*tr) {
      if (no_indep_span) rcfg.gamma = 0.0;
      if (no_indep_noanswer) rcfg.lambda = 0.0;
      rtrain.seed = seed;
      rtrain.curve_path = tr_curve;
      std::vector<rtv::Example> train = rtv::load_squad_json(tr_train);
      std::vector<rtv::Example> dev;
      if (!tr_dev.empty()) dev = rtv::load_squad_json(tr_dev);
      rtv::Vocab vocab = rtv::Vocab::build(train);
      rtv::ReaderModel model(vocab.size(), rcfg, seed);
      rtv::TrainResult result = rtv::train_reader(model, vocab, train, dev, rtrain);
      rtv::save_checkpoint(tr_out, model.params(), reader_meta(rcfg));
      save_vocab(tr_vocab, vocab);
      std::printf("trained %d steps, final loss %.4f", result.steps,
                  result.loss_curve.empty() ? 0.0 : result.loss_curve.back());
      if (!dev.empty()) std::printf(", best dev F1 %.2f", result.best_dev_metric);
      std::printf("\n");
    } else if (*bv) {
      std::vector<rtv::Example> examples = rtv::load_squad_json(bv_data);
      std::vector<rtv::VerifierItem> items;
      if (!bv_reader.empty()) {
        rtv::Vocab vocab = load_vocab(bv_vocab);
        rtv::ReaderModel reader = load_reader(bv_reader, vocab);
        items = rtv::build_verifier_dataset(examples, &reader, &vocab);
      } else {
        items = rtv::build_verifier_dataset(examples, nullptr, nullptr);
      }
      save_items(bv_out, items);
      std::printf("wrote %zu items (%zu examples) to %s\n", items.size(),
                  examples.size(), bv_out.c_str());
    } else if (*tv) {
      vtrain.seed = seed;
      vtrain.curve_path = tv_curve;
      rtv::Vocab vocab = load_vocab(tv_vocab);
      std::vector<rtv::VerifierItem> train = load_items(tv_train);
      std::vector<rtv::VerifierItem> dev;
      if (!tv_dev.empty()) dev = load_items(tv_dev);
      rtv::TrainResult result;
      if (tv_arch == "seq") {
        rtv::SequentialVerifier model(vocab.size(), gcfg, seed);
        auto fwd = rtv::make_verifier_forward(model, vocab);
        result = rtv::train_verifier(model.params(), fwd, train, dev, vtrain);
        rtv::save_seq_checkpoint(tv_out, model);
      } else if (tv_arch == "int") {
        rtv::InteractiveVerifier model(vocab.size(), icfg, seed);
        auto fwd = rtv::make_verifier_forward(model, vocab);
        result = rtv::train_verifier(model.params(), fwd, train, dev, vtrain);
        rtv::save_int_checkpoint(tv_out, model);
      } else {
        if (tv_seq_ckpt.empty() || tv_int_ckpt.empty())
          throw std::runtime_error(
              "hybrid training needs --seq-ckpt and --int-ckpt");
        auto sm = rtv::load_checkpoint(tv_seq_ckpt).meta();
        auto im = rtv::load_checkpoint(tv_int_ckpt).meta();
        rtv::HybridVerifier model(vocab.size(), seq_cfg_from_meta(sm, tv_seq_ckpt),
                                  int_cfg_from_meta(im, tv_int_ckpt), seed);
        model.init_from_pretrained(tv_seq_ckpt, tv_int_ckpt);
        auto fwd = rtv::make_verifier_forward(model, vocab);
        result = rtv::train_verifier(model.params(), fwd, train, dev, vtrain);
        rtv::save_checkpoint(tv_out, model.params(),
                             hybrid_meta(model.seq().config(),
                                         model.interactive().config()));
      }
      std::printf("trained %d steps, final loss %.4f", result.steps,
                  result.loss_curve.empty() ? 0.0 : result.loss_curve.back());
      if (!dev.empty())
        std::printf(", best dev accuracy %.3f", result.best_dev_metric);
      std::printf("\n");
    } else if (*pr) {
      std::vector<rtv::Example> data = rtv::load_squad_json(pr_data);
      rtv::Vocab vocab = load_vocab(pr_vocab);
      rtv::ReaderModel reader = load_reader(pr_reader, vocab);
      LoadedVerifier verifier;
      if (!pr_verifier.empty()) verifier = load_verifier(pr_verifier, vocab);
      std::vector<rtv::Prediction> preds;
      for (const auto& ex : data) {
        rtv::ReaderPrediction rpred = rtv::reader_predict(reader, vocab, ex);
        rtv::JointPrediction jp = rtv::joint_predict(
            reader, vocab, ex, verifier.forward ? &verifier.forward : nullptr,
            pr_threshold);
        preds.push_back({jp.id, rpred.text, jp.joint_na_prob});
      }
      rtv::save_predictions(pr_out, preds);
      std::printf("wrote %zu predictions to %s\n", preds.size(), pr_out.c_str());
    } else if (*tt) {
      std::vector<rtv::Prediction> preds = rtv::load_predictions(tt_pred);
      std::vector<rtv::Example> gold = rtv::load_squad_json(tt_data);
      auto [thr, f1] = rtv::tune_threshold(preds, gold);
      std::printf("best threshold %.6f (F1 %.2f)\n", thr, f1);
      if (!tt_out.empty()) {
        std::ofstream os(tt_out);
        os << thr << " " << f1 << "\n";
      }
    } else if (*ev) {
      rtv::EvalReport report = rtv::evaluate(rtv::load_predictions(ev_pred),
                                             rtv::load_squad_json(ev_data),
                                             ev_threshold);
      print_report(report);
    } else if (*rp) {
      std::filesystem::create_directories(rp_dir);
      rtv::EvalReport report = rtv::evaluate(rtv::load_predictions(rp_pred),
                                             rtv::load_squad_json(rp_data),
                                             rp_threshold);
      rtv::write_report(report, rp_dir + "/report.json", rp_dir + "/report.txt",
                        rp_dir + "/pr_curve.csv");
      print_report(report);
    } else if (*ee) {
      rtv::E2EConfig cfg;
      cfg.seed = seed;
      cfg.n_examples = ee_n;
      cfg.out_dir = ee_dir;
      cfg.arch = ee_arch == "seq"   ? rtv::VerifierArch::kSequential
                 : ee_arch == "int" ? rtv::VerifierArch::kInteractive
                                    : rtv::VerifierArch::kHybrid;
      // Desk-scale dimensions so the whole pipeline runs in seconds.
      cfg.reader_cfg.emb_dim = 32;
      cfg.reader_cfg.hidden = 16;
      cfg.reader_cfg.dropout = 0.1;
      cfg.seq_cfg = {.n_layers = 2, .model_dim = 32, .n_heads = 4, .ffn_dim = 64,
                     .max_position = 128};
      cfg.int_cfg = {.word_dim = 32, .char_dim = 8, .char_hidden = 8, .hidden = 16,
                     .dropout = 0.1};
      cfg.reader_train = {.epochs = 30, .batch = 16, .lr = 0.005, .seed = seed};
      cfg.verifier_train = {.epochs = 10, .batch = 16, .lr = 0.003, .seed = seed};
      rtv::run_e2e(cfg);
      std::printf("pipeline artifacts written to %s\n", ee_dir.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
