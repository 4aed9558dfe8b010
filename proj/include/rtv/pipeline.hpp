#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtv/eval.hpp"
#include "rtv/reader.hpp"
#include "rtv/verifier_hybrid.hpp"
#include "rtv/verifier_int.hpp"
#include "rtv/verifier_seq.hpp"

namespace rtv {

struct TrainConfig {
  int epochs = 10;
  int batch = 32;
  double lr = 0.0008;
  uint64_t seed = 0;
  int max_steps = 0;           // hard cap on optimizer steps, 0 = unlimited
  std::string curve_path;      // optional per-step loss CSV
};

struct TrainResult {
  std::vector<double> loss_curve;        // one entry per optimizer step
  std::vector<double> dev_metric_history;  // one entry per epoch
  double best_dev_metric = 0.0;
  int steps = 0;
};

struct JointPrediction {
  std::string id;
  std::string answer_text;  // empty iff predicted unanswerable
  double reader_na_prob = 0.0;
  std::optional<double> verifier_na_prob;
  double joint_na_prob = 0.0;
  bool predicted_unanswerable = false;
  double threshold = 0.5;
};

enum class VerifierArch { kSequential, kInteractive, kHybrid };

// One oracle training item for an answer verifier.
struct VerifierItem {
  std::string id;
  AnswerSentence sentence;
  std::vector<Token> question;
  std::vector<Token> answer;
  bool label_unanswerable = false;
};

// Scores one item; the graph stays live for backward during training.
using VerifierForward =
    std::function<Tensor(const VerifierItem&, bool training, Rng& rng)>;

VerifierForward make_verifier_forward(SequentialVerifier& model, const Vocab& vocab);
VerifierForward make_verifier_forward(InteractiveVerifier& model, const Vocab& vocab);
VerifierForward make_verifier_forward(HybridVerifier& model, const Vocab& vocab);

// Mini-batch training of the reader on total_loss. Keeps the epoch with the
// best dev F1 (reader-only predictions, threshold 0.5) and restores it.
TrainResult train_reader(ReaderModel& model, const Vocab& vocab,
                         const std::vector<Example>& train,
                         const std::vector<Example>& dev, const TrainConfig& cfg);

// Same loop for any verifier; dev metric is accuracy at 0.5.
TrainResult train_verifier(ParamStore& params, const VerifierForward& forward,
                           const std::vector<VerifierItem>& train,
                           const std::vector<VerifierItem>& dev,
                           const TrainConfig& cfg);

// Oracle sentences and answers for verifier training. Unanswerable examples
// without an annotated plausible span fall back to the reader's best span
// when a reader is supplied, and are skipped otherwise.
std::vector<VerifierItem> build_verifier_dataset(const std::vector<Example>& examples,
                                                 const ReaderModel* reader,
                                                 const Vocab* vocab);

// Reader-only prediction: extracted answer text plus passage-level na prob.
struct ReaderPrediction {
  std::string text;
  double na_prob = 0.0;
  Span best_span{0, 0};
};
ReaderPrediction reader_predict(const ReaderModel& model, const Vocab& vocab,
                                const Example& ex);

JointPrediction joint_predict(const ReaderModel& reader, const Vocab& vocab,
                              const Example& ex, const VerifierForward* verifier,
                              double threshold);

// Exact threshold maximizing dataset F1 over the midpoint candidate set;
// ties go to the smallest candidate.
std::pair<double, double> tune_threshold(const std::vector<Prediction>& predictions,
                                         const std::vector<Example>& gold);

// Prediction file I/O: JSON map id -> {text, <prob_key>}.
void save_predictions(const std::string& path, const std::vector<Prediction>& preds,
                      const std::string& prob_key = "joint_na_prob");
std::vector<Prediction> load_predictions(const std::string& path);

// Global seed default: RTV_SEED when set, else `fallback`.
uint64_t seed_from_env(uint64_t fallback);

// The full desk-scale pipeline: synthetic data, reader training, verifier
// training, joint prediction, threshold tuning, report. Everything lands in
// out_dir; with equal seeds two runs produce byte-identical report.json.
struct E2EConfig {
  uint64_t seed = 0;
  int n_examples = 64;
  ReaderConfig reader_cfg;
  GptConfig seq_cfg;
  InteractiveConfig int_cfg;
  VerifierArch arch = VerifierArch::kInteractive;
  TrainConfig reader_train;
  TrainConfig verifier_train;
  std::string out_dir;
};
void run_e2e(const E2EConfig& cfg);

}  // namespace rtv
