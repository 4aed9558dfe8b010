#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "rtv/text.hpp"

namespace rtv {

// Five-way joint taxonomy of gold answerability, the thresholded no-answer
// decision, and answer correctness.
enum class ErrorCase {
  kAnswerableCorrect = 1,     // answered, answer exact
  kUnanswerableAbstained = 2,
  kAnswerableWrong = 3,       // answered, answer inexact
  kUnanswerableAnswered = 4,
  kAnswerableAbstained = 5,
};

struct Prediction {
  std::string id;
  std::string text;
  double joint_na_prob = 0.0;
};

struct ExampleResult {
  std::string id;
  double em = 0.0;
  double f1 = 0.0;
  bool gold_answerable = false;
  bool predicted_answerable = false;
  ErrorCase error_case = ErrorCase::kAnswerableCorrect;
};

struct EvalReport {
  double em = 0.0, f1 = 0.0;          // overall, in [0, 100]
  double has_ans_em = 0.0, has_ans_f1 = 0.0;
  double no_ans_acc = 0.0;            // binary answerability at threshold 0.5
  int n_examples = 0;
  int n_answerable = 0;
  std::vector<ExampleResult> per_example;
  std::vector<std::pair<double, double>> pr_curve;  // (recall, precision)
  std::map<int, int> case_counts;                   // Case1..Case5 -> count
};

// Official-style answer normalization: lowercase, strip punctuation, drop
// articles, collapse whitespace.
std::string normalize_answer(const std::string& text);

// Exact match and token-overlap F1 against the best of several golds.
// Unanswerable gold is the single empty string.
std::pair<double, double> em_f1(const std::string& prediction,
                                const std::vector<std::string>& golds);

// Gold answer strings for scoring: all annotated answers, or [""] for an
// unanswerable question.
std::vector<std::string> gold_strings(const Example& ex);

// Full scoring pass. Answers are blanked when joint_na_prob exceeds
// `threshold`; NoAns ACC always uses the fixed 0.5 threshold.
EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<Example>& gold, double threshold);

// F1-mass precision-recall curve swept over the candidate threshold set.
std::vector<std::pair<double, double>> pr_curve(
    const std::vector<Prediction>& predictions, const std::vector<Example>& gold);

std::map<int, int> categorize_cases(const std::vector<Prediction>& predictions,
                                    const std::vector<Example>& gold,
                                    double threshold);

// Candidate thresholds for exact tuning: {0, 1} plus midpoints between
// consecutive distinct joint_na_prob values.
std::vector<double> threshold_candidates(const std::vector<Prediction>& predictions);

// Dataset F1 (in [0, 100]) after applying `threshold`.
double dataset_f1(const std::vector<Prediction>& predictions,
                  const std::vector<Example>& gold, double threshold);

// Human-readable table plus machine-readable JSON and a PR-curve CSV.
void write_report(const EvalReport& report, const std::string& json_path,
                  const std::string& text_path, const std::string& csv_path);

}  // namespace rtv
