#include "rtv/eval.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

namespace rtv {

std::string normalize_answer(const std::string& text) {
  std::string lowered;
  lowered.reserve(text.size());
  for (char c : text) {
    if (std::ispunct(static_cast<unsigned char>(c))) continue;
    lowered += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  std::istringstream ss(lowered);
  std::string word, out;
  while (ss >> word) {
    if (word == "a" || word == "an" || word == "the") continue;
    if (!out.empty()) out += " ";
    out += word;
  }
  return out;
}

namespace {

std::vector<std::string> norm_tokens(const std::string& normalized) {
  std::istringstream ss(normalized);
  std::vector<std::string> toks;
  std::string w;
  while (ss >> w) toks.push_back(w);
  return toks;
}

double token_f1(const std::string& pred_norm, const std::string& gold_norm) {
  if (pred_norm.empty() || gold_norm.empty())
    return pred_norm == gold_norm ? 1.0 : 0.0;
  auto p = norm_tokens(pred_norm);
  auto g = norm_tokens(gold_norm);
  std::unordered_map<std::string, int> gold_counts;
  for (const auto& t : g) ++gold_counts[t];
  int common = 0;
  for (const auto& t : p) {
    auto it = gold_counts.find(t);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  double precision = static_cast<double>(common) / static_cast<double>(p.size());
  double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

}  // namespace

std::pair<double, double> em_f1(const std::string& prediction,
                                const std::vector<std::string>& golds) {
  std::string pred_norm = normalize_answer(prediction);
  double em = 0.0, f1 = 0.0;
  for (const auto& gold : golds) {
    std::string gold_norm = normalize_answer(gold);
    if (pred_norm == gold_norm) em = 1.0;
    f1 = std::max(f1, token_f1(pred_norm, gold_norm));
  }
  return {em, f1};
}

std::vector<std::string> gold_strings(const Example& ex) {
  if (!ex.is_answerable) return {""};
  return ex.gold_answer_texts;
}

namespace {

const Prediction& find_prediction(
    const std::unordered_map<std::string, const Prediction*>& by_id,
    const Example& ex) {
  auto it = by_id.find(ex.id);
  if (it == by_id.end())
    throw std::runtime_error("evaluate: no prediction for id " + ex.id);
  return *it->second;
}

std::unordered_map<std::string, const Prediction*> index_predictions(
    const std::vector<Prediction>& predictions) {
  std::unordered_map<std::string, const Prediction*> by_id;
  for (const auto& p : predictions) by_id[p.id] = &p;
  return by_id;
}

ErrorCase classify(const Example& ex, const Prediction& pred, double threshold) {
  bool abstain = pred.joint_na_prob > threshold;
  if (ex.is_answerable) {
    if (abstain) return ErrorCase::kAnswerableAbstained;
    double em = em_f1(pred.text, gold_strings(ex)).first;
    return em == 1.0 ? ErrorCase::kAnswerableCorrect : ErrorCase::kAnswerableWrong;
  }
  return abstain ? ErrorCase::kUnanswerableAbstained
                 : ErrorCase::kUnanswerableAnswered;
}

}  // namespace

EvalReport evaluate(const std::vector<Prediction>& predictions,
                    const std::vector<Example>& gold, double threshold) {
  if (gold.empty()) throw std::invalid_argument("evaluate: empty gold set");
  auto by_id = index_predictions(predictions);
  EvalReport report;
  double em_sum = 0.0, f1_sum = 0.0, has_em = 0.0, has_f1 = 0.0;
  int acc_hits = 0;
  for (const auto& ex : gold) {
    const Prediction& pred = find_prediction(by_id, ex);
    std::string text = pred.joint_na_prob > threshold ? "" : pred.text;
    auto [em, f1] = em_f1(text, gold_strings(ex));
    ExampleResult r;
    r.id = ex.id;
    r.em = em;
    r.f1 = f1;
    r.gold_answerable = ex.is_answerable;
    r.predicted_answerable = !(pred.joint_na_prob > 0.5);
    r.error_case = classify(ex, pred, threshold);
    if (r.predicted_answerable == r.gold_answerable) ++acc_hits;
    em_sum += em;
    f1_sum += f1;
    if (ex.is_answerable) {
      has_em += em;
      has_f1 += f1;
      ++report.n_answerable;
    }
    ++report.case_counts[static_cast<int>(r.error_case)];
    report.per_example.push_back(std::move(r));
  }
  report.n_examples = static_cast<int>(gold.size());
  report.em = 100.0 * em_sum / report.n_examples;
  report.f1 = 100.0 * f1_sum / report.n_examples;
  if (report.n_answerable > 0) {
    report.has_ans_em = 100.0 * has_em / report.n_answerable;
    report.has_ans_f1 = 100.0 * has_f1 / report.n_answerable;
  }
  report.no_ans_acc = 100.0 * acc_hits / report.n_examples;
  report.pr_curve = pr_curve(predictions, gold);
  return report;
}

std::vector<double> threshold_candidates(const std::vector<Prediction>& predictions) {
  std::vector<double> probs;
  for (const auto& p : predictions) probs.push_back(p.joint_na_prob);
  std::sort(probs.begin(), probs.end());
  probs.erase(std::unique(probs.begin(), probs.end()), probs.end());
  std::vector<double> cands = {0.0, 1.0};
  for (size_t i = 0; i + 1 < probs.size(); ++i)
    cands.push_back(0.5 * (probs[i] + probs[i + 1]));
  std::sort(cands.begin(), cands.end());
  cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
  return cands;
}

double dataset_f1(const std::vector<Prediction>& predictions,
                  const std::vector<Example>& gold, double threshold) {
  auto by_id = index_predictions(predictions);
  double f1_sum = 0.0;
  for (const auto& ex : gold) {
    const Prediction& pred = find_prediction(by_id, ex);
    std::string text = pred.joint_na_prob > threshold ? "" : pred.text;
    f1_sum += em_f1(text, gold_strings(ex)).second;
  }
  return gold.empty() ? 0.0 : 100.0 * f1_sum / static_cast<double>(gold.size());
}

std::vector<std::pair<double, double>> pr_curve(
    const std::vector<Prediction>& predictions, const std::vector<Example>& gold) {
  auto by_id = index_predictions(predictions);
  int n_answerable = 0;
  for (const auto& ex : gold)
    if (ex.is_answerable) ++n_answerable;
  std::vector<std::pair<double, double>> points;
  for (double thr : threshold_candidates(predictions)) {
    double f1_answered = 0.0, f1_answerable = 0.0;
    int n_answered = 0;
    for (const auto& ex : gold) {
      const Prediction& pred = find_prediction(by_id, ex);
      if (pred.joint_na_prob > thr) continue;  // abstained
      double f1 = em_f1(pred.text, gold_strings(ex)).second;
      f1_answered += f1;
      ++n_answered;
      if (ex.is_answerable) f1_answerable += f1;
    }
    if (n_answered == 0) continue;
    double precision = 100.0 * f1_answered / n_answered;
    double recall =
        n_answerable > 0 ? 100.0 * f1_answerable / n_answerable : 0.0;
    points.emplace_back(recall, precision);
  }
  std::sort(points.begin(), points.end());
  return points;
}

std::map<int, int> categorize_cases(const std::vector<Prediction>& predictions,
                                    const std::vector<Example>& gold,
                                    double threshold) {
  auto by_id = index_predictions(predictions);
  std::map<int, int> counts;
  for (int c = 1; c <= 5; ++c) counts[c] = 0;
  for (const auto& ex : gold)
    ++counts[static_cast<int>(classify(ex, find_prediction(by_id, ex), threshold))];
  return counts;
}

void write_report(const EvalReport& report, const std::string& json_path,
                  const std::string& text_path, const std::string& csv_path) {
  nlohmann::json j;
  j["em"] = report.em;
  j["f1"] = report.f1;
  j["has_ans_em"] = report.has_ans_em;
  j["has_ans_f1"] = report.has_ans_f1;
  j["no_ans_acc"] = report.no_ans_acc;
  j["n_examples"] = report.n_examples;
  j["n_answerable"] = report.n_answerable;
  for (const auto& [c, n] : report.case_counts) {
    j["case_counts"]["case" + std::to_string(c)] = n;
    j["case_percent"]["case" + std::to_string(c)] =
        100.0 * n / std::max(1, report.n_examples);
  }
  {
    std::ofstream os(json_path);
    if (!os) throw std::runtime_error("cannot write " + json_path);
    os << j.dump(1) << "\n";
  }
  {
    std::ofstream os(text_path);
    if (!os) throw std::runtime_error("cannot write " + text_path);
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %8s %10s\n", "", "HasAns",
                  "HasAns", "All", "All", "NoAns");
    os << line;
    std::snprintf(line, sizeof(line), "%-12s %8s %8s %8s %8s %10s\n", "", "EM", "F1",
                  "EM", "F1", "ACC");
    os << line;
    std::snprintf(line, sizeof(line), "%-12s %8.1f %8.1f %8.1f %8.1f %10.1f\n",
                  "result", report.has_ans_em, report.has_ans_f1, report.em,
                  report.f1, report.no_ans_acc);
    os << line;
    os << "\n";
    for (const auto& [c, n] : report.case_counts) {
      std::snprintf(line, sizeof(line), "Case%d  %6d  (%.1f%%)\n", c, n,
                    100.0 * n / std::max(1, report.n_examples));
      os << line;
    }
  }
  {
    std::ofstream os(csv_path);
    if (!os) throw std::runtime_error("cannot write " + csv_path);
    os << "recall,precision\n";
    for (const auto& [recall, precision] : report.pr_curve) {
      char line[80];
      std::snprintf(line, sizeof(line), "%.6f,%.6f\n", recall, precision);
      os << line;
    }
  }
}

}  // namespace rtv
