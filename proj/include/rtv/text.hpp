#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rtv/rng.hpp"
#include "rtv/tensor.hpp"

namespace rtv {

constexpr int kMaxPassageTokens = 300;
constexpr int kMaxSentenceTokens = 150;

struct Token {
  std::string text;
  int start = 0;  // character offsets into the raw string, half-open
  int end = 0;
};

using Span = std::pair<int, int>;  // inclusive token indices

// One passage/question pair with answerability annotation.
struct Example {
  std::string id;
  std::vector<Token> passage_tokens;
  std::vector<Token> question_tokens;
  bool is_answerable = false;
  std::optional<Span> gold_span;
  std::optional<Span> plausible_span;
  std::vector<std::string> gold_answer_texts;  // all annotated answers, for eval
  std::string raw_passage;
};

// The passage sentence(s) containing a gold or plausible answer, plus the
// per-token answer flag.
struct AnswerSentence {
  std::vector<Token> tokens;
  std::vector<uint8_t> answer_mask;
  std::string source_example_id;
};

// Word vocabulary with fixed reserved indices.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kDelim = 2;  // $
  static constexpr int kStart = 3;
  static constexpr int kEnd = 4;
  static constexpr int kNumReserved = 5;

  Vocab();

  int add(const std::string& word);          // insert if absent, return index
  int lookup(const std::string& word) const;  // kUnk when absent
  const std::string& word(int index) const;
  int size() const { return static_cast<int>(words_.size()); }

  static Vocab build(const std::vector<Example>& examples);

 private:
  std::unordered_map<std::string, int> index_;
  std::vector<std::string> words_;
};

// Rule-based tokenizer: split on whitespace, peel leading/trailing
// punctuation into separate tokens, and split English contractions
// (n't 's 're 've 'll 'd 'm). Offsets always index the source string.
std::vector<Token> tokenize(const std::string& text);

// Sentence segmentation over a tokenized passage. A boundary follows ./!/?
// when the next token starts a fresh whitespace-separated capitalized word
// and the preceding word is not a known abbreviation. Returns half-open
// token ranges that partition the passage.
std::vector<std::pair<int, int>> split_sentences(const std::vector<Token>& tokens,
                                                 const std::string& raw);

// Minimal run of consecutive sentences covering `span`, truncated to
// kMaxSentenceTokens with the span kept inside.
AnswerSentence locate_answer_sentence(const Example& example, Span span);

struct LoadStats {
  int dropped_span_beyond_limit = 0;
};

// SQuAD 2.0 JSON reader. Character-level answer offsets are aligned to
// token spans; answerable questions train on the first listed answer and
// evaluate against all of them.
std::vector<Example> load_squad_json(const std::string& path,
                                     LoadStats* stats = nullptr);

enum class Phenomenon { kNegation, kAntonym, kEntitySwap, kImpossibleCondition };

struct SyntheticSpec {
  int n_examples = 100;
  uint64_t seed = 0;
  // Mixture of unanswerable phenomena, cycled in order for exact counts.
  double unanswerable_fraction = 0.5;
};

struct SyntheticData {
  std::vector<Example> train;
  std::vector<Example> dev;
};

// Desk-scale templated dataset. Answerable questions quote a passage fact;
// unanswerable ones perturb it (negation, antonym, entity swap, impossible
// condition) and carry the distractor fact as the plausible span. The
// phenomenon is recorded in the question id.
SyntheticData make_synthetic_dataset(const SyntheticSpec& spec);

// Serialize examples in the SQuAD 2.0 schema so synthetic data exercises
// the same loader as real data.
void save_squad_json(const std::string& path, const std::vector<Example>& examples);

// GloVe-style text embeddings: "word v1 v2 ... vd" per line. Words missing
// from the file get a seeded random vector.
Tensor load_word_embeddings(const std::string& path, const Vocab& vocab, int dim,
                            uint64_t seed);

std::string detokenize(const std::vector<Token>& tokens, int a, int b);
// Tokens flagged by the answer mask.
std::vector<Token> answer_tokens(const AnswerSentence& sentence);
// Exact source text covered by a token span of the passage.
std::string span_text(const Example& example, Span span);
std::vector<int> to_indices(const std::vector<Token>& tokens, const Vocab& vocab);

}  // namespace rtv
