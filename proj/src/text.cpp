#include "rtv/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <cstring>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rtv {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }
bool is_upper(char c) { return std::isupper(static_cast<unsigned char>(c)) != 0; }

std::string lower(const std::string& s) {
  std::string out = s;
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Contraction suffixes, longest first. "n't" keeps its n with the suffix.
const char* kContractions[] = {"n't", "'re", "'ve", "'ll", "'s", "'d", "'m"};

// Words after which a period does not end a sentence.
const std::set<std::string>& abbreviations() {
  static const std::set<std::string> abbr = {
      "mr",  "mrs", "ms",  "dr",   "prof", "st",  "mt",  "etc", "vs",
      "jr",  "sr",  "no",  "gen",  "col",  "lt",  "capt", "fig", "inc",
      "ltd", "co",  "e.g", "i.e",  "u.s",  "a.m", "p.m"};
  return abbr;
}

void emit_word(std::vector<Token>& out, const std::string& text, int s, int e) {
  // split a trailing contraction if the remainder is non-empty
  std::string low = lower(text.substr(static_cast<size_t>(s), static_cast<size_t>(e - s)));
  for (const char* suf : kContractions) {
    size_t n = std::strlen(suf);
    if (low.size() > n && low.size() >= n && low.compare(low.size() - n, n, suf) == 0 &&
        static_cast<size_t>(e - s) > n) {
      int split = e - static_cast<int>(n);
      out.push_back({text.substr(static_cast<size_t>(s), static_cast<size_t>(split - s)), s, split});
      out.push_back({text.substr(static_cast<size_t>(split), n), split, e});
      return;
    }
  }
  out.push_back({text.substr(static_cast<size_t>(s), static_cast<size_t>(e - s)), s, e});
}

}  // namespace

std::vector<Token> tokenize(const std::string& text) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < text.size()) {
    if (is_space(text[i])) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    int s = static_cast<int>(i), e = static_cast<int>(j);
    // peel leading punctuation
    while (e - s > 1 && is_punct(text[static_cast<size_t>(s)]) &&
           text[static_cast<size_t>(s)] != '\'') {
      out.push_back({text.substr(static_cast<size_t>(s), 1), s, s + 1});
      ++s;
    }
    // peel trailing punctuation (kept aside, emitted after the core)
    int core_end = e;
    while (core_end - s > 1 && is_punct(text[static_cast<size_t>(core_end - 1)])) {
      // keep apostrophes that belong to a contraction suffix
      char c = text[static_cast<size_t>(core_end - 1)];
      if (c == '\'' || c == 't') break;
      --core_end;
    }
    emit_word(out, text, s, core_end);
    for (int p = core_end; p < e; ++p)
      out.push_back({text.substr(static_cast<size_t>(p), 1), p, p + 1});
    i = j;
  }
  return out;
}

std::vector<std::pair<int, int>> split_sentences(const std::vector<Token>& tokens,
                                                 const std::string& raw) {
  std::vector<std::pair<int, int>> ranges;
  int n = static_cast<int>(tokens.size());
  int start = 0;
  for (int k = 0; k + 1 < n; ++k) {
    const std::string& t = tokens[static_cast<size_t>(k)].text;
    if (t != "." && t != "!" && t != "?") continue;
    const Token& next = tokens[static_cast<size_t>(k + 1)];
    bool gap = false;
    for (int c = tokens[static_cast<size_t>(k)].end; c < next.start; ++c)
      if (is_space(raw[static_cast<size_t>(c)])) gap = true;
    if (!gap || next.text.empty() || !is_upper(next.text[0])) continue;
    if (t == "." && k > 0) {
      std::string prev = lower(tokens[static_cast<size_t>(k - 1)].text);
      if (abbreviations().count(prev)) continue;
    }
    ranges.emplace_back(start, k + 1);
    start = k + 1;
  }
  if (start < n || n == 0) ranges.emplace_back(start, n);
  return ranges;
}

AnswerSentence locate_answer_sentence(const Example& example, Span span) {
  int n = static_cast<int>(example.passage_tokens.size());
  if (span.first < 0 || span.second < span.first || span.second >= n)
    throw std::out_of_range("locate_answer_sentence: span (" +
                            std::to_string(span.first) + "," +
                            std::to_string(span.second) + ") outside passage of " +
                            std::to_string(n) + " tokens");
  auto sents = split_sentences(example.passage_tokens, example.raw_passage);
  int lo = 0, hi = n;  // half-open covering run
  for (auto [s, e] : sents) {
    if (span.first >= s && span.first < e) lo = s;
    if (span.second >= s && span.second < e) hi = e;
  }
  // truncate to the limit keeping the span inside
  if (hi - lo > kMaxSentenceTokens) {
    lo = std::max(lo, std::min(span.first, hi - kMaxSentenceTokens));
    lo = std::max(lo, span.second + 1 - kMaxSentenceTokens);
    hi = std::min(hi, lo + kMaxSentenceTokens);
  }
  AnswerSentence out;
  out.source_example_id = example.id;
  for (int t = lo; t < hi; ++t) {
    out.tokens.push_back(example.passage_tokens[static_cast<size_t>(t)]);
    out.answer_mask.push_back(t >= span.first && t <= span.second ? 1 : 0);
  }
  return out;
}

// ---- vocab ----

Vocab::Vocab() {
  words_ = {"<pad>", "<unk>", "$", "<s>", "</s>"};
  for (int i = 0; i < kNumReserved; ++i) index_[words_[static_cast<size_t>(i)]] = i;
}

int Vocab::add(const std::string& word) {
  auto it = index_.find(word);
  if (it != index_.end()) return it->second;
  int id = static_cast<int>(words_.size());
  index_[word] = id;
  words_.push_back(word);
  return id;
}

int Vocab::lookup(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? kUnk : it->second;
}

const std::string& Vocab::word(int index) const {
  return words_.at(static_cast<size_t>(index));
}

Vocab Vocab::build(const std::vector<Example>& examples) {
  Vocab v;
  for (const auto& ex : examples) {
    for (const auto& t : ex.passage_tokens) v.add(lower(t.text));
    for (const auto& t : ex.question_tokens) v.add(lower(t.text));
  }
  return v;
}

std::vector<int> to_indices(const std::vector<Token>& tokens, const Vocab& vocab) {
  std::vector<int> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab.lookup(lower(t.text)));
  return out;
}

std::string detokenize(const std::vector<Token>& tokens, int a, int b) {
  std::string out;
  for (int i = a; i <= b; ++i) {
    if (i > a) out += " ";
    out += tokens[static_cast<size_t>(i)].text;
  }
  return out;
}

std::vector<Token> answer_tokens(const AnswerSentence& sentence) {
  std::vector<Token> out;
  for (size_t i = 0; i < sentence.tokens.size(); ++i)
    if (i < sentence.answer_mask.size() && sentence.answer_mask[i])
      out.push_back(sentence.tokens[i]);
  return out;
}

std::string span_text(const Example& example, Span span) {
  const Token& t0 = example.passage_tokens[static_cast<size_t>(span.first)];
  const Token& t1 = example.passage_tokens[static_cast<size_t>(span.second)];
  return example.raw_passage.substr(static_cast<size_t>(t0.start),
                                    static_cast<size_t>(t1.end - t0.start));
}

// ---- loading ----

namespace {

// Align a character range to the covering token span (mid-token offsets
// snap to the whole token).
Span align_char_span(const std::vector<Token>& tokens, int cs, int ce,
                     const std::string& id) {
  int a = -1, b = -1;
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i) {
    const Token& t = tokens[static_cast<size_t>(i)];
    if (a < 0 && t.end > cs) a = i;
    if (t.start < ce) b = i;
  }
  if (a < 0 || b < a)
    throw std::runtime_error("answer alignment failed for question " + id);
  return {a, b};
}

struct RawAnswer {
  std::string text;
  int start = 0;
};

Example build_example(std::string id, const std::string& context,
                      const std::vector<Token>& context_tokens,
                      const std::string& question, bool is_impossible,
                      const std::vector<RawAnswer>& answers,
                      const std::vector<RawAnswer>& plausible) {
  Example ex;
  ex.id = std::move(id);
  ex.raw_passage = context;
  ex.passage_tokens = context_tokens;
  ex.question_tokens = tokenize(question);
  if (ex.passage_tokens.empty() || ex.question_tokens.empty())
    throw std::runtime_error("empty passage or question in example " + ex.id);
  ex.is_answerable = !is_impossible;
  if (ex.is_answerable) {
    if (answers.empty())
      throw std::runtime_error("answerable question " + ex.id + " has no answers");
    for (const auto& a : answers) {
      if (context.compare(static_cast<size_t>(a.start), a.text.size(), a.text) != 0)
        throw std::runtime_error("answer text does not match passage at answer_start in " +
                                 ex.id);
      ex.gold_answer_texts.push_back(a.text);
    }
    ex.gold_span = align_char_span(ex.passage_tokens, answers[0].start,
                                   answers[0].start + static_cast<int>(answers[0].text.size()),
                                   ex.id);
  } else if (!plausible.empty()) {
    const auto& a = plausible[0];
    if (context.compare(static_cast<size_t>(a.start), a.text.size(), a.text) != 0)
      throw std::runtime_error("plausible answer text does not match passage in " + ex.id);
    ex.plausible_span = align_char_span(ex.passage_tokens, a.start,
                                        a.start + static_cast<int>(a.text.size()), ex.id);
  }
  return ex;
}

// Enforce the passage length limit. Returns false when the protected span
// lies entirely beyond the cut and the example must be dropped.
bool apply_truncation(Example& ex) {
  int n = static_cast<int>(ex.passage_tokens.size());
  if (n <= kMaxPassageTokens) return true;
  std::optional<Span> protect = ex.gold_span ? ex.gold_span : ex.plausible_span;
  int window = 0;
  if (protect) {
    if (protect->first >= kMaxPassageTokens) return false;
    if (protect->second >= kMaxPassageTokens)
      window = protect->second - (kMaxPassageTokens - 1);
  }
  ex.passage_tokens = std::vector<Token>(
      ex.passage_tokens.begin() + window,
      ex.passage_tokens.begin() + window + kMaxPassageTokens);
  if (ex.gold_span)
    ex.gold_span = Span{ex.gold_span->first - window, ex.gold_span->second - window};
  if (ex.plausible_span)
    ex.plausible_span =
        Span{ex.plausible_span->first - window, ex.plausible_span->second - window};
  return true;
}

}  // namespace

std::vector<Example> load_squad_json(const std::string& path, LoadStats* stats) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("malformed JSON in " + path + ": " + e.what());
  }
  std::vector<Example> out;
  for (const auto& article : j.at("data")) {
    for (const auto& para : article.at("paragraphs")) {
      std::string context = para.at("context").get<std::string>();
      auto context_tokens = tokenize(context);
      for (const auto& qa : para.at("qas")) {
        auto read_answers = [&](const char* key) {
          std::vector<RawAnswer> as;
          if (qa.contains(key))
            for (const auto& a : qa.at(key))
              as.push_back({a.at("text").get<std::string>(), a.at("answer_start").get<int>()});
          return as;
        };
        Example ex = build_example(qa.at("id").get<std::string>(), context,
                                   context_tokens, qa.at("question").get<std::string>(),
                                   qa.value("is_impossible", false),
                                   read_answers("answers"), read_answers("plausible_answers"));
        if (!apply_truncation(ex)) {
          if (stats) ++stats->dropped_span_beyond_limit;
          continue;
        }
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

void save_squad_json(const std::string& path, const std::vector<Example>& examples) {
  nlohmann::json paragraphs = nlohmann::json::array();
  for (const auto& ex : examples) {
    nlohmann::json qa;
    qa["id"] = ex.id;
    qa["question"] = detokenize(ex.question_tokens, 0,
                                static_cast<int>(ex.question_tokens.size()) - 1);
    qa["is_impossible"] = !ex.is_answerable;
    qa["answers"] = nlohmann::json::array();
    qa["plausible_answers"] = nlohmann::json::array();
    if (ex.gold_span) {
      const Token& t0 = ex.passage_tokens[static_cast<size_t>(ex.gold_span->first)];
      qa["answers"].push_back({{"text", span_text(ex, *ex.gold_span)},
                               {"answer_start", t0.start}});
    }
    if (ex.plausible_span) {
      const Token& t0 = ex.passage_tokens[static_cast<size_t>(ex.plausible_span->first)];
      qa["plausible_answers"].push_back({{"text", span_text(ex, *ex.plausible_span)},
                                         {"answer_start", t0.start}});
    }
    paragraphs.push_back({{"context", ex.raw_passage}, {"qas", nlohmann::json::array({qa})}});
  }
  nlohmann::json root = {
      {"version", "v2.0"},
      {"data", nlohmann::json::array({{{"title", "synthetic"}, {"paragraphs", paragraphs}}})}};
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  os << root.dump(1) << "\n";
}

// ---- synthetic data ----

namespace {

const std::vector<std::string> kNames = {"Alice", "Bob",   "Carol", "David",
                                         "Emma",  "Frank", "Grace", "Henry"};
const std::vector<std::string> kSwapNames = {"Victor", "Wendy", "Xavier", "Yvonne"};
const std::vector<std::string> kCities = {"Paris",  "London", "Tokyo", "Berlin",
                                          "Madrid", "Oslo",   "Cairo", "Lima"};
const std::vector<std::string> kJobs = {"teacher", "doctor", "pilot",
                                        "farmer",  "singer", "lawyer"};
const std::vector<std::string> kMonths = {"January", "March", "June",
                                          "August",  "October", "December"};

struct Fact {
  std::string person, city, worker, job, month;
};

int find_token(const std::vector<Token>& tokens, const std::string& word) {
  for (int i = 0; i < static_cast<int>(tokens.size()); ++i)
    if (tokens[static_cast<size_t>(i)].text == word) return i;
  throw std::logic_error("synthetic generator: token not found: " + word);
}

Example make_one(int idx, double unans_frac, const std::string& tag, Rng& rng) {
  Fact f;
  f.person = kNames[rng.index(kNames.size())];
  do {
    f.worker = kNames[rng.index(kNames.size())];
  } while (f.worker == f.person);
  f.city = kCities[rng.index(kCities.size())];
  f.job = kJobs[rng.index(kJobs.size())];
  f.month = kMonths[rng.index(kMonths.size())];

  std::string context = f.person + " lives in " + f.city + ". " + f.worker +
                        " works as a " + f.job + ". The price increased in " +
                        f.month + ".";
  auto ptoks = tokenize(context);

  // Deterministic label schedule: example idx is unanswerable when the
  // running count floor(idx * frac) advances, giving exact mixture counts.
  // Answerable questions cycle over the three facts; unanswerable ones over
  // the four phenomena, keyed off the per-type ordinal.
  int unans_before = static_cast<int>(std::floor(idx * unans_frac + 1e-9));
  int unans_after = static_cast<int>(std::floor((idx + 1) * unans_frac + 1e-9));
  bool answerable = unans_after == unans_before;
  int ordinal = answerable ? idx - unans_before : unans_before;
  std::string question, answer_word, phen;
  if (answerable) {
    switch (ordinal % 3) {
      case 0:
        question = "Where does " + f.person + " live ?";
        answer_word = f.city;
        break;
      case 1:
        question = "What does " + f.worker + " work as ?";
        answer_word = f.job;
        break;
      default:
        question = "When did the price increase ?";
        answer_word = f.month;
        break;
    }
    phen = "answerable";
  } else {
    switch (ordinal % 4) {
      case 0:
        question = "Where does " + f.person + " not live ?";
        answer_word = f.city;
        phen = "negation";
        break;
      case 1:
        question = "When did the price decrease ?";
        answer_word = f.month;
        phen = "antonym";
        break;
      case 2: {
        std::string stranger = kSwapNames[rng.index(kSwapNames.size())];
        question = "Where does " + stranger + " live ?";
        answer_word = f.city;
        phen = "entity-swap";
        break;
      }
      default:
        question = "Where does " + f.person + " live during winter ?";
        answer_word = f.city;
        phen = "impossible-condition";
        break;
    }
  }

  int at = find_token(ptoks, answer_word);
  RawAnswer ans{answer_word, ptoks[static_cast<size_t>(at)].start};
  std::string id = "synth-" + tag + "-" + std::to_string(idx) + "-" + phen;
  if (answerable)
    return build_example(id, context, ptoks, question, false, {ans}, {});
  return build_example(id, context, ptoks, question, true, {}, {ans});
}

std::vector<Example> make_split(int n, double unans_frac, const std::string& tag,
                                Rng& rng) {
  std::vector<Example> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(make_one(i, unans_frac, tag, rng));
  return out;
}

}  // namespace

SyntheticData make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.unanswerable_fraction < 0.0 || spec.unanswerable_fraction > 1.0)
    throw std::invalid_argument("unanswerable_fraction outside [0, 1]");
  Rng rng(spec.seed);
  SyntheticData data;
  data.train = make_split(spec.n_examples, spec.unanswerable_fraction, "train", rng);
  data.dev = make_split(spec.n_examples, spec.unanswerable_fraction, "dev", rng);
  return data;
}

// ---- embeddings ----

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace

Tensor load_word_embeddings(const std::string& path, const Vocab& vocab, int dim,
                            uint64_t seed) {
  Tensor table = Tensor::zeros({vocab.size(), dim});
  std::vector<bool> filled(static_cast<size_t>(vocab.size()), false);
  if (!path.empty()) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open embedding file " + path);
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string word;
      ls >> word;
      int id = vocab.lookup(word);
      if (id == Vocab::kUnk && word != vocab.word(Vocab::kUnk)) continue;
      for (int d = 0; d < dim; ++d) {
        double v;
        if (!(ls >> v))
          throw std::runtime_error("embedding line for '" + word + "' has fewer than " +
                                   std::to_string(dim) + " values");
        table.raw()[static_cast<size_t>(id * dim + d)] = v;
      }
      filled[static_cast<size_t>(id)] = true;
    }
  }
  for (int w = 0; w < vocab.size(); ++w) {
    if (filled[static_cast<size_t>(w)] || w == Vocab::kPad) continue;
    Rng rng(seed ^ fnv1a(vocab.word(w)));
    for (int d = 0; d < dim; ++d)
      table.raw()[static_cast<size_t>(w * dim + d)] = rng.uniform(-0.1, 0.1);
  }
  return table;
}

}  // namespace rtv
