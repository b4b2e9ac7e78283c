#pragma once

// Pretrained-scorer interfaces, the dialogue-level aggregation formulas that
// turn per-utterance/per-pair scores into dialogue-level proxy scores, and
// deterministic lexical scorer implementations so the whole pipeline runs
// without model downloads. Real pretrained backends plug into the same
// interfaces via the registry below.

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dialeval/corpus.hpp"

namespace dialeval {

// ---------------------------------------------------------------------------
// Scorer interfaces

class QaScorer {
 public:
  virtual ~QaScorer() = default;
  // Relevance of `answer` to `question`, in [0, 1]. Deterministic for fixed inputs.
  virtual double score(const std::string& question, const std::string& answer) const = 0;
};

struct NliJudgment {
  double entail = 0.0;
  double neutral = 1.0;
  double contradict = 0.0;
};

class NliScorer {
 public:
  virtual ~NliScorer() = default;
  // Each component in [0, 1]; components sum to 1 within 1e-4.
  virtual NliJudgment score(const std::string& premise, const std::string& hypothesis) const = 0;
};

class SentimentClassifier {
 public:
  virtual ~SentimentClassifier() = default;
  virtual std::string classify(const std::string& text) const = 0;
  virtual const std::set<std::string>& labels() const = 0;
  virtual const std::set<std::string>& positive_labels() const = 0;
};

// ---------------------------------------------------------------------------
// Dialogue-level proxy scores

enum class ProxyKind { qa_relevance, contradiction, entailment, pos_count };

inline std::string_view to_string(ProxyKind k) {
  switch (k) {
    case ProxyKind::qa_relevance: return "qa_relevance";
    case ProxyKind::contradiction: return "contradiction";
    case ProxyKind::entailment: return "entailment";
    case ProxyKind::pos_count: return "pos_count";
  }
  return "?";
}

struct ProxyScore {
  std::string dialogue_id;
  ProxyKind kind = ProxyKind::qa_relevance;
  double value = 0.0;          // a count for pos_count, in [0,1] otherwise
  std::size_t n_components = 0;  // how many pair/utterance scores were averaged
};

namespace detail {

inline void check_judgment(const NliJudgment& j) {
  const double parts[3] = {j.entail, j.neutral, j.contradict};
  double sum = 0.0;
  for (double p : parts) {
    if (p < 0.0 || p > 1.0) throw Error("NLI judgment component outside [0,1]");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-4) throw Error("NLI judgment components do not sum to 1");
}

}  // namespace detail

// An utterance asks a question when its text, after stripping trailing
// whitespace and closing quotes/brackets, ends with '?'.
inline bool ends_with_question(std::string_view text) {
  std::size_t end = text.size();
  const std::string_view strip = " \t\r\n\"')]}";
  while (end > 0 && strip.find(text[end - 1]) != std::string_view::npos) --end;
  return end > 0 && text[end - 1] == '?';
}

// (question index, answer index) for every question utterance that has an
// immediate successor, in dialogue order.
inline std::vector<std::pair<std::size_t, std::size_t>> find_qa_pairs(const Dialogue& d) {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t i = 0; i + 1 < d.utterances.size(); ++i)
    if (ends_with_question(d.utterances[i].text)) pairs.emplace_back(i, i + 1);
  return pairs;
}

// Mean QA relevance over all question-answer pairs. Eligible dialogues have
// more than 4 utterances and at least one QA pair; everything else raises
// EligibilityError for the caller to filter out.
inline ProxyScore dialogue_qa_relevance(const Dialogue& d, const QaScorer& scorer) {
  if (d.utterances.size() <= 4)
    throw EligibilityError("dialogue '" + d.id + "' has " +
                           std::to_string(d.utterances.size()) +
                           " utterances; QA relevance needs more than 4");
  const auto pairs = find_qa_pairs(d);
  if (pairs.empty())
    throw EligibilityError("dialogue '" + d.id + "' has no question-answer pair");

  double sum = 0.0;
  for (const auto& [q, a] : pairs) {
    const double s = scorer.score(d.utterances[q].text, d.utterances[a].text);
    if (s < 0.0 || s > 1.0) throw Error("QA scorer returned a value outside [0,1]");
    sum += s;
  }
  return {d.id, ProxyKind::qa_relevance, sum / static_cast<double>(pairs.size()), pairs.size()};
}

// Mean contradiction mass over the k-1 adjacent utterance pairs, with the
// earlier utterance as premise.
inline ProxyScore dialogue_contradiction(const Dialogue& d, const NliScorer& scorer) {
  const std::size_t k = d.utterances.size();
  if (k < 2) throw Error("dialogue '" + d.id + "' needs >= 2 utterances for contradiction scoring");
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) {
    const NliJudgment j = scorer.score(d.utterances[i].text, d.utterances[i + 1].text);
    detail::check_judgment(j);
    sum += j.contradict;
  }
  return {d.id, ProxyKind::contradiction, sum / static_cast<double>(k - 1), k - 1};
}

// Mean entailment mass over all (k-1)k/2 unordered utterance pairs, with the
// earlier utterance as premise.
inline ProxyScore dialogue_entailment(const Dialogue& d, const NliScorer& scorer) {
  const std::size_t k = d.utterances.size();
  if (k < 2) throw Error("dialogue '" + d.id + "' needs >= 2 utterances for entailment scoring");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i + 1; j < k; ++j) {
      const NliJudgment judgment = scorer.score(d.utterances[i].text, d.utterances[j].text);
      detail::check_judgment(judgment);
      sum += judgment.entail;
      ++n;
    }
  return {d.id, ProxyKind::entailment, sum / static_cast<double>(n), n};
}

inline ProxyScore count_positive_utterances(const Dialogue& d, const SentimentClassifier& clf) {
  std::size_t count = 0;
  for (const Utterance& u : d.utterances)
    if (clf.positive_labels().count(clf.classify(u.text))) ++count;
  return {d.id, ProxyKind::pos_count, static_cast<double>(count), d.utterances.size()};
}

inline void write_proxy_csv(std::ostream& out, const std::vector<ProxyScore>& scores) {
  out << "dialogue_id,kind,value,n_components\n";
  for (const ProxyScore& s : scores)
    out << csv_escape(s.dialogue_id) << ',' << to_string(s.kind) << ','
        << format_double(s.value) << ',' << s.n_components << '\n';
}

// ---------------------------------------------------------------------------
// Lexical scorer implementations
//
// These are deterministic, dependency-free stand-ins with the same contracts
// as the pretrained models: useful for tests, demos and CPU-only runs.

namespace lexicon {

inline const std::set<std::string>& stopwords() {
  static const std::set<std::string> words = {
      "a",    "an",   "and",  "are", "as",   "at",   "be",   "but", "by",  "did",
      "do",   "does", "for",  "had", "has",  "have", "he",   "her", "him", "his",
      "i",    "in",   "is",   "it",  "its",  "me",   "my",   "of",  "on",  "or",
      "our",  "she",  "so",   "that", "the", "their", "them", "they", "this", "to",
      "was",  "we",   "were", "what", "when", "who",  "will", "with", "you", "your"};
  return words;
}

inline const std::set<std::string>& negations() {
  static const std::set<std::string> words = {
      "not", "no", "never", "none", "nothing", "cannot", "cant", "wont", "dont",
      "didnt", "doesnt", "isnt", "arent", "wasnt", "werent", "wouldnt", "couldnt",
      "shouldnt", "don", "didn", "doesn", "isn", "aren", "wasn", "weren", "won",
      "wouldn", "couldn", "shouldn", "t"};
  return words;
}

inline const std::vector<std::pair<std::string, std::string>>& antonyms() {
  static const std::vector<std::pair<std::string, std::string>> pairs = {
      {"good", "bad"},     {"love", "hate"},     {"like", "dislike"},
      {"yes", "no"},       {"always", "never"},  {"happy", "sad"},
      {"hot", "cold"},     {"big", "small"},     {"open", "closed"},
      {"right", "wrong"},  {"agree", "disagree"}, {"true", "false"},
      {"early", "late"},   {"cheap", "expensive"}};
  return pairs;
}

// Content words: lowercase alphanumeric tokens minus stopwords and negations.
inline std::set<std::string> content_words(const std::string& text) {
  std::set<std::string> out;
  for (std::string& w : word_tokens(text))
    if (!stopwords().count(w) && !negations().count(w)) out.insert(std::move(w));
  return out;
}

inline bool has_negation(const std::string& text) {
  for (const std::string& w : word_tokens(text))
    if (negations().count(w)) return true;
  return false;
}

}  // namespace lexicon

// Jaccard similarity over content words. Returns 0 when either side has no
// content words.
class LexicalQaScorer final : public QaScorer {
 public:
  double score(const std::string& question, const std::string& answer) const override {
    const auto q = lexicon::content_words(question);
    const auto a = lexicon::content_words(answer);
    if (q.empty() || a.empty()) return 0.0;
    std::size_t inter = 0;
    for (const std::string& w : q) inter += a.count(w);
    const std::size_t uni = q.size() + a.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
  }
};

// Keyword NLI: a negation-parity or antonym hit yields contradiction mass
// scaled by content overlap; otherwise token containment of the hypothesis in
// the premise yields entailment mass. Components sum to 1 exactly.
class KeywordNliScorer final : public NliScorer {
 public:
  NliJudgment score(const std::string& premise, const std::string& hypothesis) const override {
    const auto p = lexicon::content_words(premise);
    const auto h = lexicon::content_words(hypothesis);

    std::size_t inter = 0;
    for (const std::string& w : h) inter += p.count(w);
    const double containment =
        h.empty() ? 0.0 : static_cast<double>(inter) / static_cast<double>(h.size());

    const bool neg_mismatch = lexicon::has_negation(premise) != lexicon::has_negation(hypothesis);
    bool antonym_hit = false;
    for (const auto& [a, b] : lexicon::antonyms()) {
      if ((p.count(a) && h.count(b)) || (p.count(b) && h.count(a))) {
        antonym_hit = true;
        break;
      }
    }

    double contra = 0.0;
    if (neg_mismatch || antonym_hit) contra = 0.5 + 0.4 * containment;

    NliJudgment j;
    j.contradict = contra;
    j.entail = (1.0 - contra) * containment;
    j.neutral = (1.0 - contra) * (1.0 - containment);
    return j;
  }
};

// Emotion lexicon classifier over {joy, love, surprise, anger, sadness, fear,
// neutral}; ties and lexicon misses fall back to neutral.
class LexiconSentimentClassifier final : public SentimentClassifier {
 public:
  explicit LexiconSentimentClassifier(
      std::set<std::string> positive = {"joy", "love", "surprise"})
      : positive_(std::move(positive)) {
    for (const std::string& label : positive_)
      if (!labels_.count(label))
        throw Error("positive label '" + label + "' is not in the classifier label set");
  }

  std::string classify(const std::string& text) const override {
    std::map<std::string, int> hits;
    for (const std::string& w : word_tokens(text)) {
      auto it = table().find(w);
      if (it != table().end()) ++hits[it->second];
    }
    std::string best = "neutral";
    int best_count = 0;
    for (const auto& [label, count] : hits)
      if (count > best_count) {  // ties keep the lexicographically first label
        best = label;
        best_count = count;
      }
    return best;
  }

  const std::set<std::string>& labels() const override { return labels_; }
  const std::set<std::string>& positive_labels() const override { return positive_; }

 private:
  static const std::map<std::string, std::string>& table() {
    static const std::map<std::string, std::string> t = {
        {"happy", "joy"},      {"glad", "joy"},       {"joy", "joy"},
        {"wonderful", "joy"},  {"great", "joy"},      {"fantastic", "joy"},
        {"delighted", "joy"},  {"awesome", "joy"},    {"fun", "joy"},
        {"enjoy", "joy"},      {"enjoyed", "joy"},    {"amazing", "joy"},
        {"excellent", "joy"},  {"nice", "joy"},       {"pleased", "joy"},
        {"love", "love"},      {"adore", "love"},     {"lovely", "love"},
        {"dear", "love"},      {"sweet", "love"},     {"charming", "love"},
        {"wow", "surprise"},   {"surprised", "surprise"}, {"surprising", "surprise"},
        {"unexpected", "surprise"}, {"astonishing", "surprise"}, {"incredible", "surprise"},
        {"angry", "anger"},    {"furious", "anger"},  {"annoyed", "anger"},
        {"hate", "anger"},     {"terrible", "anger"}, {"awful", "anger"},
        {"mad", "anger"},      {"sad", "sadness"},    {"unhappy", "sadness"},
        {"sorry", "sadness"},  {"miserable", "sadness"}, {"cry", "sadness"},
        {"disappointed", "sadness"}, {"gloomy", "sadness"}, {"afraid", "fear"},
        {"scared", "fear"},    {"fear", "fear"},      {"worried", "fear"},
        {"anxious", "fear"},   {"nervous", "fear"}};
    return t;
  }

  std::set<std::string> labels_ = {"joy", "love", "surprise", "anger", "sadness", "fear", "neutral"};
  std::set<std::string> positive_;
};

// ---------------------------------------------------------------------------
// Backend selection
//
// Config keys: "lexical" for the built-in scorers, "pretrained:<model-id>" for
// an externally registered backend.

struct ScorerSet {
  std::shared_ptr<QaScorer> qa;
  std::shared_ptr<NliScorer> nli;
  std::shared_ptr<SentimentClassifier> sentiment;
};

namespace backend {

using QaFactory = std::function<std::shared_ptr<QaScorer>(const std::string& model_id)>;
using NliFactory = std::function<std::shared_ptr<NliScorer>(const std::string& model_id)>;
using SentimentFactory =
    std::function<std::shared_ptr<SentimentClassifier>(const std::string& model_id)>;

inline std::map<std::string, QaFactory>& qa_registry() {
  static std::map<std::string, QaFactory> r;
  return r;
}
inline std::map<std::string, NliFactory>& nli_registry() {
  static std::map<std::string, NliFactory> r;
  return r;
}
inline std::map<std::string, SentimentFactory>& sentiment_registry() {
  static std::map<std::string, SentimentFactory> r;
  return r;
}

inline std::pair<std::string, std::string> parse_key(const std::string& key) {
  const auto colon = key.find(':');
  if (colon == std::string::npos) return {key, ""};
  return {key.substr(0, colon), key.substr(colon + 1)};
}

template <typename Registry>
auto resolve(const Registry& registry, const std::string& key, const char* what) {
  const auto [kind, model_id] = parse_key(key);
  auto it = registry.find(kind);
  if (it == registry.end())
    throw Error(std::string(what) + " backend '" + key +
                "' is not registered in this build (built-in: \"lexical\")");
  return it->second(model_id);
}

}  // namespace backend

inline std::shared_ptr<QaScorer> make_qa_scorer(const std::string& key) {
  if (key == "lexical") return std::make_shared<LexicalQaScorer>();
  return backend::resolve(backend::qa_registry(), key, "QA scorer");
}

inline std::shared_ptr<NliScorer> make_nli_scorer(const std::string& key) {
  if (key == "lexical") return std::make_shared<KeywordNliScorer>();
  return backend::resolve(backend::nli_registry(), key, "NLI scorer");
}

inline std::shared_ptr<SentimentClassifier> make_sentiment_classifier(
    const std::string& key, std::set<std::string> positive_labels = {"joy", "love", "surprise"}) {
  if (key == "lexical")
    return std::make_shared<LexiconSentimentClassifier>(std::move(positive_labels));
  return backend::resolve(backend::sentiment_registry(), key, "sentiment classifier");
}

inline ScorerSet make_scorers(const std::string& qa_key, const std::string& nli_key,
                              const std::string& sentiment_key,
                              std::set<std::string> positive_labels = {"joy", "love", "surprise"}) {
  return {make_qa_scorer(qa_key), make_nli_scorer(nli_key),
          make_sentiment_classifier(sentiment_key, std::move(positive_labels))};
}

}  // namespace dialeval
