#pragma once

// Constructs dimension-specific (positive, negative) dialogue pairs from a
// corpus using five strategies: utterance shuffling and QA relevance for
// coherence, contradiction and positive-utterance counting for likability,
// entailment for topic depth. Emits training instances in both orderings so
// the model cannot rely on argument position.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "dialeval/corpus.hpp"
#include "dialeval/oracles.hpp"

namespace dialeval {

struct SamplingConfig {
  double qa_low = 0.85, qa_high = 0.99;
  double contra_low = 0.20, contra_high = 0.40;
  double entail_low = 0.01, entail_high = 0.10;
  bool pos_all_required = true;  // positives need every utterance positive
  int pos_neg_max = 1;           // negatives have at most this many positive utterances
  std::size_t n_train_pairs = 100000;
  std::size_t n_val_pairs = 10000;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(qa_low < qa_high)) throw Error("sampling: qa_low must be < qa_high");
    if (!(contra_low < contra_high)) throw Error("sampling: contra_low must be < contra_high");
    if (!(entail_low < entail_high)) throw Error("sampling: entail_low must be < entail_high");
    if (n_train_pairs == 0 || n_val_pairs == 0)
      throw Error("sampling: pair counts must be positive");
    if (pos_neg_max < 0) throw Error("sampling: pos_neg_max must be >= 0");
  }
};

enum class Split { train, dev };

inline std::string_view to_string(Split s) { return s == Split::train ? "train" : "dev"; }

inline Split split_from_string(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev" || s == "val") return Split::dev;
  throw Error("unknown split: '" + std::string(s) + "' (expected train|dev)");
}

// One training example: `label` is +1 iff `first` is the positive member.
struct LabeledInstance {
  Dialogue first;
  Dialogue second;
  int label = 1;
  Dimension dimension = Dimension::coherence;
  Strategy strategy = Strategy::shuffle;
};

// ---------------------------------------------------------------------------
// Shuffle negatives

// Random non-identity permutation of the utterances; speaker tags travel with
// their utterances and the id gains a "#shuf" suffix. For 2-utterance
// dialogues the swap is the only possible outcome. Identity is judged on the
// resulting (speaker, text) sequence, so dialogues with repeated utterances
// still come out visibly reordered.
inline Dialogue shuffle_negative(const Dialogue& d, Rng& rng) {
  const std::size_t k = d.utterances.size();
  if (k < 2) throw Error("shuffle_negative: dialogue '" + d.id + "' has fewer than 2 utterances");

  auto sequence_unchanged = [&](const std::vector<std::size_t>& p) {
    for (std::size_t i = 0; i < k; ++i) {
      const Utterance& moved = d.utterances[p[i]];
      const Utterance& original = d.utterances[i];
      if (moved.speaker != original.speaker || moved.text != original.text) return false;
    }
    return true;
  };

  std::vector<std::size_t> perm(k);
  for (std::size_t i = 0; i < k; ++i) perm[i] = i;
  std::size_t attempts = 0;
  do {
    if (++attempts > 1000)
      throw Error("shuffle_negative: dialogue '" + d.id +
                  "' has no distinguishable reordering (all utterances identical)");
    rng.shuffle(perm);
  } while (sequence_unchanged(perm));

  Dialogue out;
  out.id = d.id + "#shuf";
  out.source = d.source;
  out.utterances.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    Utterance u = d.utterances[perm[i]];
    u.index = i;
    out.utterances.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Threshold bucketing

struct ScoredDialogue {
  const Dialogue* dialogue = nullptr;
  double score = 0.0;
};

struct ThresholdBuckets {
  std::vector<ScoredDialogue> positives;
  std::vector<ScoredDialogue> negatives;
  std::size_t n_excluded = 0;    // score inside [low, high]
  std::size_t n_ineligible = 0;  // oracle precondition failures
};

enum class Polarity { high_is_positive, low_is_positive };

// Buckets dialogues by a proxy score: strictly above `high` and strictly below
// `low` land in the buckets selected by `polarity`; scores inside [low, high]
// are excluded; ineligible dialogues are excluded and counted.
inline ThresholdBuckets sample_by_threshold(
    const std::vector<Dialogue>& corpus,
    const std::function<ProxyScore(const Dialogue&)>& score_fn, double low, double high,
    Polarity polarity, std::string_view strategy_label = "") {
  if (!(low < high)) throw Error("sample_by_threshold: low must be < high");

  ThresholdBuckets buckets;
  for (const Dialogue& d : corpus) {
    double s = 0.0;
    try {
      s = score_fn(d).value;
    } catch (const EligibilityError&) {
      ++buckets.n_ineligible;
      continue;
    }
    auto& above = polarity == Polarity::high_is_positive ? buckets.positives : buckets.negatives;
    auto& below = polarity == Polarity::high_is_positive ? buckets.negatives : buckets.positives;
    if (s > high) above.push_back({&d, s});
    else if (s < low) below.push_back({&d, s});
    else ++buckets.n_excluded;
  }

  if (buckets.positives.empty() || buckets.negatives.empty())
    throw Error("strategy " + std::string(strategy_label) + ": empty " +
                (buckets.positives.empty() ? "positive" : "negative") +
                " bucket with thresholds (" + format_double(low) + ", " + format_double(high) + ")");
  return buckets;
}

// Positives are dialogues whose every utterance is positive; negatives contain
// at most cfg.pos_neg_max positive utterances. All-positive takes precedence
// when both predicates hold.
inline ThresholdBuckets sample_positive_sentiment(const std::vector<Dialogue>& corpus,
                                                  const SentimentClassifier& clf,
                                                  const SamplingConfig& cfg) {
  if (cfg.pos_neg_max < 0) throw Error("sampling: pos_neg_max must be >= 0");
  ThresholdBuckets buckets;
  for (const Dialogue& d : corpus) {
    const ProxyScore score = count_positive_utterances(d, clf);
    const auto count = static_cast<std::size_t>(score.value);
    const bool all_positive = count == d.utterances.size();
    if (cfg.pos_all_required ? all_positive : count > static_cast<std::size_t>(cfg.pos_neg_max))
      buckets.positives.push_back({&d, score.value});
    else if (count <= static_cast<std::size_t>(cfg.pos_neg_max))
      buckets.negatives.push_back({&d, score.value});
    else
      ++buckets.n_excluded;
  }
  if (buckets.positives.empty() || buckets.negatives.empty())
    throw Error(std::string("strategy pos_utterances: empty ") +
                (buckets.positives.empty() ? "positive" : "negative") + " bucket");
  return buckets;
}

// ---------------------------------------------------------------------------
// Pair construction

struct StrategyStats {
  Dimension dimension = Dimension::coherence;
  Strategy strategy = Strategy::shuffle;
  std::size_t positives_available = 0;
  std::size_t negatives_available = 0;
  std::size_t pairs_drawn = 0;
  std::size_t n_excluded = 0;
  std::size_t n_ineligible = 0;
};

struct BuildResult {
  std::vector<DialoguePair> pairs;
  std::vector<StrategyStats> stats;
};

inline std::vector<Strategy> strategies_for(Dimension dim) {
  switch (dim) {
    case Dimension::coherence: return {Strategy::shuffle, Strategy::qa_relevance};
    case Dimension::likability: return {Strategy::contradiction, Strategy::pos_utterances};
    case Dimension::topic_depth: return {Strategy::entailment};
  }
  throw Error("unreachable dimension value");
}

namespace detail {

inline std::vector<DialoguePair> draw_cross_product(const ThresholdBuckets& buckets,
                                                    Dimension dim, Strategy strategy,
                                                    std::size_t n, Rng& rng) {
  std::vector<DialoguePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ScoredDialogue& p = buckets.positives[rng.below(buckets.positives.size())];
    const ScoredDialogue& neg = buckets.negatives[rng.below(buckets.negatives.size())];
    DialoguePair pair;
    pair.positive = *p.dialogue;
    pair.negative = *neg.dialogue;
    pair.dimension = dim;
    pair.strategy = strategy;
    pair.positive_score = p.score;
    pair.negative_score = neg.score;
    out.push_back(std::move(pair));
  }
  return out;
}

}  // namespace detail

// Builds `cfg.n_train_pairs` (train) or `cfg.n_val_pairs` (dev) pairs for one
// dimension, drawn in equal proportion from the dimension's strategies.
// Cross-product strategies sample (positive, negative) uniformly with
// replacement; shuffle pairs each drawn dialogue with a fresh shuffle of
// itself. Strategy errors (e.g. an empty bucket) propagate.
inline BuildResult build_dimension_pairs(const std::vector<Dialogue>& corpus, Dimension dim,
                                         const ScorerSet& scorers, const SamplingConfig& cfg,
                                         Split split, Rng& rng) {
  if (corpus.empty()) throw Error("build_dimension_pairs: empty corpus");
  cfg.validate();

  const std::vector<Strategy> strategies = strategies_for(dim);
  const std::size_t n_total = split == Split::train ? cfg.n_train_pairs : cfg.n_val_pairs;

  BuildResult result;
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    const Strategy strategy = strategies[si];
    // Equal proportions; the remainder goes to the earliest strategies.
    std::size_t quota = n_total / strategies.size();
    if (si < n_total % strategies.size()) ++quota;

    StrategyStats stats;
    stats.dimension = dim;
    stats.strategy = strategy;

    std::vector<DialoguePair> drawn;
    switch (strategy) {
      case Strategy::shuffle: {
        // Every corpus dialogue is eligible and yields one positive (itself)
        // and one negative (its shuffled copy).
        stats.positives_available = corpus.size();
        stats.negatives_available = corpus.size();
        drawn.reserve(quota);
        for (std::size_t i = 0; i < quota; ++i) {
          const Dialogue& d = corpus[rng.below(corpus.size())];
          DialoguePair pair;
          pair.positive = d;
          pair.negative = shuffle_negative(d, rng);
          pair.dimension = dim;
          pair.strategy = strategy;
          drawn.push_back(std::move(pair));
        }
        break;
      }
      case Strategy::qa_relevance: {
        const ThresholdBuckets buckets = sample_by_threshold(
            corpus,
            [&](const Dialogue& d) { return dialogue_qa_relevance(d, *scorers.qa); },
            cfg.qa_low, cfg.qa_high, Polarity::high_is_positive, "qa_relevance");
        stats.positives_available = buckets.positives.size();
        stats.negatives_available = buckets.negatives.size();
        stats.n_excluded = buckets.n_excluded;
        stats.n_ineligible = buckets.n_ineligible;
        drawn = detail::draw_cross_product(buckets, dim, strategy, quota, rng);
        break;
      }
      case Strategy::contradiction: {
        const ThresholdBuckets buckets = sample_by_threshold(
            corpus,
            [&](const Dialogue& d) { return dialogue_contradiction(d, *scorers.nli); },
            cfg.contra_low, cfg.contra_high, Polarity::low_is_positive, "contradiction");
        stats.positives_available = buckets.positives.size();
        stats.negatives_available = buckets.negatives.size();
        stats.n_excluded = buckets.n_excluded;
        stats.n_ineligible = buckets.n_ineligible;
        drawn = detail::draw_cross_product(buckets, dim, strategy, quota, rng);
        break;
      }
      case Strategy::pos_utterances: {
        const ThresholdBuckets buckets =
            sample_positive_sentiment(corpus, *scorers.sentiment, cfg);
        stats.positives_available = buckets.positives.size();
        stats.negatives_available = buckets.negatives.size();
        stats.n_excluded = buckets.n_excluded;
        drawn = detail::draw_cross_product(buckets, dim, strategy, quota, rng);
        break;
      }
      case Strategy::entailment: {
        const ThresholdBuckets buckets = sample_by_threshold(
            corpus,
            [&](const Dialogue& d) { return dialogue_entailment(d, *scorers.nli); },
            cfg.entail_low, cfg.entail_high, Polarity::low_is_positive, "entailment");
        stats.positives_available = buckets.positives.size();
        stats.negatives_available = buckets.negatives.size();
        stats.n_excluded = buckets.n_excluded;
        stats.n_ineligible = buckets.n_ineligible;
        drawn = detail::draw_cross_product(buckets, dim, strategy, quota, rng);
        break;
      }
    }
    stats.pairs_drawn = drawn.size();
    result.stats.push_back(stats);
    for (DialoguePair& p : drawn) result.pairs.push_back(std::move(p));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Labeled instances

// Each pair yields (d+, d-, +1) and (d-, d+, -1), interleaved so both labels
// appear in any contiguous batch of size >= 2.
inline std::vector<LabeledInstance> to_labeled_instances(const std::vector<DialoguePair>& pairs) {
  std::vector<LabeledInstance> out;
  out.reserve(pairs.size() * 2);
  for (const DialoguePair& p : pairs) {
    out.push_back({p.positive, p.negative, +1, p.dimension, p.strategy});
    out.push_back({p.negative, p.positive, -1, p.dimension, p.strategy});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Statistics

struct PairCountRow {
  Dimension dimension = Dimension::coherence;
  Strategy strategy = Strategy::shuffle;
  Split split = Split::train;
  std::size_t pairs = 0;
};

inline std::vector<PairCountRow> pair_statistics(const std::vector<DialoguePair>& pairs,
                                                 Split split) {
  std::map<std::pair<int, int>, std::size_t> counts;
  for (const DialoguePair& p : pairs)
    ++counts[{static_cast<int>(p.dimension), static_cast<int>(p.strategy)}];
  std::vector<PairCountRow> rows;
  for (const auto& [key, count] : counts)
    rows.push_back({static_cast<Dimension>(key.first), static_cast<Strategy>(key.second), split,
                    count});
  return rows;
}

inline void write_stats_csv(std::ostream& out,
                            const std::vector<std::pair<Split, StrategyStats>>& rows) {
  out << "dimension,strategy,split,positives,negatives,pairs\n";
  for (const auto& [split, s] : rows)
    out << to_string(s.dimension) << ',' << to_string(s.strategy) << ',' << to_string(split)
        << ',' << s.positives_available << ',' << s.negatives_available << ',' << s.pairs_drawn
        << '\n';
}

inline void write_pair_counts_csv(std::ostream& out, const std::vector<PairCountRow>& rows) {
  out << "dimension,strategy,split,pairs\n";
  for (const PairCountRow& r : rows)
    out << to_string(r.dimension) << ',' << to_string(r.strategy) << ',' << to_string(r.split)
        << ',' << r.pairs << '\n';
}

}  // namespace dialeval
