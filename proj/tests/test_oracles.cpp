#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "dialeval/oracles.hpp"
#include "support/synthetic.hpp"

using namespace dialeval;
using testsupport::make_dialogue;

namespace {

// Scripted doubles for testing the aggregation formulas in isolation.
class ScriptedQa final : public QaScorer {
 public:
  explicit ScriptedQa(std::vector<double> scores) : scores_(std::move(scores)) {}
  double score(const std::string&, const std::string&) const override {
    const double s = scores_[next_ % scores_.size()];
    ++next_;
    return s;
  }

 private:
  std::vector<double> scores_;
  mutable std::size_t next_ = 0;
};

class ScriptedNli final : public NliScorer {
 public:
  explicit ScriptedNli(std::vector<NliJudgment> judgments) : judgments_(std::move(judgments)) {}
  NliJudgment score(const std::string&, const std::string&) const override {
    const NliJudgment j = judgments_[next_ % judgments_.size()];
    ++next_;
    return j;
  }

 private:
  std::vector<NliJudgment> judgments_;
  mutable std::size_t next_ = 0;
};

class ScriptedSentiment final : public SentimentClassifier {
 public:
  ScriptedSentiment(std::vector<std::string> labels, std::set<std::string> positive)
      : script_(std::move(labels)), positive_(std::move(positive)) {}
  std::string classify(const std::string&) const override {
    const std::string label = script_[next_ % script_.size()];
    ++next_;
    return label;
  }
  const std::set<std::string>& labels() const override { return all_; }
  const std::set<std::string>& positive_labels() const override { return positive_; }

 private:
  std::vector<std::string> script_;
  mutable std::size_t next_ = 0;
  std::set<std::string> all_ = {"joy", "love", "surprise", "anger", "sadness", "fear", "neutral"};
  std::set<std::string> positive_;
};

NliJudgment contra(double c) { return {0.0, 1.0 - c, c}; }
NliJudgment entail(double e) { return {e, 1.0 - e, 0.0}; }

Dialogue n_utterances(std::size_t n) {
  std::vector<std::string> texts;
  for (std::size_t i = 0; i < n; ++i) texts.push_back("utterance " + std::to_string(i));
  return make_dialogue("d", texts);
}

}  // namespace

TEST_CASE("find_qa_pairs") {
  SECTION("question pairs with its immediate successor") {
    const Dialogue d = make_dialogue(
        "q", {"hello", "fine day", "do you sail ?", "yes often", "good", "bye"});
    const auto pairs = find_qa_pairs(d);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].first == 2);
    CHECK(pairs[0].second == 3);
  }
  SECTION("no question marks yields an empty list") {
    CHECK(find_qa_pairs(n_utterances(4)).empty());
  }
  SECTION("a final question has no successor and is excluded") {
    const Dialogue d = make_dialogue("q", {"hello", "are you there ?"});
    CHECK(find_qa_pairs(d).empty());
  }
  SECTION("trailing quotes and whitespace are stripped before the check") {
    const Dialogue d = make_dialogue("q", {"he said \"really ?\" ", "yes really"});
    REQUIRE(find_qa_pairs(d).size() == 1);
  }
}

TEST_CASE("dialogue_qa_relevance") {
  SECTION("mean of the pair scores") {
    const Dialogue d = make_dialogue(
        "q", {"a ?", "b", "c ?", "d", "e", "f"});  // 6 utterances, QA pairs (0,1) and (2,3)
    ScriptedQa qa({0.8, 0.6});
    const ProxyScore score = dialogue_qa_relevance(d, qa);
    CHECK(score.value == Catch::Approx(0.7));
    CHECK(score.n_components == 2);
    CHECK(score.kind == ProxyKind::qa_relevance);
  }
  SECTION("4 utterances are ineligible even with a QA pair") {
    const Dialogue d = make_dialogue("q", {"a ?", "b", "c", "d"});
    ScriptedQa qa({0.9});
    CHECK_THROWS_AS(dialogue_qa_relevance(d, qa), EligibilityError);
  }
  SECTION("five utterances without a question are ineligible") {
    ScriptedQa qa({0.9});
    CHECK_THROWS_AS(dialogue_qa_relevance(n_utterances(5), qa), EligibilityError);
  }
  SECTION("a single pair is its own mean") {
    const Dialogue d = make_dialogue("q", {"a ?", "b", "c", "d", "e"});
    ScriptedQa qa({0.95});
    const ProxyScore score = dialogue_qa_relevance(d, qa);
    CHECK(score.value == Catch::Approx(0.95));
    CHECK(score.n_components == 1);
  }
}

TEST_CASE("dialogue_contradiction averages adjacent pairs") {
  SECTION("k=3 averages two scores") {
    ScriptedNli nli({contra(0.1), contra(0.5)});
    const ProxyScore score = dialogue_contradiction(n_utterances(3), nli);
    CHECK(score.value == Catch::Approx(0.3));
    CHECK(score.n_components == 2);
  }
  SECTION("k=2 has exactly one adjacency") {
    ScriptedNli nli({contra(0.25)});
    const ProxyScore score = dialogue_contradiction(n_utterances(2), nli);
    CHECK(score.value == Catch::Approx(0.25));
    CHECK(score.n_components == 1);
  }
  SECTION("k=5 has four adjacencies") {
    ScriptedNli nli({contra(0.2)});
    CHECK(dialogue_contradiction(n_utterances(5), nli).n_components == 4);
  }
  SECTION("judgments failing the simplex contract are rejected") {
    ScriptedNli nli({{0.9, 0.9, 0.9}});
    CHECK_THROWS_AS(dialogue_contradiction(n_utterances(2), nli), Error);
  }
}

TEST_CASE("dialogue_entailment averages all utterance pairs") {
  SECTION("k=5 averages 10 scores") {
    ScriptedNli nli({entail(0.3)});
    const ProxyScore score = dialogue_entailment(n_utterances(5), nli);
    CHECK(score.n_components == 10);
    CHECK(score.value == Catch::Approx(0.3));
  }
  SECTION("k=2 is a singleton mean") {
    ScriptedNli nli({entail(0.4)});
    const ProxyScore score = dialogue_entailment(n_utterances(2), nli);
    CHECK(score.value == Catch::Approx(0.4));
    CHECK(score.n_components == 1);
  }
  SECTION("constant scores average to themselves") {
    ScriptedNli nli({entail(0.2)});
    CHECK(dialogue_entailment(n_utterances(4), nli).value == Catch::Approx(0.2));
  }
  SECTION("n_components is (k-1)k/2 for every k") {
    ScriptedNli nli({entail(0.0)});
    for (std::size_t k = 2; k <= 12; ++k)
      CHECK(dialogue_entailment(n_utterances(k), nli).n_components == (k - 1) * k / 2);
  }
}

TEST_CASE("count_positive_utterances") {
  SECTION("all positive") {
    ScriptedSentiment clf({"joy", "joy", "joy", "joy"}, {"joy", "love", "surprise"});
    const ProxyScore score = count_positive_utterances(n_utterances(4), clf);
    CHECK(score.value == 4.0);
    CHECK(score.kind == ProxyKind::pos_count);
  }
  SECTION("mixed labels count only positives") {
    ScriptedSentiment clf({"anger", "sadness", "joy", "fear"}, {"joy", "love", "surprise"});
    CHECK(count_positive_utterances(n_utterances(4), clf).value == 1.0);
  }
  SECTION("an empty positive set counts nothing") {
    ScriptedSentiment clf({"joy"}, {});
    CHECK(count_positive_utterances(n_utterances(4), clf).value == 0.0);
  }
}

TEST_CASE("lexical scorers are deterministic and range-bounded") {
  LexicalQaScorer qa;
  KeywordNliScorer nli;
  LexiconSentimentClassifier sentiment;

  SECTION("QA jaccard") {
    CHECK(qa.score("do you like fresh mangoes ?", "i like fresh mangoes") == 1.0);
    CHECK(qa.score("when does the express depart ?", "my cousin collects stamps") == 0.0);
    const double s = qa.score("do you enjoy sailing boats ?", "i enjoy boats");
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(qa.score("a ?", "b") == qa.score("a ?", "b"));
  }

  SECTION("NLI simplex holds on arbitrary inputs") {
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"i like the soup", "i do not like the soup"},
        {"the weather is good", "the weather is bad"},
        {"project budget plan", "the project budget plan"},
        {"completely unrelated words", "other different tokens"},
        {"", "empty premise case"}};
    for (const auto& [p, h] : cases) {
      const NliJudgment j = nli.score(p, h);
      CHECK(j.entail >= 0.0);
      CHECK(j.neutral >= 0.0);
      CHECK(j.contradict >= 0.0);
      CHECK(std::abs(j.entail + j.neutral + j.contradict - 1.0) < 1e-12);
    }
  }

  SECTION("negation mismatch raises contradiction") {
    const NliJudgment j = nli.score("i like the soup", "i do not like the soup");
    CHECK(j.contradict > 0.5);
    const NliJudgment none = nli.score("i like the soup", "i like the soup");
    CHECK(none.contradict == 0.0);
    CHECK(none.entail == 1.0);
  }

  SECTION("antonyms raise contradiction") {
    CHECK(nli.score("the food is good", "the food is bad").contradict > 0.5);
  }

  SECTION("sentiment labels stay in the declared set") {
    for (const std::string text :
         {"what a wonderful day", "i hate this awful rain", "the train leaves at nine",
          "wow that is incredible", "i feel so sad and gloomy"})
      CHECK(sentiment.labels().count(sentiment.classify(text)) == 1);
    CHECK(sentiment.classify("what a wonderful day") == "joy");
    CHECK(sentiment.classify("i hate this awful rain") == "anger");
    CHECK(sentiment.classify("the train leaves at nine") == "neutral");
  }

  SECTION("positive labels must be valid labels") {
    CHECK_THROWS_AS(LexiconSentimentClassifier({"nonexistent_label"}), Error);
  }
}

TEST_CASE("proxy scores on lexical scorers are bit-reproducible") {
  const std::vector<Dialogue> corpus = testsupport::make_synthetic_corpus(3, 2);
  LexicalQaScorer qa;
  KeywordNliScorer nli;
  LexiconSentimentClassifier sentiment;
  for (const Dialogue& d : corpus) {
    CHECK(dialogue_contradiction(d, nli).value == dialogue_contradiction(d, nli).value);
    CHECK(dialogue_entailment(d, nli).value == dialogue_entailment(d, nli).value);
    CHECK(count_positive_utterances(d, sentiment).value ==
          count_positive_utterances(d, sentiment).value);
    const ProxyScore contra_score = dialogue_contradiction(d, nli);
    CHECK(contra_score.value >= 0.0);
    CHECK(contra_score.value <= 1.0);
    const ProxyScore ent = dialogue_entailment(d, nli);
    CHECK(ent.value >= 0.0);
    CHECK(ent.value <= 1.0);
    CHECK(count_positive_utterances(d, sentiment).value <=
          static_cast<double>(d.utterances.size()));
  }
}

TEST_CASE("qa relevance mean is order-invariant") {
  // same pair scores delivered in a different order give the same mean
  const Dialogue d = make_dialogue("q", {"a ?", "b", "c ?", "d", "e", "f"});
  ScriptedQa forward({0.8, 0.6});
  ScriptedQa reversed({0.6, 0.8});
  CHECK(dialogue_qa_relevance(d, forward).value ==
        Catch::Approx(dialogue_qa_relevance(d, reversed).value));
}

TEST_CASE("proxy csv output") {
  std::ostringstream out;
  write_proxy_csv(out, {{"d1", ProxyKind::qa_relevance, 0.7, 2},
                        {"d2", ProxyKind::pos_count, 3.0, 4}});
  const std::string expected =
      "dialogue_id,kind,value,n_components\n"
      "d1,qa_relevance,0.7,2\n"
      "d2,pos_count,3,4\n";
  CHECK(out.str() == expected);
}

TEST_CASE("scorer backend selection") {
  CHECK(make_qa_scorer("lexical") != nullptr);
  CHECK(make_nli_scorer("lexical") != nullptr);
  CHECK(make_sentiment_classifier("lexical") != nullptr);
  CHECK_THROWS_WITH(make_qa_scorer("pretrained:some/model"),
                    Catch::Matchers::ContainsSubstring("not registered"));

  // externally registered backends resolve through the same key scheme
  backend::qa_registry()["pretrained"] = [](const std::string&) {
    return std::make_shared<LexicalQaScorer>();
  };
  CHECK(make_qa_scorer("pretrained:some/model") != nullptr);
  backend::qa_registry().clear();
}
