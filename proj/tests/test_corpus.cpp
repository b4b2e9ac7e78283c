#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dialeval/corpus.hpp"
#include "support/synthetic.hpp"
#include "support/test_oracles.hpp"

using namespace dialeval;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path path = fs::temp_directory_path() / ("dialeval_test_" + name);
  std::ofstream out(path);
  out << contents;
  return path;
}

}  // namespace

TEST_CASE("parse_corpus reads valid records") {
  const std::string lines =
      R"({"id": "d1", "source": "toy", "utterances": [{"speaker": "A", "text": "hello there"}, {"speaker": "B", "text": "hi"}]})"
      "\n"
      R"({"id": "d2", "source": "toy", "utterances": [{"speaker": "A", "text": "one"}, {"speaker": "B", "text": "two"}, {"speaker": "A", "text": "three"}]})"
      "\n";
  const auto path = temp_file("corpus_ok.jsonl", lines);
  const CorpusParseResult result = parse_corpus(path);
  REQUIRE(result.dialogues.size() == 2);
  CHECK(result.skipped == 0);
  CHECK(result.dialogues[0].id == "d1");
  CHECK(result.dialogues[1].utterances.size() == 3);
  CHECK(result.dialogues[1].utterances[2].index == 2);
  fs::remove(path);
}

TEST_CASE("parse_corpus skips a single-utterance record and counts it") {
  const std::string lines =
      R"({"id": "ok", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}]})"
      "\n"
      R"({"id": "short", "utterances": [{"speaker": "A", "text": "alone"}]})"
      "\n";
  const auto path = temp_file("corpus_short.jsonl", lines);
  const CorpusParseResult result = parse_corpus(path, "toy");
  CHECK(result.dialogues.size() == 1);
  CHECK(result.skipped == 1);
  REQUIRE(result.warnings.size() == 1);
  CHECK(result.warnings[0].find("line 2") != std::string::npos);
  fs::remove(path);
}

TEST_CASE("parse_corpus reports malformed lines with line numbers") {
  const std::string lines =
      "this is not json\n"
      R"({"id": "ok", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}]})"
      "\n";
  const auto path = temp_file("corpus_malformed.jsonl", lines);
  const CorpusParseResult result = parse_corpus(path);
  CHECK(result.dialogues.size() == 1);
  CHECK(result.skipped == 1);
  REQUIRE_FALSE(result.warnings.empty());
  CHECK(result.warnings[0].find("line 1") != std::string::npos);
  fs::remove(path);
}

TEST_CASE("parse_corpus rejects duplicate ids") {
  const std::string record =
      R"({"id": "dup", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}]})";
  const auto path = temp_file("corpus_dup.jsonl", record + "\n" + record + "\n");
  CHECK_THROWS_WITH(parse_corpus(path), Catch::Matchers::ContainsSubstring("duplicate"));
  fs::remove(path);
}

TEST_CASE("parse_corpus errors on an unreadable file") {
  CHECK_THROWS_AS(parse_corpus("/nonexistent/nowhere.jsonl"), Error);
}

TEST_CASE("dialogue invariants") {
  Dialogue d = testsupport::make_dialogue("x", {"hello", "world"});
  CHECK(dialogue_problem(d).empty());

  SECTION("empty text after trimming") {
    d.utterances[1].text = "   ";
    CHECK_FALSE(dialogue_problem(d).empty());
  }
  SECTION("single speaker") {
    d.utterances[1].speaker = "A";
    CHECK(dialogue_problem(d) == "fewer than 2 distinct speakers");
  }
  SECTION("index mismatch") {
    d.utterances[1].index = 5;
    CHECK_FALSE(dialogue_problem(d).empty());
  }
}

TEST_CASE("corpus round-trip preserves dialogues exactly") {
  const std::vector<Dialogue> corpus = testsupport::make_synthetic_corpus(5, 3);
  const auto path = fs::temp_directory_path() / "dialeval_test_roundtrip.jsonl";
  write_corpus_jsonl(path, corpus);
  const CorpusParseResult parsed = parse_corpus(path);
  REQUIRE(parsed.dialogues.size() == corpus.size());
  CHECK(parsed.skipped == 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) CHECK(parsed.dialogues[i] == corpus[i]);
  fs::remove(path);
}

TEST_CASE("parse_benchmark validates scales and item counts") {
  SECTION("valid file with metadata header") {
    const std::string lines =
        R"({"benchmark": "toy-bench", "agreement": {"coherence": 0.8}})"
        "\n"
        R"({"id": "b1", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}], "ratings": {"coherence": 2.5, "overall": 4.0}, "scales": {"coherence": [1, 3], "overall": [1, 5]}, "na_frac": {"coherence": 0.0}})"
        "\n"
        R"({"id": "b2", "utterances": [{"speaker": "A", "text": "c"}, {"speaker": "B", "text": "d"}], "ratings": {"coherence": 1.0, "overall": 2.0}, "scales": {"coherence": [1, 3], "overall": [1, 5]}})"
        "\n";
    const auto path = temp_file("bench_ok.jsonl", lines);
    const Benchmark bench = parse_benchmark(path);
    CHECK(bench.name == "toy-bench");
    CHECK(bench.items.size() == 2);
    REQUIRE(bench.dimensions.size() == 2);
    CHECK(bench.dimensions[0] == "coherence");  // file order preserved
    CHECK(bench.agreement.at("coherence") == 0.8);
    CHECK(bench.items[0].ratings.at("overall") == 4.0);
    fs::remove(path);
  }

  SECTION("rating outside its scale names the id and dimension") {
    const std::string lines =
        R"({"id": "b1", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}], "ratings": {"coherence": 6.0}, "scales": {"coherence": [1, 5]}})"
        "\n";
    const auto path = temp_file("bench_scale.jsonl", lines);
    CHECK_THROWS_WITH(parse_benchmark(path),
                      Catch::Matchers::ContainsSubstring("b1") &&
                          Catch::Matchers::ContainsSubstring("coherence"));
    fs::remove(path);
  }

  SECTION("fewer than 2 items is an error") {
    const std::string lines =
        R"({"id": "only", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}], "ratings": {"coherence": 1.0}})"
        "\n";
    const auto path = temp_file("bench_one.jsonl", lines);
    CHECK_THROWS_WITH(parse_benchmark(path), Catch::Matchers::ContainsSubstring(">= 2 items"));
    fs::remove(path);
  }

  SECTION("na_frac outside [0,1] is an error") {
    const std::string lines =
        R"({"id": "b1", "utterances": [{"speaker": "A", "text": "a"}, {"speaker": "B", "text": "b"}], "ratings": {"coherence": 1.0}, "na_frac": {"coherence": 1.5}})"
        "\n";
    const auto path = temp_file("bench_na.jsonl", lines);
    CHECK_THROWS_AS(parse_benchmark(path), Error);
    fs::remove(path);
  }
}

TEST_CASE("parse_benchmark preserves rating means bit-exactly") {
  Benchmark bench = testsupport::make_synthetic_benchmark(40);
  // awkward decimals survive the round trip unchanged
  bench.items[0].ratings["coherence"] = 1.0 + 1.0 / 3.0;
  bench.items[0].ratings["overall"] = 2.7182818284590452;
  const auto path = fs::temp_directory_path() / "dialeval_test_bench_roundtrip.jsonl";
  write_benchmark_jsonl(path, bench);
  const Benchmark parsed = parse_benchmark(path);
  REQUIRE(parsed.items.size() == bench.items.size());
  for (std::size_t i = 0; i < bench.items.size(); ++i)
    for (const auto& [dim, rating] : bench.items[i].ratings)
      CHECK(parsed.items[i].ratings.at(dim) == rating);
  fs::remove(path);
}

TEST_CASE("split_long_dialogue") {
  auto make_n = [](std::size_t n) {
    std::vector<std::string> texts;
    for (std::size_t i = 0; i < n; ++i) texts.push_back("utterance number " + std::to_string(i));
    return testsupport::make_dialogue("long", texts);
  };

  SECTION("identity below the limit") {
    const Dialogue d = make_n(8);
    const auto parts = split_long_dialogue(d, 10);
    REQUIRE(parts.size() == 1);
    CHECK(parts[0] == d);
  }

  SECTION("boundary case returns one piece") {
    const auto parts = split_long_dialogue(make_n(10), 10);
    CHECK(parts.size() == 1);
  }

  SECTION("23 utterances chunk greedily to 10/10/3") {
    const auto parts = split_long_dialogue(make_n(23), 10);
    const auto expected = testsupport::oracle_greedy_chunks(23, 10);
    REQUIRE(parts.size() == expected.size());
    for (std::size_t i = 0; i < parts.size(); ++i)
      CHECK(parts[i].utterances.size() == expected[i]);
  }

  SECTION("a trailing singleton borrows from the previous chunk") {
    const auto parts = split_long_dialogue(make_n(21), 10);
    REQUIRE(parts.size() == 3);
    CHECK(parts[0].utterances.size() == 10);
    CHECK(parts[1].utterances.size() == 9);
    CHECK(parts[2].utterances.size() == 2);
  }

  SECTION("sizes sum and order is preserved for random lengths") {
    Rng rng(42);
    for (int rep = 0; rep < 50; ++rep) {
      const std::size_t n = 2 + rng.below(60);
      const std::size_t max_utts = 2 + rng.below(12);
      const Dialogue d = make_n(n);
      const auto parts = split_long_dialogue(d, max_utts);
      std::size_t total = 0;
      std::vector<std::string> flat;
      for (const Dialogue& part : parts) {
        CHECK(part.utterances.size() <= max_utts);
        total += part.utterances.size();
        for (std::size_t i = 0; i < part.utterances.size(); ++i) {
          CHECK(part.utterances[i].index == i);
          flat.push_back(part.utterances[i].text);
        }
      }
      CHECK(total == n);
      for (std::size_t i = 0; i < n; ++i) CHECK(flat[i] == d.utterances[i].text);
    }
  }

  SECTION("max_utts below 2 is rejected") {
    CHECK_THROWS_AS(split_long_dialogue(make_n(5), 1), Error);
  }
}

TEST_CASE("pair json round trip") {
  testsupport::Dialogue pos = testsupport::make_dialogue("p1", {"hello there", "general kenobi"});
  testsupport::Dialogue neg = testsupport::make_dialogue("n1", {"unrelated", "stuff here"});
  DialoguePair pair{pos, neg, Dimension::topic_depth, Strategy::entailment, 0.004, 0.52};
  const DialoguePair back = pair_from_json(pair_to_json(pair));
  CHECK(back.positive == pair.positive);
  CHECK(back.negative == pair.negative);
  CHECK(back.dimension == pair.dimension);
  CHECK(back.strategy == pair.strategy);
  CHECK(back.positive_score == pair.positive_score);
  CHECK(back.negative_score == pair.negative_score);
}

TEST_CASE("pair validation rejects dimension/strategy mismatch") {
  testsupport::Dialogue pos = testsupport::make_dialogue("p1", {"a", "b"});
  testsupport::Dialogue neg = testsupport::make_dialogue("n1", {"c", "d"});
  DialoguePair pair{pos, neg, Dimension::coherence, Strategy::entailment, {}, {}};
  CHECK_THROWS_AS(validate_pair(pair), Error);
}
