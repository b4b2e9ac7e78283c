#pragma once

// Data model and JSONL i/o for dialogues, training pairs, and human-rated
// benchmarks.
//
// File formats (one JSON object per line):
//   dialogue:  {"id": str, "source": str, "utterances": [{"speaker": str, "text": str}, ...]}
//   benchmark: {"id": str, "utterances": [...], "ratings": {...}, "scales": {...}, "na_frac": {...}}
//              with an optional leading metadata line {"benchmark": str, "agreement": {...}}
//   pair:      {"dimension": str, "strategy": str, "positive": <dialogue>, "negative": <dialogue>,
//               "positive_score": num|null, "negative_score": num|null}

#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialeval/common.hpp"

namespace dialeval {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Quality dimensions and pair-construction strategies

enum class Dimension { coherence, likability, topic_depth };

inline constexpr std::array<Dimension, 3> kAllDimensions = {
    Dimension::coherence, Dimension::likability, Dimension::topic_depth};

inline std::string_view to_string(Dimension d) {
  switch (d) {
    case Dimension::coherence: return "coherence";
    case Dimension::likability: return "likability";
    case Dimension::topic_depth: return "topic_depth";
  }
  return "?";
}

inline Dimension dimension_from_string(std::string_view s) {
  for (Dimension d : kAllDimensions)
    if (s == to_string(d)) return d;
  throw Error("unknown dimension: '" + std::string(s) + "'");
}

enum class Strategy { shuffle, qa_relevance, contradiction, pos_utterances, entailment };

inline constexpr std::array<Strategy, 5> kAllStrategies = {
    Strategy::shuffle, Strategy::qa_relevance, Strategy::contradiction,
    Strategy::pos_utterances, Strategy::entailment};

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::shuffle: return "shuffle";
    case Strategy::qa_relevance: return "qa_relevance";
    case Strategy::contradiction: return "contradiction";
    case Strategy::pos_utterances: return "pos_utterances";
    case Strategy::entailment: return "entailment";
  }
  return "?";
}

inline Strategy strategy_from_string(std::string_view s) {
  for (Strategy st : kAllStrategies)
    if (s == to_string(st)) return st;
  throw Error("unknown strategy: '" + std::string(s) + "'");
}

// Which dimension a strategy produces training pairs for.
inline Dimension dimension_of(Strategy s) {
  switch (s) {
    case Strategy::shuffle:
    case Strategy::qa_relevance: return Dimension::coherence;
    case Strategy::contradiction:
    case Strategy::pos_utterances: return Dimension::likability;
    case Strategy::entailment: return Dimension::topic_depth;
  }
  throw Error("unreachable strategy value");
}

// ---------------------------------------------------------------------------
// Core records

struct Utterance {
  std::size_t index = 0;  // position within the parent dialogue
  std::string speaker;
  std::string text;

  bool operator==(const Utterance&) const = default;
};

struct Dialogue {
  std::string id;
  std::string source;  // corpus tag, e.g. "dailydialog"
  std::vector<Utterance> utterances;

  std::size_t size() const { return utterances.size(); }
  bool operator==(const Dialogue&) const = default;
};

// Empty string when the dialogue satisfies all invariants, else the reason.
inline std::string dialogue_problem(const Dialogue& d) {
  if (d.id.empty()) return "empty id";
  if (d.utterances.size() < 2) return "fewer than 2 utterances";
  std::set<std::string_view> speakers;
  for (std::size_t i = 0; i < d.utterances.size(); ++i) {
    const Utterance& u = d.utterances[i];
    if (u.index != i) return "utterance index mismatch at position " + std::to_string(i);
    if (trim(u.text).empty()) return "empty utterance text at position " + std::to_string(i);
    speakers.insert(u.speaker);
  }
  if (speakers.size() < 2) return "fewer than 2 distinct speakers";
  return {};
}

inline void validate_dialogue(const Dialogue& d) {
  const std::string problem = dialogue_problem(d);
  if (!problem.empty()) throw Error("invalid dialogue '" + d.id + "': " + problem);
}

struct DialoguePair {
  Dialogue positive;
  Dialogue negative;
  Dimension dimension = Dimension::coherence;
  Strategy strategy = Strategy::shuffle;
  // Oracle scores that justified the pairing; absent for shuffle pairs.
  std::optional<double> positive_score;
  std::optional<double> negative_score;
};

inline void validate_pair(const DialoguePair& p) {
  if (dimension_of(p.strategy) != p.dimension)
    throw Error(std::string("pair strategy ") + std::string(to_string(p.strategy)) +
                " is inconsistent with dimension " + std::string(to_string(p.dimension)));
  if (p.positive.id == p.negative.id)
    throw Error("pair has identical positive/negative ids: '" + p.positive.id + "'");
  validate_dialogue(p.positive);
  validate_dialogue(p.negative);
}

struct RatedDialogue {
  Dialogue dialogue;
  std::map<std::string, double> ratings;                       // dimension -> mean rating
  std::map<std::string, std::pair<double, double>> scales;     // dimension -> (min, max)
  std::map<std::string, double> na_flags;                      // dimension -> N/A fraction
};

struct Benchmark {
  std::string name;
  std::vector<RatedDialogue> items;
  std::vector<std::string> dimensions;          // file order
  std::map<std::string, double> agreement;      // optional inter-annotator Spearman
};

// ---------------------------------------------------------------------------
// JSON conversion

inline json dialogue_to_json(const Dialogue& d) {
  json utts = json::array();
  for (const Utterance& u : d.utterances)
    utts.push_back({{"speaker", u.speaker}, {"text", u.text}});
  return {{"id", d.id}, {"source", d.source}, {"utterances", std::move(utts)}};
}

// `fallback_source` fills the source tag when the record has none.
inline Dialogue dialogue_from_json(const json& j, std::string_view fallback_source = "") {
  Dialogue d;
  d.id = j.at("id").get<std::string>();
  d.source = j.value("source", std::string(fallback_source));
  const json& utts = j.at("utterances");
  if (!utts.is_array()) throw Error("'utterances' is not an array");
  d.utterances.reserve(utts.size());
  for (std::size_t i = 0; i < utts.size(); ++i) {
    Utterance u;
    u.index = i;
    u.speaker = utts[i].at("speaker").get<std::string>();
    u.text = utts[i].at("text").get<std::string>();
    d.utterances.push_back(std::move(u));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Corpus parsing

struct CorpusParseResult {
  std::vector<Dialogue> dialogues;
  std::size_t skipped = 0;                 // records dropped for invariant violations
  std::vector<std::string> warnings;       // one message per dropped record, with line number
};

// Reads dialogue JSONL. Records violating dialogue invariants (including the
// < 2 utterances case) are skipped and reported; duplicate ids are an error.
inline CorpusParseResult parse_corpus(const std::filesystem::path& path,
                                      std::string_view source = "") {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus file: " + path.string());

  CorpusParseResult result;
  std::set<std::string> seen_ids;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    Dialogue d;
    try {
      d = dialogue_from_json(json::parse(line), source);
    } catch (const std::exception& e) {
      ++result.skipped;
      result.warnings.push_back("line " + std::to_string(line_no) + ": " + e.what());
      continue;
    }
    const std::string problem = dialogue_problem(d);
    if (!problem.empty()) {
      ++result.skipped;
      result.warnings.push_back("line " + std::to_string(line_no) + ": " + problem);
      continue;
    }
    if (!seen_ids.insert(d.id).second)
      throw Error("duplicate dialogue id '" + d.id + "' at line " + std::to_string(line_no));
    result.dialogues.push_back(std::move(d));
  }
  return result;
}

inline void write_corpus_jsonl(std::ostream& out, const std::vector<Dialogue>& dialogues) {
  for (const Dialogue& d : dialogues) out << dialogue_to_json(d).dump() << '\n';
}

inline void write_corpus_jsonl(const std::filesystem::path& path,
                               const std::vector<Dialogue>& dialogues) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write corpus file: " + path.string());
  write_corpus_jsonl(out, dialogues);
}

// ---------------------------------------------------------------------------
// Benchmark parsing

inline Benchmark parse_benchmark(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open benchmark file: " + path.string());

  Benchmark bench;
  bench.name = path.stem().string();

  std::string line;
  std::size_t line_no = 0;
  bool first_object = true;
  std::set<std::string> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    ordered_json j;
    try {
      j = ordered_json::parse(line);
    } catch (const std::exception& e) {
      throw Error("benchmark line " + std::to_string(line_no) + ": " + e.what());
    }

    if (first_object && !j.contains("id")) {
      // Optional metadata header: benchmark name and inter-annotator agreement.
      if (j.contains("benchmark")) bench.name = j["benchmark"].get<std::string>();
      else if (j.contains("name")) bench.name = j["name"].get<std::string>();
      if (j.contains("agreement"))
        for (auto& [dim, v] : j["agreement"].items())
          bench.agreement[dim] = v.get<double>();
      first_object = false;
      continue;
    }
    first_object = false;

    RatedDialogue item;
    try {
      item.dialogue = dialogue_from_json(j, bench.name);
    } catch (const std::exception& e) {
      throw Error("benchmark line " + std::to_string(line_no) + ": " + e.what());
    }
    validate_dialogue(item.dialogue);
    if (!seen_ids.insert(item.dialogue.id).second)
      throw Error("duplicate benchmark dialogue id '" + item.dialogue.id + "'");

    if (!j.contains("ratings"))
      throw Error("benchmark item '" + item.dialogue.id + "' has no ratings");
    std::vector<std::string> item_dims;
    for (auto& [dim, v] : j["ratings"].items()) {
      item.ratings[dim] = v.get<double>();
      item_dims.push_back(dim);
    }
    if (j.contains("scales"))
      for (auto& [dim, v] : j["scales"].items())
        item.scales[dim] = {v.at(0).get<double>(), v.at(1).get<double>()};
    if (j.contains("na_frac"))
      for (auto& [dim, v] : j["na_frac"].items()) {
        const double f = v.get<double>();
        if (f < 0.0 || f > 1.0)
          throw Error("benchmark item '" + item.dialogue.id + "': na_frac for '" + dim +
                      "' is outside [0,1]");
        item.na_flags[dim] = f;
      }

    for (const auto& [dim, r] : item.ratings) {
      auto it = item.scales.find(dim);
      if (it != item.scales.end() && (r < it->second.first || r > it->second.second))
        throw Error("benchmark item '" + item.dialogue.id + "': rating " + format_double(r) +
                    " for '" + dim + "' is outside its scale [" +
                    format_double(it->second.first) + ", " + format_double(it->second.second) + "]");
    }

    if (bench.dimensions.empty()) {
      bench.dimensions = item_dims;
    } else {
      std::set<std::string> expected(bench.dimensions.begin(), bench.dimensions.end());
      std::set<std::string> got(item_dims.begin(), item_dims.end());
      if (expected != got)
        throw Error("benchmark item '" + item.dialogue.id +
                    "' does not share the benchmark's dimension set");
    }
    bench.items.push_back(std::move(item));
  }

  if (bench.items.size() < 2)
    throw Error("benchmark '" + bench.name + "' needs >= 2 items, got " +
                std::to_string(bench.items.size()));
  return bench;
}

inline void write_benchmark_jsonl(const std::filesystem::path& path, const Benchmark& bench) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write benchmark file: " + path.string());
  if (!bench.agreement.empty() || !bench.name.empty()) {
    ordered_json meta;
    meta["benchmark"] = bench.name;
    if (!bench.agreement.empty()) {
      ordered_json agr;
      for (const auto& [dim, v] : bench.agreement) agr[dim] = v;
      meta["agreement"] = std::move(agr);
    }
    out << meta.dump() << '\n';
  }
  for (const RatedDialogue& item : bench.items) {
    ordered_json j;
    j["id"] = item.dialogue.id;
    if (!item.dialogue.source.empty()) j["source"] = item.dialogue.source;
    ordered_json utts = ordered_json::array();
    for (const Utterance& u : item.dialogue.utterances)
      utts.push_back({{"speaker", u.speaker}, {"text", u.text}});
    j["utterances"] = std::move(utts);
    ordered_json ratings;
    for (const std::string& dim : bench.dimensions) {
      auto it = item.ratings.find(dim);
      if (it != item.ratings.end()) ratings[dim] = it->second;
    }
    j["ratings"] = std::move(ratings);
    if (!item.scales.empty()) {
      ordered_json scales;
      for (const auto& [dim, mm] : item.scales) scales[dim] = {mm.first, mm.second};
      j["scales"] = std::move(scales);
    }
    if (!item.na_flags.empty()) {
      ordered_json na;
      for (const auto& [dim, f] : item.na_flags) na[dim] = f;
      j["na_frac"] = std::move(na);
    }
    out << j.dump() << '\n';
  }
}

// ---------------------------------------------------------------------------
// Training-pair JSONL

inline json pair_to_json(const DialoguePair& p) {
  json j;
  j["dimension"] = std::string(to_string(p.dimension));
  j["strategy"] = std::string(to_string(p.strategy));
  j["positive"] = dialogue_to_json(p.positive);
  j["negative"] = dialogue_to_json(p.negative);
  j["positive_score"] = p.positive_score ? json(*p.positive_score) : json(nullptr);
  j["negative_score"] = p.negative_score ? json(*p.negative_score) : json(nullptr);
  return j;
}

inline DialoguePair pair_from_json(const json& j) {
  DialoguePair p;
  p.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  p.strategy = strategy_from_string(j.at("strategy").get<std::string>());
  p.positive = dialogue_from_json(j.at("positive"));
  p.negative = dialogue_from_json(j.at("negative"));
  if (j.contains("positive_score") && !j["positive_score"].is_null())
    p.positive_score = j["positive_score"].get<double>();
  if (j.contains("negative_score") && !j["negative_score"].is_null())
    p.negative_score = j["negative_score"].get<double>();
  validate_pair(p);
  return p;
}

// `meta`, when present, is written as a self-describing first line (an object
// under the key "meta"); readers skip it.
inline void write_pairs_jsonl(const std::filesystem::path& path,
                              const std::vector<DialoguePair>& pairs,
                              const json& meta = json()) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write pairs file: " + path.string());
  if (!meta.is_null()) out << json{{"meta", meta}}.dump() << '\n';
  for (const DialoguePair& p : pairs) out << pair_to_json(p).dump() << '\n';
}

inline std::vector<DialoguePair> read_pairs_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs file: " + path.string());
  std::vector<DialoguePair> pairs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw Error("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
    if (j.contains("meta")) continue;
    try {
      pairs.push_back(pair_from_json(j));
    } catch (const std::exception& e) {
      throw Error("pairs line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return pairs;
}

// ---------------------------------------------------------------------------
// Sub-dialogue splitting (training-time only; evaluation never splits)

// Greedy left-to-right chunking into windows of at most `max_utts` utterances.
// When pure chunking would leave a single trailing utterance, one utterance is
// borrowed from the previous chunk so every output is a valid dialogue.
// Concatenating the outputs in order reproduces the input utterance sequence.
inline std::vector<Dialogue> split_long_dialogue(const Dialogue& d, std::size_t max_utts = 10) {
  if (max_utts < 2) throw Error("split_long_dialogue: max_utts must be >= 2");
  if (d.utterances.size() <= max_utts) return {d};

  std::vector<std::size_t> sizes;
  std::size_t remaining = d.utterances.size();
  while (remaining > 0) {
    const std::size_t take = std::min(max_utts, remaining);
    sizes.push_back(take);
    remaining -= take;
  }
  // Borrow is only possible when the previous chunk keeps >= 2 utterances;
  // with max_utts == 2 and odd length a singleton tail is unavoidable.
  if (sizes.back() == 1 && sizes[sizes.size() - 2] >= 3) {
    sizes[sizes.size() - 2] -= 1;
    sizes.back() += 1;
  }

  std::vector<Dialogue> out;
  out.reserve(sizes.size());
  std::size_t offset = 0;
  for (std::size_t part = 0; part < sizes.size(); ++part) {
    Dialogue sub;
    sub.id = d.id + "#sub" + std::to_string(part);
    sub.source = d.source;
    sub.utterances.reserve(sizes[part]);
    for (std::size_t i = 0; i < sizes[part]; ++i) {
      Utterance u = d.utterances[offset + i];
      u.index = i;
      sub.utterances.push_back(std::move(u));
    }
    offset += sizes[part];
    out.push_back(std::move(sub));
  }
  return out;
}

}  // namespace dialeval
