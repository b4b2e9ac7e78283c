#pragma once

// End-to-end pipeline: pair construction -> training -> benchmark scoring ->
// correlation report. Stages run sequentially; every artifact records the
// config hash and seed, and a fixed seed makes every artifact byte-identical
// across runs.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "dialeval/corpus.hpp"
#include "dialeval/evalharness.hpp"
#include "dialeval/model.hpp"
#include "dialeval/oracles.hpp"
#include "dialeval/sampler.hpp"
#include "dialeval/trainer.hpp"

namespace dialeval {

struct ModelConfig {
  std::size_t vocab_size = 4096;
  std::size_t hidden_dim = 32;
  std::size_t max_length = 512;

  void validate() const {
    if (vocab_size <= HashTokenizer::kReserved)
      throw Error("model: vocab_size must exceed the reserved ids");
    if (hidden_dim == 0) throw Error("model: hidden_dim must be positive");
    if (max_length == 0) throw Error("model: max_length must be positive");
  }
};

struct ScorerConfig {
  std::string qa = "lexical";
  std::string nli = "lexical";
  std::string sentiment = "lexical";
  std::string positive_labels = "joy,love,surprise";

  std::set<std::string> positive_label_set() const {
    std::set<std::string> out;
    std::string cur;
    for (char c : positive_labels + ",") {
      if (c == ',') {
        const std::string label = trim(cur);
        if (!label.empty()) out.insert(label);
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    return out;
  }

  ScorerSet make() const { return make_scorers(qa, nli, sentiment, positive_label_set()); }
};

struct RunConfig {
  std::string corpus_path;
  std::string benchmark_path;
  std::string output_dir = "out";
  std::string mode = "multitask";  // multitask | ensemble | single:<dimension>
  std::uint64_t seed = 0;
  SamplingConfig sampling;
  TrainConfig train;
  ModelConfig model;
  ScorerConfig scorer;
};

inline json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["corpus"] = cfg.corpus_path;
  j["benchmark"] = cfg.benchmark_path;
  j["output_dir"] = cfg.output_dir;
  j["mode"] = cfg.mode;
  j["seed"] = cfg.seed;
  j["sampling"] = {{"qa_low", cfg.sampling.qa_low},
                   {"qa_high", cfg.sampling.qa_high},
                   {"contra_low", cfg.sampling.contra_low},
                   {"contra_high", cfg.sampling.contra_high},
                   {"entail_low", cfg.sampling.entail_low},
                   {"entail_high", cfg.sampling.entail_high},
                   {"pos_all_required", cfg.sampling.pos_all_required},
                   {"pos_neg_max", cfg.sampling.pos_neg_max},
                   {"n_train_pairs", cfg.sampling.n_train_pairs},
                   {"n_val_pairs", cfg.sampling.n_val_pairs}};
  j["train"] = train_config_to_json(cfg.train);
  j["model"] = {{"vocab_size", cfg.model.vocab_size},
                {"hidden_dim", cfg.model.hidden_dim},
                {"max_length", cfg.model.max_length}};
  j["scorer"] = {{"qa", cfg.scorer.qa},
                 {"nli", cfg.scorer.nli},
                 {"sentiment", cfg.scorer.sentiment},
                 {"positive_labels", cfg.scorer.positive_labels}};
  return j;
}

// Hash of the experiment configuration. The output directory is excluded: it
// determines where artifacts land, not what they contain.
inline std::string config_hash(const RunConfig& cfg) {
  json j = run_config_to_json(cfg);
  j.erase("output_dir");
  return hex64(fnv1a64(j.dump()));
}

struct PipelineArtifacts {
  std::filesystem::path pairs_train;
  std::filesystem::path pairs_dev;
  std::filesystem::path stats;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path scores;
  std::filesystem::path report;
};

namespace detail {

template <typename Fn>
auto run_stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    throw Error("stage " + name + ": " + e.what());
  }
}

inline void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw Error(what + " path is not set");
  if (!std::filesystem::exists(path)) throw Error(what + " path does not exist: " + path);
}

}  // namespace detail

// Runs the full pipeline and writes all artifacts under cfg.output_dir.
// Artifacts: pairs.train.jsonl, pairs.dev.jsonl, stats.csv, one or three
// checkpoints, scores.csv, report.csv.
inline PipelineArtifacts run_pipeline(const RunConfig& cfg, std::ostream& log = std::cerr) {
  const std::string hash = config_hash(cfg);
  const std::string stamp = "config_hash=" + hash + " seed=" + std::to_string(cfg.seed);

  detail::run_stage("config", [&] {
    detail::require_file(cfg.corpus_path, "corpus");
    detail::require_file(cfg.benchmark_path, "benchmark");
    cfg.sampling.validate();
    cfg.train.validate();
    cfg.model.validate();
    if (cfg.mode != "multitask" && cfg.mode != "ensemble" && cfg.mode.rfind("single:", 0) != 0)
      throw Error("mode must be multitask, ensemble, or single:<dimension>");
    std::filesystem::create_directories(cfg.output_dir);
    return 0;
  });

  const std::filesystem::path out_dir = cfg.output_dir;
  PipelineArtifacts artifacts;
  artifacts.pairs_train = out_dir / "pairs.train.jsonl";
  artifacts.pairs_dev = out_dir / "pairs.dev.jsonl";
  artifacts.stats = out_dir / "stats.csv";
  artifacts.scores = out_dir / "scores.csv";
  artifacts.report = out_dir / "report.csv";

  // --- pair construction -----------------------------------------------
  std::map<int, std::vector<DialoguePair>> train_pairs, dev_pairs;
  detail::run_stage("build-pairs", [&] {
    const CorpusParseResult parsed = parse_corpus(cfg.corpus_path);
    for (const std::string& w : parsed.warnings) log << "build-pairs: " << w << "\n";
    if (parsed.skipped > 0)
      log << "build-pairs: skipped " << parsed.skipped << " invalid records\n";
    const ScorerSet scorers = cfg.scorer.make();

    std::vector<std::pair<Split, StrategyStats>> stat_rows;
    for (Dimension dim : kAllDimensions) {
      for (Split split : {Split::train, Split::dev}) {
        SamplingConfig sampling = cfg.sampling;
        sampling.seed = cfg.seed;
        const std::string tag = "pairs/" + std::string(to_string(dim)) + "/" +
                                std::string(to_string(split));
        Rng rng(mix_seed(cfg.seed, tag));
        BuildResult built = build_dimension_pairs(parsed.dialogues, dim, scorers, sampling,
                                                  split, rng);
        for (const StrategyStats& s : built.stats) stat_rows.push_back({split, s});
        auto& dest = split == Split::train ? train_pairs : dev_pairs;
        for (DialoguePair& p : built.pairs)
          dest[static_cast<int>(dim)].push_back(std::move(p));
      }
    }

    const json meta = {{"config_hash", hash}, {"seed", cfg.seed}};
    auto flatten = [](const std::map<int, std::vector<DialoguePair>>& by_dim) {
      std::vector<DialoguePair> all;
      for (const auto& [_, pairs] : by_dim)
        for (const DialoguePair& p : pairs) all.push_back(p);
      return all;
    };
    write_pairs_jsonl(artifacts.pairs_train, flatten(train_pairs), meta);
    write_pairs_jsonl(artifacts.pairs_dev, flatten(dev_pairs), meta);

    std::ofstream stats_out(artifacts.stats);
    if (!stats_out) throw Error("cannot write " + artifacts.stats.string());
    stats_out << "# " << stamp << "\n";
    write_stats_csv(stats_out, stat_rows);
    return 0;
  });

  // --- training ----------------------------------------------------------
  enum class Kind { single, ensemble, multitask };
  Kind kind = Kind::multitask;
  Dimension single_dim = Dimension::coherence;
  if (cfg.mode == "ensemble") kind = Kind::ensemble;
  else if (cfg.mode.rfind("single:", 0) == 0) {
    kind = Kind::single;
    single_dim = dimension_from_string(cfg.mode.substr(7));
  }

  SubMetricModel single_model;
  MetricEnsemble ensemble;
  MultitaskModel multitask;
  detail::run_stage("train", [&] {
    auto instances = [&](const std::map<int, std::vector<DialoguePair>>& by_dim,
                         std::optional<Dimension> only) {
      std::vector<DialoguePair> pairs;
      for (const auto& [dim, ps] : by_dim) {
        if (only && static_cast<int>(*only) != dim) continue;
        for (const DialoguePair& p : ps) pairs.push_back(p);
      }
      return to_labeled_instances(pairs);
    };

    auto train_single = [&](Dimension dim) {
      SubMetricModel model = make_bag_model(dim, cfg.model.vocab_size, cfg.model.hidden_dim,
                                            cfg.model.max_length,
                                            mix_seed(cfg.seed, "model/" + std::string(to_string(dim))));
      TrainConfig tc = cfg.train;
      tc.seed = mix_seed(cfg.seed, "train/" + std::string(to_string(dim)));
      const TrainResult res = train(model, instances(train_pairs, dim), instances(dev_pairs, dim), tc);
      log << "train[" << to_string(dim) << "]: best val accuracy "
          << format_double(res.best_val_accuracy) << " at step " << res.best_step << "\n";
      CheckpointInfo info;
      info.train_config = train_config_to_json(tc);
      info.best_val_accuracy = res.best_val_accuracy;
      info.best_step = res.best_step;
      info.seed = cfg.seed;
      info.config_hash = hash;
      const auto path = out_dir / ("ckpt_" + std::string(to_string(dim)) + ".json");
      save_checkpoint(path, model, info);
      artifacts.checkpoints.push_back(path);
      return model;
    };

    switch (kind) {
      case Kind::single:
        single_model = train_single(single_dim);
        break;
      case Kind::ensemble:
        ensemble.coherence = train_single(Dimension::coherence);
        ensemble.likability = train_single(Dimension::likability);
        ensemble.topic_depth = train_single(Dimension::topic_depth);
        break;
      case Kind::multitask: {
        MultitaskModel model = make_bag_multitask_model(cfg.model.vocab_size, cfg.model.hidden_dim,
                                                        cfg.model.max_length,
                                                        mix_seed(cfg.seed, "model/multitask"));
        TrainConfig tc = cfg.train;
        tc.seed = mix_seed(cfg.seed, "train/multitask");
        const TrainResult res =
            train(model, instances(train_pairs, std::nullopt), instances(dev_pairs, std::nullopt), tc);
        log << "train[multitask]: best macro val accuracy "
            << format_double(res.best_val_accuracy) << " at step " << res.best_step << "\n";
        CheckpointInfo info;
        info.train_config = train_config_to_json(tc);
        info.best_val_accuracy = res.best_val_accuracy;
        info.best_step = res.best_step;
        info.seed = cfg.seed;
        info.config_hash = hash;
        const auto path = out_dir / "ckpt_multitask.json";
        save_checkpoint(path, model, info);
        artifacts.checkpoints.push_back(path);
        multitask = std::move(model);
        break;
      }
    }
    return 0;
  });

  // --- benchmark scoring ---------------------------------------------------
  Benchmark bench;
  ScoreTable table;
  detail::run_stage("score", [&] {
    bench = parse_benchmark(cfg.benchmark_path);
    switch (kind) {
      case Kind::single: table = score_benchmark(single_model, bench); break;
      case Kind::ensemble: table = score_benchmark(ensemble, bench); break;
      case Kind::multitask: table = score_benchmark(multitask, bench); break;
    }
    std::ofstream out(artifacts.scores);
    if (!out) throw Error("cannot write " + artifacts.scores.string());
    write_scores_csv(out, table, stamp);
    return 0;
  });

  // --- evaluation ----------------------------------------------------------
  detail::run_stage("evaluate", [&] {
    std::vector<ReportEntry> entries;
    for (std::size_t col = 0; col < table.columns.size(); ++col) {
      std::map<std::string, double> scores;
      for (const auto& [id, values] : table.rows) scores[id] = values[col];
      for (const std::string& dim : bench.dimensions) {
        try {
          entries.push_back(evaluate_metric(scores, bench, dim, table.columns[col]));
        } catch (const Error& e) {
          log << "evaluate: skipping " << table.columns[col] << " vs " << dim << ": " << e.what()
              << "\n";
        }
      }
    }
    std::ofstream out(artifacts.report);
    if (!out) throw Error("cannot write " + artifacts.report.string());
    out << "# " << stamp << "\n" << render_report(entries, ReportFormat::csv);
    return 0;
  });

  return artifacts;
}

}  // namespace dialeval
