// dialeval: self-supervised dialogue-quality metrics.
//
// Subcommands: build-pairs, train, score, evaluate, analyze-dims, run.
// A config file (--config, or the DIALEVAL_CONFIG environment variable, which
// overrides the config path only) supplies any subcommand option from its
// [subcommand] section; command-line flags override config values, so
// standalone invocations match what the full pipeline does internally.

#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dialeval/corpus.hpp"
#include "dialeval/evalharness.hpp"
#include "dialeval/model.hpp"
#include "dialeval/oracles.hpp"
#include "dialeval/pipeline.hpp"
#include "dialeval/sampler.hpp"
#include "dialeval/trainer.hpp"

namespace {

using namespace dialeval;

// Subcommands read their options from the [subcommand] section of the config
// file passed to the root --config option; fallthrough lets --config appear
// after the subcommand name.
void make_configurable(CLI::App* cmd) { cmd->fallthrough(true); }

void add_sampling_options(CLI::App* cmd, SamplingConfig& s) {
  auto* grp = cmd->add_option_group("sampling");
  grp->add_option("--qa_low", s.qa_low, "QA relevance tau_low")->capture_default_str();
  grp->add_option("--qa_high", s.qa_high, "QA relevance tau_high")->capture_default_str();
  grp->add_option("--contra_low", s.contra_low, "Contradiction tau_low")->capture_default_str();
  grp->add_option("--contra_high", s.contra_high, "Contradiction tau_high")
      ->capture_default_str();
  grp->add_option("--entail_low", s.entail_low, "Entailment tau_low")->capture_default_str();
  grp->add_option("--entail_high", s.entail_high, "Entailment tau_high")->capture_default_str();
  grp->add_flag("--pos_all_required,!--no-pos_all_required", s.pos_all_required,
                "Sentiment positives need every utterance positive")
      ->capture_default_str();
  grp->add_option("--pos_neg_max", s.pos_neg_max,
                  "Sentiment negatives have at most this many positive utterances")
      ->capture_default_str();
  grp->add_option("--n_train_pairs", s.n_train_pairs, "Pairs per dimension (train split)")
      ->capture_default_str();
  grp->add_option("--n_val_pairs", s.n_val_pairs, "Pairs per dimension (dev split)")
      ->capture_default_str();
}

void add_train_options(CLI::App* cmd, TrainConfig& t) {
  auto* grp = cmd->add_option_group("training");
  grp->add_option("--learning_rate", t.learning_rate, "Constant learning rate")
      ->capture_default_str();
  grp->add_option("--batch_size", t.batch_size, "Mini-batch size")->capture_default_str();
  grp->add_option("--max_epochs", t.max_epochs, "Maximum training epochs")
      ->capture_default_str();
  grp->add_option("--eval_every_steps", t.eval_every_steps, "Validate every N optimizer steps")
      ->capture_default_str();
  grp->add_option("--patience_checkpoints", t.patience_checkpoints,
                  "Stop after N non-improving checkpoints")
      ->capture_default_str();
  grp->add_option("--margin", t.margin, "Ranking loss margin")->capture_default_str();
  grp->add_option("--weight_decay", t.weight_decay, "Decoupled weight decay")
      ->capture_default_str();
}

void add_model_options(CLI::App* cmd, ModelConfig& m) {
  auto* grp = cmd->add_option_group("model");
  grp->add_option("--vocab_size", m.vocab_size, "Hashing tokenizer vocabulary size")
      ->capture_default_str();
  grp->add_option("--hidden_dim", m.hidden_dim, "Encoder hidden dimension")
      ->capture_default_str();
  grp->add_option("--max_length", m.max_length, "Maximum encoded sequence length")
      ->capture_default_str();
}

void add_scorer_options(CLI::App* cmd, ScorerConfig& s) {
  auto* grp = cmd->add_option_group("scorers");
  grp->add_option("--scorer_qa", s.qa, "QA scorer backend (lexical | pretrained:<model-id>)")
      ->capture_default_str();
  grp->add_option("--scorer_nli", s.nli, "NLI scorer backend (lexical | pretrained:<model-id>)")
      ->capture_default_str();
  grp->add_option("--scorer_sentiment", s.sentiment,
                  "Sentiment backend (lexical | pretrained:<model-id>)")
      ->capture_default_str();
  grp->add_option("--positive_labels", s.positive_labels,
                  "Comma-separated sentiment labels counted as positive")
      ->capture_default_str();
}

std::vector<Dimension> parse_dimension_arg(const std::string& arg) {
  if (arg == "all")
    return {Dimension::coherence, Dimension::likability, Dimension::topic_depth};
  return {dimension_from_string(arg)};
}

// --- build-pairs ------------------------------------------------------------

struct BuildPairsArgs {
  std::string corpus, dimension = "all", split = "train", out, stats;
  SamplingConfig sampling;
  ScorerConfig scorer;
  std::uint64_t seed = 0;
};

void run_build_pairs(const BuildPairsArgs& args) {
  const CorpusParseResult parsed = parse_corpus(args.corpus);
  for (const std::string& w : parsed.warnings) std::cerr << "warning: " << w << "\n";
  if (parsed.skipped > 0)
    std::cerr << "skipped " << parsed.skipped << " invalid records\n";

  const Split split = split_from_string(args.split);
  const ScorerSet scorers = args.scorer.make();

  std::vector<DialoguePair> all_pairs;
  std::vector<std::pair<Split, StrategyStats>> stat_rows;
  SamplingConfig sampling = args.sampling;
  sampling.seed = args.seed;
  for (Dimension dim : parse_dimension_arg(args.dimension)) {
    const std::string tag =
        "pairs/" + std::string(to_string(dim)) + "/" + std::string(to_string(split));
    Rng rng(mix_seed(args.seed, tag));
    BuildResult built = build_dimension_pairs(parsed.dialogues, dim, scorers, sampling, split, rng);
    for (const StrategyStats& s : built.stats) stat_rows.push_back({split, s});
    for (DialoguePair& p : built.pairs) all_pairs.push_back(std::move(p));
  }

  write_pairs_jsonl(args.out, all_pairs, json{{"seed", args.seed}});
  std::cerr << "wrote " << all_pairs.size() << " pairs to " << args.out << "\n";
  if (!args.stats.empty()) {
    std::ofstream out(args.stats);
    if (!out) throw Error("cannot write stats file: " + args.stats);
    write_stats_csv(out, stat_rows);
  }
}

// --- train --------------------------------------------------------------

struct TrainArgs {
  std::string pairs, val, mode, out;
  TrainConfig train;
  ModelConfig model;
};

void run_train(const TrainArgs& args) {
  args.model.validate();
  const std::vector<DialoguePair> train_pairs = read_pairs_jsonl(args.pairs);
  const std::vector<DialoguePair> val_pairs = read_pairs_jsonl(args.val);

  CheckpointInfo info;
  info.train_config = train_config_to_json(args.train);
  info.seed = args.train.seed;

  if (args.mode == "multitask") {
    MultitaskModel model =
        make_bag_multitask_model(args.model.vocab_size, args.model.hidden_dim,
                                 args.model.max_length, mix_seed(args.train.seed, "model"));
    const TrainResult res = train(model, to_labeled_instances(train_pairs),
                                  to_labeled_instances(val_pairs), args.train);
    std::cerr << "best macro val accuracy " << format_double(res.best_val_accuracy) << " at step "
              << res.best_step << (res.early_stopped ? " (early stop)" : "") << "\n";
    info.best_val_accuracy = res.best_val_accuracy;
    info.best_step = res.best_step;
    save_checkpoint(args.out, model, info);
  } else if (args.mode.rfind("single:", 0) == 0) {
    const Dimension dim = dimension_from_string(args.mode.substr(7));
    auto filter = [dim](const std::vector<DialoguePair>& pairs) {
      std::vector<DialoguePair> out;
      for (const DialoguePair& p : pairs)
        if (p.dimension == dim) out.push_back(p);
      return out;
    };
    SubMetricModel model = make_bag_model(dim, args.model.vocab_size, args.model.hidden_dim,
                                          args.model.max_length, mix_seed(args.train.seed, "model"));
    const TrainResult res = train(model, to_labeled_instances(filter(train_pairs)),
                                  to_labeled_instances(filter(val_pairs)), args.train);
    std::cerr << "best val accuracy " << format_double(res.best_val_accuracy) << " at step "
              << res.best_step << (res.early_stopped ? " (early stop)" : "") << "\n";
    info.best_val_accuracy = res.best_val_accuracy;
    info.best_step = res.best_step;
    save_checkpoint(args.out, model, info);
  } else {
    throw Error("mode must be single:<dimension> or multitask, got '" + args.mode + "'");
  }
  std::cerr << "wrote checkpoint " << args.out << "\n";
}

// --- score --------------------------------------------------------------

struct ScoreArgs {
  std::vector<std::string> models;
  std::string benchmark, out;
};

void run_score(const ScoreArgs& args) {
  const Benchmark bench = parse_benchmark(args.benchmark);
  ScoreTable table;
  if (args.models.size() == 1) {
    const json j = read_checkpoint_json(args.models[0]);
    if (checkpoint_mode(j) == "multitask")
      table = score_benchmark(multitask_from_checkpoint(j), bench);
    else
      table = score_benchmark(single_from_checkpoint(j), bench);
  } else if (args.models.size() == 3) {
    MetricEnsemble ensemble;
    bool have[3] = {false, false, false};
    for (const std::string& path : args.models) {
      SubMetricModel m = single_from_checkpoint(read_checkpoint_json(path));
      have[dim_index(m.dimension)] = true;
      switch (m.dimension) {
        case Dimension::coherence: ensemble.coherence = std::move(m); break;
        case Dimension::likability: ensemble.likability = std::move(m); break;
        case Dimension::topic_depth: ensemble.topic_depth = std::move(m); break;
      }
    }
    if (!have[0] || !have[1] || !have[2])
      throw Error("an ensemble needs one single-task checkpoint per dimension");
    table = score_benchmark(ensemble, bench);
  } else {
    throw Error("--model expects one checkpoint, or three single-task checkpoints for an ensemble");
  }

  std::ofstream out(args.out);
  if (!out) throw Error("cannot write scores file: " + args.out);
  write_scores_csv(out, table);
  std::cerr << "wrote " << table.rows.size() << " rows to " << args.out << "\n";
}

// --- evaluate --------------------------------------------------------------

struct EvaluateArgs {
  std::string scores, benchmark, dims = "all", out;
  bool text = false;
};

void run_evaluate(const EvaluateArgs& args) {
  const Benchmark bench = parse_benchmark(args.benchmark);
  const ScoreCsv csv = read_scores_csv(args.scores);

  std::vector<std::string> dims;
  if (args.dims == "all") {
    dims = bench.dimensions;
  } else {
    for (const std::string& d : detail::split_csv_line(args.dims)) {
      const std::string dim = trim(d);
      if (!dim.empty()) dims.push_back(dim);
    }
  }
  if (dims.empty()) throw Error("no dimensions requested");

  std::vector<ReportEntry> entries;
  for (const std::string& column : csv.columns) {
    const std::map<std::string, double> scores = csv.column_as_map(column);
    for (const std::string& dim : dims)
      entries.push_back(evaluate_metric(scores, bench, dim, column));
  }

  if (!args.out.empty()) {
    std::ofstream out(args.out);
    if (!out) throw Error("cannot write report file: " + args.out);
    out << render_report(entries, ReportFormat::csv);
  }
  if (args.text || args.out.empty()) std::cout << render_report(entries, ReportFormat::text);
}

// --- analyze-dims -------------------------------------------------------

struct AnalyzeArgs {
  std::string benchmark, out, overall = "overall";
  double threshold = 0.75;
  double na_threshold = 0.2;
};

void run_analyze(const AnalyzeArgs& args) {
  const Benchmark bench = parse_benchmark(args.benchmark);

  // The overall dimension is correlated against, not grouped.
  Benchmark grouped = bench;
  grouped.dimensions.clear();
  for (const std::string& dim : bench.dimensions)
    if (dim != args.overall) grouped.dimensions.push_back(dim);
  if (grouped.dimensions.size() < 2)
    throw Error("need at least 2 non-overall dimensions to analyze");

  const CorrelationMatrix matrix = dimension_correlation_matrix(grouped);
  DimensionGroups groups = group_dimensions(matrix, args.threshold);

  json out;
  out["benchmark"] = bench.name;
  out["threshold"] = args.threshold;
  out["dimensions"] = matrix.dimensions;
  json rows = json::array();
  for (std::size_t i = 0; i < matrix.dimensions.size(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < matrix.dimensions.size(); ++j) row.push_back(matrix.at(i, j));
    rows.push_back(std::move(row));
  }
  out["matrix"] = std::move(rows);
  out["groups"] = groups.groups;

  if (!bench.agreement.empty()) {
    const std::vector<std::string> selected =
        select_dimensions(groups, bench, args.overall, bench.agreement, args.na_threshold);
    out["selected"] = selected;
    out["representatives"] = groups.representatives;
    out["agreement"] = bench.agreement;
  }

  const std::string dumped = out.dump(2) + "\n";
  if (!args.out.empty()) {
    std::ofstream f(args.out);
    if (!f) throw Error("cannot write analysis file: " + args.out);
    f << dumped;
  } else {
    std::cout << dumped;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-supervised dialogue-level quality metrics: pair construction, "
               "pairwise-ranking training, benchmark scoring, and correlation analysis."};
  app.require_subcommand(1);
  app.set_config("--config", "",
                 "INI/TOML config file; subcommand options live in [subcommand] sections")
      ->envname("DIALEVAL_CONFIG");

  BuildPairsArgs bp;
  auto* build = app.add_subcommand("build-pairs",
                                   "Construct dimension-specific training pairs from a corpus");
  make_configurable(build);
  build->add_option("--corpus", bp.corpus, "Dialogue corpus (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  build->add_option("--dimension", bp.dimension, "coherence|likability|topic_depth|all")
      ->capture_default_str();
  build->add_option("--split", bp.split, "train|dev (selects the pair budget)")
      ->capture_default_str();
  build->add_option("--out", bp.out, "Output pairs file (JSONL)")->required();
  build->add_option("--stats", bp.stats, "Optional statistics CSV");
  build->add_option("--seed", bp.seed, "Sampling seed")->capture_default_str();
  add_sampling_options(build, bp.sampling);
  add_scorer_options(build, bp.scorer);
  build->callback([&] { run_build_pairs(bp); });

  TrainArgs tr;
  auto* trn = app.add_subcommand("train", "Train a metric on labeled dialogue pairs");
  make_configurable(trn);
  trn->add_option("--pairs", tr.pairs, "Training pairs (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  trn->add_option("--val", tr.val, "Validation pairs (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  trn->add_option("--mode", tr.mode, "single:<dimension> or multitask")->required();
  trn->add_option("--out", tr.out, "Checkpoint output path")->required();
  trn->add_option("--seed", tr.train.seed, "Training seed")->capture_default_str();
  add_train_options(trn, tr.train);
  add_model_options(trn, tr.model);
  trn->callback([&] { run_train(tr); });

  ScoreArgs sc;
  auto* score = app.add_subcommand("score", "Score every benchmark dialogue with a metric");
  make_configurable(score);
  score->add_option("--model", sc.models,
                    "Checkpoint path; pass three single-task checkpoints for an ensemble")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--benchmark", sc.benchmark, "Benchmark file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  score->add_option("--out", sc.out, "Output scores CSV")->required();
  score->callback([&] { run_score(sc); });

  EvaluateArgs ev;
  auto* eval = app.add_subcommand("evaluate",
                                  "Correlate metric scores with human ratings per dimension");
  make_configurable(eval);
  eval->add_option("--scores", ev.scores, "Scores CSV (dialogue_id, then score columns)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--benchmark", ev.benchmark, "Benchmark file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  eval->add_option("--dims", ev.dims, "Comma-separated dimension list, or 'all'")
      ->capture_default_str();
  eval->add_option("--out", ev.out, "Report CSV path (omit to print a text table)");
  eval->add_flag("--text", ev.text, "Also print the aligned text table");
  eval->callback([&] { run_evaluate(ev); });

  AnalyzeArgs an;
  auto* analyze = app.add_subcommand(
      "analyze-dims", "Dimension correlation matrix, grouping, and representative selection");
  make_configurable(analyze);
  analyze->add_option("--benchmark", an.benchmark, "Benchmark file (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  analyze->add_option("--threshold", an.threshold, "Grouping correlation threshold")
      ->capture_default_str();
  analyze->add_option("--overall", an.overall, "Name of the overall-impression dimension")
      ->capture_default_str();
  analyze->add_option("--na-threshold", an.na_threshold, "Maximum N/A fraction for selection")
      ->capture_default_str();
  analyze->add_option("--out", an.out, "Analysis JSON path (omit for stdout)");
  analyze->callback([&] { run_analyze(an); });

  RunConfig rc;
  auto* run = app.add_subcommand("run", "Full pipeline: pairs -> train -> score -> report");
  make_configurable(run);
  run->add_option("--corpus", rc.corpus_path, "Dialogue corpus (JSONL)")->capture_default_str();
  run->add_option("--benchmark", rc.benchmark_path, "Benchmark file (JSONL)")
      ->capture_default_str();
  run->add_option("--out-dir,--output_dir", rc.output_dir, "Artifact output directory")
      ->capture_default_str();
  run->add_option("--mode", rc.mode, "multitask | ensemble | single:<dimension>")
      ->capture_default_str();
  run->add_option("--seed", rc.seed, "Seed propagated to every stochastic component")
      ->capture_default_str();
  add_sampling_options(run, rc.sampling);
  add_train_options(run, rc.train);
  add_model_options(run, rc.model);
  add_scorer_options(run, rc.scorer);
  run->callback([&] {
    const PipelineArtifacts artifacts = run_pipeline(rc);
    std::cout << "pairs:  " << artifacts.pairs_train.string() << ", "
              << artifacts.pairs_dev.string() << "\n"
              << "stats:  " << artifacts.stats.string() << "\n";
    for (const auto& ckpt : artifacts.checkpoints) std::cout << "model:  " << ckpt.string() << "\n";
    std::cout << "scores: " << artifacts.scores.string() << "\n"
              << "report: " << artifacts.report.string() << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
