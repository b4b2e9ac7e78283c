#pragma once

// The trainable metric: dialogues are encoded as token sequences with a
// delimiter token after every utterance, per-token hidden vectors are
// average-pooled, and an affine map plus sigmoid yields a scalar score in
// (0, 1). One head per dimension; the multitask variant shares the encoder
// across three heads. Gradients are computed by hand (no autodiff dependency).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dialeval/corpus.hpp"

namespace dialeval {

inline std::size_t dim_index(Dimension d) { return static_cast<std::size_t>(d); }

// ---------------------------------------------------------------------------
// Tokenization

// Hashing tokenizer: words map to stable FNV-1a buckets, so no fitted
// vocabulary is needed and ids are identical across platforms and runs.
struct HashTokenizer {
  static constexpr int kPadId = 0;
  static constexpr int kDelimiterId = 1;
  static constexpr std::size_t kReserved = 2;

  std::size_t vocab_size = 4096;

  std::vector<int> tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const std::string& w : word_tokens(text)) ids.push_back(token_id(w));
    return ids;
  }

  int token_id(std::string_view word) const {
    if (vocab_size <= kReserved)
      throw Error("tokenizer vocab_size must exceed the reserved ids");
    return static_cast<int>(kReserved + fnv1a64(word) % (vocab_size - kReserved));
  }
};

struct DialogueEncoding {
  std::vector<int> token_ids;  // one delimiter id after every utterance
  bool truncated = false;
};

// Token runs per utterance, each followed by the delimiter token; truncation
// drops tokens from the tail when the sequence exceeds max_length.
inline DialogueEncoding encode_dialogue(const Dialogue& d, const HashTokenizer& tokenizer,
                                        std::size_t max_length) {
  DialogueEncoding enc;
  for (const Utterance& u : d.utterances) {
    for (int id : tokenizer.tokenize(u.text)) enc.token_ids.push_back(id);
    enc.token_ids.push_back(HashTokenizer::kDelimiterId);
  }
  if (enc.token_ids.size() > max_length) {
    enc.token_ids.resize(max_length);
    enc.truncated = true;
  }
  return enc;
}

// ---------------------------------------------------------------------------
// Parameters

struct Tensor {
  std::vector<double> value;
  std::vector<double> grad;

  explicit Tensor(std::size_t n = 0) : value(n, 0.0), grad(n, 0.0) {}
  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }
};

// ---------------------------------------------------------------------------
// Sequence encoders

class SequenceEncoder {
 public:
  virtual ~SequenceEncoder() = default;

  virtual std::size_t hidden_dim() const = 0;
  virtual std::size_t max_length() const = 0;

  // Row-major matrix of per-token hidden vectors; row count is
  // min(ids.size(), max_length).
  virtual std::vector<double> encode(std::span<const int> ids) const = 0;

  // Accumulates parameter gradients given d(loss)/d(rows) for the same ids.
  virtual void backward(std::span<const int> ids, std::span<const double> d_rows) = 0;

  virtual std::vector<Tensor*> parameters() = 0;
};

// Trainable embedding-table encoder: each token's hidden vector is its
// embedding row. Mean pooling downstream makes the model a bag of token
// embeddings. Suits CPU-scale training; a pretrained transformer backend is a
// drop-in behind the same interface.
class BagEmbeddingEncoder final : public SequenceEncoder {
 public:
  BagEmbeddingEncoder(std::size_t vocab_size, std::size_t hidden_dim, std::size_t max_length)
      : vocab_size_(vocab_size), hidden_dim_(hidden_dim), max_length_(max_length),
        embeddings_(vocab_size * hidden_dim) {}

  void init_parameters(Rng& rng, double scale = 0.1) {
    for (double& v : embeddings_.value) v = (rng.unit() * 2.0 - 1.0) * scale;
  }

  std::size_t vocab_size() const { return vocab_size_; }
  std::size_t hidden_dim() const override { return hidden_dim_; }
  std::size_t max_length() const override { return max_length_; }

  std::vector<double> encode(std::span<const int> ids) const override {
    const std::size_t rows = std::min(ids.size(), max_length_);
    std::vector<double> out(rows * hidden_dim_);
    for (std::size_t t = 0; t < rows; ++t) {
      const auto row = static_cast<std::size_t>(ids[t]) * hidden_dim_;
      for (std::size_t h = 0; h < hidden_dim_; ++h) out[t * hidden_dim_ + h] = embeddings_.value[row + h];
    }
    return out;
  }

  void backward(std::span<const int> ids, std::span<const double> d_rows) override {
    const std::size_t rows = std::min(ids.size(), max_length_);
    for (std::size_t t = 0; t < rows; ++t) {
      const auto row = static_cast<std::size_t>(ids[t]) * hidden_dim_;
      for (std::size_t h = 0; h < hidden_dim_; ++h)
        embeddings_.grad[row + h] += d_rows[t * hidden_dim_ + h];
    }
  }

  std::vector<Tensor*> parameters() override { return {&embeddings_}; }
  Tensor& embeddings() { return embeddings_; }
  const Tensor& embeddings() const { return embeddings_; }

 private:
  std::size_t vocab_size_, hidden_dim_, max_length_;
  Tensor embeddings_;
};

// ---------------------------------------------------------------------------
// Scalar head

// Keeps the score inside the open interval (0, 1) even when exp saturates.
inline double sigmoid(double z) {
  double s = 1.0 / (1.0 + std::exp(-z));
  if (s <= 0.0) s = std::numeric_limits<double>::min();
  if (s >= 1.0) s = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  return s;
}

struct ScalarHead {
  Tensor weight;  // hidden_dim
  Tensor bias;    // 1

  explicit ScalarHead(std::size_t hidden_dim = 0) : weight(hidden_dim), bias(1) {}

  void init_parameters(Rng& rng, double scale = 0.1) {
    for (double& v : weight.value) v = (rng.unit() * 2.0 - 1.0) * scale;
    bias.value[0] = 0.0;
  }

  double affine(std::span<const double> pooled) const {
    double z = bias.value[0];
    for (std::size_t h = 0; h < weight.size(); ++h) z += weight.value[h] * pooled[h];
    return z;
  }

  // Accumulates weight/bias gradients for d(loss)/dz and adds the pooled-input
  // gradient into d_pooled.
  void backward(std::span<const double> pooled, double dz, std::span<double> d_pooled) {
    for (std::size_t h = 0; h < weight.size(); ++h) {
      weight.grad[h] += dz * pooled[h];
      d_pooled[h] += dz * weight.value[h];
    }
    bias.grad[0] += dz;
  }

  std::vector<Tensor*> parameters() { return {&weight, &bias}; }
};

// ---------------------------------------------------------------------------
// Models

struct ScoreTrace {
  std::vector<int> ids;
  std::vector<double> pooled;
  double z = 0.0;
  double score = 0.5;
};

namespace detail {

inline std::vector<double> mean_pool(const std::vector<double>& rows, std::size_t hidden_dim) {
  const std::size_t n = rows.size() / hidden_dim;
  std::vector<double> pooled(hidden_dim, 0.0);
  if (n == 0) return pooled;
  for (std::size_t t = 0; t < n; ++t)
    for (std::size_t h = 0; h < hidden_dim; ++h) pooled[h] += rows[t * hidden_dim + h];
  for (double& v : pooled) v /= static_cast<double>(n);
  return pooled;
}

inline ScoreTrace forward_trace(const SequenceEncoder& encoder, const HashTokenizer& tokenizer,
                                const ScalarHead& head, const Dialogue& d) {
  ScoreTrace trace;
  trace.ids = encode_dialogue(d, tokenizer, encoder.max_length()).token_ids;
  trace.pooled = mean_pool(encoder.encode(trace.ids), encoder.hidden_dim());
  trace.z = head.affine(trace.pooled);
  trace.score = sigmoid(trace.z);
  return trace;
}

// Backpropagates d(loss)/d(score) through sigmoid, head and mean pooling into
// the encoder parameters.
inline void backward_trace(SequenceEncoder& encoder, ScalarHead& head, const ScoreTrace& trace,
                           double d_score) {
  const double dz = d_score * trace.score * (1.0 - trace.score);
  std::vector<double> d_pooled(encoder.hidden_dim(), 0.0);
  head.backward(trace.pooled, dz, d_pooled);

  const std::size_t rows = std::min(trace.ids.size(), encoder.max_length());
  if (rows == 0) return;
  std::vector<double> d_rows(rows * encoder.hidden_dim());
  for (std::size_t t = 0; t < rows; ++t)
    for (std::size_t h = 0; h < encoder.hidden_dim(); ++h)
      d_rows[t * encoder.hidden_dim() + h] = d_pooled[h] / static_cast<double>(rows);
  encoder.backward(trace.ids, d_rows);
}

}  // namespace detail

struct SubMetricModel {
  Dimension dimension = Dimension::coherence;
  HashTokenizer tokenizer;
  std::shared_ptr<SequenceEncoder> encoder;
  ScalarHead head;

  ScoreTrace forward(const Dialogue& d) const {
    return detail::forward_trace(*encoder, tokenizer, head, d);
  }

  void backward(const ScoreTrace& trace, double d_score) {
    detail::backward_trace(*encoder, head, trace, d_score);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> params = encoder->parameters();
    for (Tensor* t : head.parameters()) params.push_back(t);
    return params;
  }
};

// Convenience constructor for the CPU-scale configuration.
inline SubMetricModel make_bag_model(Dimension dim, std::size_t vocab_size,
                                     std::size_t hidden_dim, std::size_t max_length,
                                     std::uint64_t seed) {
  SubMetricModel m;
  m.dimension = dim;
  m.tokenizer.vocab_size = vocab_size;
  auto encoder = std::make_shared<BagEmbeddingEncoder>(vocab_size, hidden_dim, max_length);
  Rng rng(mix_seed(seed, "model-init"));
  encoder->init_parameters(rng);
  m.encoder = std::move(encoder);
  m.head = ScalarHead(hidden_dim);
  m.head.init_parameters(rng);
  return m;
}

inline double score_dialogue(const SubMetricModel& m, const Dialogue& d) {
  return m.forward(d).score;
}

// Shared encoder, one independent head per dimension.
struct MultitaskModel {
  HashTokenizer tokenizer;
  std::shared_ptr<SequenceEncoder> encoder;
  std::array<ScalarHead, 3> heads;  // indexed by dim_index

  ScoreTrace forward(const Dialogue& d, Dimension dim) const {
    return detail::forward_trace(*encoder, tokenizer, heads[dim_index(dim)], d);
  }

  void backward(const ScoreTrace& trace, Dimension dim, double d_score) {
    detail::backward_trace(*encoder, heads[dim_index(dim)], trace, d_score);
  }

  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> params = encoder->parameters();
    for (ScalarHead& head : heads)
      for (Tensor* t : head.parameters()) params.push_back(t);
    return params;
  }
};

inline MultitaskModel make_bag_multitask_model(std::size_t vocab_size, std::size_t hidden_dim,
                                               std::size_t max_length, std::uint64_t seed) {
  MultitaskModel m;
  m.tokenizer.vocab_size = vocab_size;
  auto encoder = std::make_shared<BagEmbeddingEncoder>(vocab_size, hidden_dim, max_length);
  Rng rng(mix_seed(seed, "model-init"));
  encoder->init_parameters(rng);
  m.encoder = std::move(encoder);
  for (std::size_t i = 0; i < m.heads.size(); ++i) {
    m.heads[i] = ScalarHead(hidden_dim);
    m.heads[i].init_parameters(rng);
  }
  return m;
}

inline double score_dialogue(const MultitaskModel& m, const Dialogue& d, Dimension dim) {
  return m.forward(d, dim).score;
}

// ---------------------------------------------------------------------------
// Losses

// Margin ranking loss: zero iff y * (x1 - x2) >= margin. The positive member
// is pushed at least `margin` above the negative regardless of argument order.
inline double ranking_loss(double x1, double x2, int y, double margin = 0.1) {
  return std::max(0.0, -static_cast<double>(y) * (x1 - x2) + margin);
}

// ---------------------------------------------------------------------------
// Combining sub-metrics

// Late fusion: the holistic score is the arithmetic mean of the three
// dimension scores. The multitask model uses the same rule for its final
// score.
inline double ensemble_score(double coherence, double likability, double topic_depth) {
  return (coherence + likability + topic_depth) / 3.0;
}

struct MetricEnsemble {
  SubMetricModel coherence;
  SubMetricModel likability;
  SubMetricModel topic_depth;
};

// ---------------------------------------------------------------------------
// Benchmark scoring (inference: truncation only, never sub-dialogue splitting)

struct ScoreTable {
  std::vector<std::string> columns;  // score names, without the leading dialogue_id
  std::vector<std::pair<std::string, std::vector<double>>> rows;
};

inline ScoreTable score_benchmark(const SubMetricModel& m, const Benchmark& bench) {
  ScoreTable table;
  table.columns = {std::string(to_string(m.dimension))};
  for (const RatedDialogue& item : bench.items)
    table.rows.push_back({item.dialogue.id, {score_dialogue(m, item.dialogue)}});
  return table;
}

inline ScoreTable score_benchmark(const MultitaskModel& m, const Benchmark& bench) {
  ScoreTable table;
  table.columns = {"coherence", "likability", "topic_depth", "mean"};
  for (const RatedDialogue& item : bench.items) {
    const double c = score_dialogue(m, item.dialogue, Dimension::coherence);
    const double l = score_dialogue(m, item.dialogue, Dimension::likability);
    const double t = score_dialogue(m, item.dialogue, Dimension::topic_depth);
    table.rows.push_back({item.dialogue.id, {c, l, t, ensemble_score(c, l, t)}});
  }
  return table;
}

inline ScoreTable score_benchmark(const MetricEnsemble& e, const Benchmark& bench) {
  ScoreTable table;
  table.columns = {"coherence", "likability", "topic_depth", "mean"};
  for (const RatedDialogue& item : bench.items) {
    const double c = score_dialogue(e.coherence, item.dialogue);
    const double l = score_dialogue(e.likability, item.dialogue);
    const double t = score_dialogue(e.topic_depth, item.dialogue);
    table.rows.push_back({item.dialogue.id, {c, l, t, ensemble_score(c, l, t)}});
  }
  return table;
}

inline void write_scores_csv(std::ostream& out, const ScoreTable& table,
                             const std::string& comment = "") {
  if (!comment.empty()) out << "# " << comment << '\n';
  out << "dialogue_id";
  for (const std::string& c : table.columns) out << ',' << csv_escape(c);
  out << '\n';
  for (const auto& [id, values] : table.rows) {
    out << csv_escape(id);
    for (double v : values) out << ',' << format_double(v);
    out << '\n';
  }
}

// ---------------------------------------------------------------------------
// Checkpoints
//
// Self-describing JSON container: config echo, tokenizer and encoder
// parameters, per-dimension head parameters, and best-accuracy metadata.

struct CheckpointInfo {
  json train_config;  // echo of the training configuration
  double best_val_accuracy = 0.0;
  std::size_t best_step = 0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

namespace detail {

inline json encoder_to_json(const SequenceEncoder& encoder) {
  const auto* bag = dynamic_cast<const BagEmbeddingEncoder*>(&encoder);
  if (!bag) throw Error("only bag_embedding encoders can be checkpointed");
  return {{"type", "bag_embedding"},
          {"vocab_size", bag->vocab_size()},
          {"hidden_dim", bag->hidden_dim()},
          {"max_length", bag->max_length()},
          {"embeddings", bag->embeddings().value}};
}

inline std::shared_ptr<SequenceEncoder> encoder_from_json(const json& j) {
  if (j.at("type").get<std::string>() != "bag_embedding")
    throw Error("unsupported encoder type in checkpoint: " + j.at("type").get<std::string>());
  auto encoder = std::make_shared<BagEmbeddingEncoder>(j.at("vocab_size").get<std::size_t>(),
                                                       j.at("hidden_dim").get<std::size_t>(),
                                                       j.at("max_length").get<std::size_t>());
  encoder->embeddings().value = j.at("embeddings").get<std::vector<double>>();
  if (encoder->embeddings().value.size() != encoder->vocab_size() * encoder->hidden_dim())
    throw Error("checkpoint embedding table has the wrong size");
  return encoder;
}

inline json head_to_json(const ScalarHead& head) {
  return {{"weight", head.weight.value}, {"bias", head.bias.value[0]}};
}

inline ScalarHead head_from_json(const json& j, std::size_t hidden_dim) {
  ScalarHead head(hidden_dim);
  head.weight.value = j.at("weight").get<std::vector<double>>();
  if (head.weight.size() != hidden_dim) throw Error("checkpoint head has the wrong size");
  head.bias.value[0] = j.at("bias").get<double>();
  return head;
}

inline json checkpoint_common(const HashTokenizer& tokenizer, const SequenceEncoder& encoder,
                              const CheckpointInfo& info) {
  json j;
  j["format"] = "dialeval-checkpoint";
  j["version"] = 1;
  j["tokenizer"] = {{"vocab_size", tokenizer.vocab_size}};
  j["encoder"] = encoder_to_json(encoder);
  j["train_config"] = info.train_config;
  j["best"] = {{"val_accuracy", info.best_val_accuracy}, {"step", info.best_step}};
  j["seed"] = info.seed;
  if (!info.config_hash.empty()) j["config_hash"] = info.config_hash;
  return j;
}

inline void write_checkpoint_file(const std::filesystem::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const SubMetricModel& m,
                            const CheckpointInfo& info) {
  json j = detail::checkpoint_common(m.tokenizer, *m.encoder, info);
  j["mode"] = "single";
  j["dimension"] = std::string(to_string(m.dimension));
  j["heads"] = {{std::string(to_string(m.dimension)), detail::head_to_json(m.head)}};
  detail::write_checkpoint_file(path, j);
}

inline void save_checkpoint(const std::filesystem::path& path, const MultitaskModel& m,
                            const CheckpointInfo& info) {
  json j = detail::checkpoint_common(m.tokenizer, *m.encoder, info);
  j["mode"] = "multitask";
  json heads;
  for (Dimension d : kAllDimensions)
    heads[std::string(to_string(d))] = detail::head_to_json(m.heads[dim_index(d)]);
  j["heads"] = std::move(heads);
  detail::write_checkpoint_file(path, j);
}

inline json read_checkpoint_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw Error("checkpoint " + path.string() + ": " + e.what());
  }
  if (j.value("format", "") != "dialeval-checkpoint")
    throw Error("not a dialeval checkpoint: " + path.string());
  return j;
}

inline std::string checkpoint_mode(const json& j) { return j.at("mode").get<std::string>(); }

namespace detail {

// Token ids must stay inside the encoder's embedding table.
inline void check_vocab_consistency(const HashTokenizer& tokenizer,
                                    const SequenceEncoder& encoder) {
  const auto* bag = dynamic_cast<const BagEmbeddingEncoder*>(&encoder);
  if (bag && bag->vocab_size() < tokenizer.vocab_size)
    throw Error("checkpoint tokenizer vocabulary exceeds the encoder's embedding table");
}

}  // namespace detail

inline SubMetricModel single_from_checkpoint(const json& j) {
  if (checkpoint_mode(j) != "single") throw Error("checkpoint is not a single-task model");
  SubMetricModel m;
  m.dimension = dimension_from_string(j.at("dimension").get<std::string>());
  m.tokenizer.vocab_size = j.at("tokenizer").at("vocab_size").get<std::size_t>();
  m.encoder = detail::encoder_from_json(j.at("encoder"));
  detail::check_vocab_consistency(m.tokenizer, *m.encoder);
  m.head = detail::head_from_json(j.at("heads").at(std::string(to_string(m.dimension))),
                                  m.encoder->hidden_dim());
  return m;
}

inline MultitaskModel multitask_from_checkpoint(const json& j) {
  if (checkpoint_mode(j) != "multitask") throw Error("checkpoint is not a multitask model");
  MultitaskModel m;
  m.tokenizer.vocab_size = j.at("tokenizer").at("vocab_size").get<std::size_t>();
  m.encoder = detail::encoder_from_json(j.at("encoder"));
  detail::check_vocab_consistency(m.tokenizer, *m.encoder);
  for (Dimension d : kAllDimensions)
    m.heads[dim_index(d)] = detail::head_from_json(
        j.at("heads").at(std::string(to_string(d))), m.encoder->hidden_dim());
  return m;
}

}  // namespace dialeval
