#pragma once

// Margin-ranking training for the dialogue metrics: AdamW at a constant
// learning rate, validation by pairwise ranking accuracy every
// eval_every_steps optimizer steps, early stopping after a fixed number of
// non-improving checkpoints, and best-checkpoint selection. The multitask
// variant draws batches uniformly from the three task pools and sums the
// per-task mean losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dialeval/model.hpp"
#include "dialeval/sampler.hpp"

namespace dialeval {

struct TrainConfig {
  double learning_rate = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t eval_every_steps = 2000;
  std::size_t patience_checkpoints = 10;
  double margin = 0.1;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0.0) throw Error("train: learning_rate must be positive");
    if (batch_size == 0) throw Error("train: batch_size must be positive");
    if (max_epochs == 0) throw Error("train: max_epochs must be positive");
    if (eval_every_steps == 0) throw Error("train: eval_every_steps must be positive");
    if (patience_checkpoints == 0) throw Error("train: patience_checkpoints must be positive");
    if (margin < 0.0) throw Error("train: margin must be >= 0");
    if (weight_decay < 0.0) throw Error("train: weight_decay must be >= 0");
  }
};

inline json train_config_to_json(const TrainConfig& cfg) {
  return {{"learning_rate", cfg.learning_rate},
          {"batch_size", cfg.batch_size},
          {"max_epochs", cfg.max_epochs},
          {"eval_every_steps", cfg.eval_every_steps},
          {"patience_checkpoints", cfg.patience_checkpoints},
          {"margin", cfg.margin},
          {"weight_decay", cfg.weight_decay},
          {"seed", cfg.seed}};
}

inline TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.learning_rate = j.value("learning_rate", cfg.learning_rate);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.max_epochs = j.value("max_epochs", cfg.max_epochs);
  cfg.eval_every_steps = j.value("eval_every_steps", cfg.eval_every_steps);
  cfg.patience_checkpoints = j.value("patience_checkpoints", cfg.patience_checkpoints);
  cfg.margin = j.value("margin", cfg.margin);
  cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
  cfg.seed = j.value("seed", cfg.seed);
  return cfg;
}

// Training dialogues are pre-split into sub-dialogues of at most this many
// utterances; benchmark scoring never splits.
inline constexpr std::size_t kTrainMaxUtterances = 10;

// ---------------------------------------------------------------------------
// Optimizer: Adam with decoupled weight decay, constant learning rate.

class AdamW {
 public:
  AdamW(std::vector<Tensor*> params, double lr, double weight_decay, double beta1 = 0.9,
        double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), weight_decay_(weight_decay), beta1_(beta1),
        beta2_(beta2), eps_(eps) {
    slots_.reserve(params_.size());
    for (Tensor* t : params_) slots_.push_back({std::vector<double>(t->size(), 0.0),
                                                std::vector<double>(t->size(), 0.0)});
  }

  void zero_grad() {
    for (Tensor* t : params_) t->zero_grad();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
      Tensor& tensor = *params_[p];
      Slot& slot = slots_[p];
      for (std::size_t i = 0; i < tensor.size(); ++i) {
        const double g = tensor.grad[i];
        slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
        slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
        const double m_hat = slot.m[i] / bc1;
        const double v_hat = slot.v[i] / bc2;
        tensor.value[i] -=
            lr_ * (m_hat / (std::sqrt(v_hat) + eps_) + weight_decay_ * tensor.value[i]);
      }
    }
  }

 private:
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Tensor*> params_;
  std::vector<Slot> slots_;
  double lr_, weight_decay_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
};

// ---------------------------------------------------------------------------
// Batch losses

namespace detail {

// max(0, arg) that propagates NaN instead of swallowing it, so divergence is
// visible to the training loop's NaN check.
inline double hinge(double arg) {
  if (std::isnan(arg)) return arg;
  return arg > 0.0 ? arg : 0.0;
}

}  // namespace detail

// Mean margin ranking loss over a batch for a single-task model. All
// instances must carry the model's dimension.
inline double batch_loss_single(const SubMetricModel& m,
                                std::span<const LabeledInstance> batch, double margin = 0.1) {
  if (batch.empty()) throw Error("batch_loss_single: empty batch");
  double sum = 0.0;
  for (const LabeledInstance& inst : batch) {
    if (inst.dimension != m.dimension)
      throw Error("batch_loss_single: instance dimension " +
                  std::string(to_string(inst.dimension)) + " does not match model dimension " +
                  std::string(to_string(m.dimension)));
    const double y = inst.label;
    sum += detail::hinge(
        -y * (score_dialogue(m, inst.first) - score_dialogue(m, inst.second)) + margin);
  }
  return sum / static_cast<double>(batch.size());
}

// Same loss, accumulating parameter gradients of the batch mean.
inline double batch_loss_single_backward(SubMetricModel& m,
                                         std::span<const LabeledInstance> batch,
                                         double margin = 0.1) {
  if (batch.empty()) throw Error("batch_loss_single: empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double sum = 0.0;
  for (const LabeledInstance& inst : batch) {
    if (inst.dimension != m.dimension)
      throw Error("batch_loss_single: instance dimension does not match model dimension");
    const ScoreTrace t1 = m.forward(inst.first);
    const ScoreTrace t2 = m.forward(inst.second);
    const double y = inst.label;
    const double arg = -y * (t1.score - t2.score) + margin;
    sum += detail::hinge(arg);
    if (arg > 0.0) {  // hinge active
      m.backward(t1, -y * inv_n);
      m.backward(t2, +y * inv_n);
    }
  }
  return sum * inv_n;
}

// Multitask batch loss: every instance is scored by its own dimension's head;
// the total is the sum of the three per-dimension mean losses, with an empty
// per-dimension sub-batch contributing zero.
inline double batch_loss_multitask(const MultitaskModel& m,
                                   std::span<const LabeledInstance> batch, double margin = 0.1) {
  if (batch.empty()) throw Error("batch_loss_multitask: empty batch");
  std::array<double, 3> sums = {0.0, 0.0, 0.0};
  std::array<std::size_t, 3> counts = {0, 0, 0};
  for (const LabeledInstance& inst : batch) {
    const std::size_t di = dim_index(inst.dimension);
    const double y = inst.label;
    sums[di] += detail::hinge(-y * (score_dialogue(m, inst.first, inst.dimension) -
                                    score_dialogue(m, inst.second, inst.dimension)) +
                              margin);
    ++counts[di];
  }
  double total = 0.0;
  for (std::size_t di = 0; di < 3; ++di)
    if (counts[di] > 0) total += sums[di] / static_cast<double>(counts[di]);
  return total;
}

// Gradient-accumulating twin. Encoder gradients flow from every instance;
// each head only sees its own dimension's instances.
inline double batch_loss_multitask_backward(MultitaskModel& m,
                                            std::span<const LabeledInstance> batch,
                                            double margin = 0.1) {
  if (batch.empty()) throw Error("batch_loss_multitask: empty batch");
  std::array<std::size_t, 3> counts = {0, 0, 0};
  for (const LabeledInstance& inst : batch) ++counts[dim_index(inst.dimension)];

  std::array<double, 3> sums = {0.0, 0.0, 0.0};
  for (const LabeledInstance& inst : batch) {
    const std::size_t di = dim_index(inst.dimension);
    const double inv_n = 1.0 / static_cast<double>(counts[di]);
    const ScoreTrace t1 = m.forward(inst.first, inst.dimension);
    const ScoreTrace t2 = m.forward(inst.second, inst.dimension);
    const double y = inst.label;
    const double arg = -y * (t1.score - t2.score) + margin;
    sums[di] += detail::hinge(arg);
    if (arg > 0.0) {
      m.backward(t1, inst.dimension, -y * inv_n);
      m.backward(t2, inst.dimension, +y * inv_n);
    }
  }
  double total = 0.0;
  for (std::size_t di = 0; di < 3; ++di)
    if (counts[di] > 0) total += sums[di] / static_cast<double>(counts[di]);
  return total;
}

// ---------------------------------------------------------------------------
// Validation accuracy

// Fraction of instances whose positive member scores strictly higher.
inline double pairwise_accuracy(const SubMetricModel& m,
                                std::span<const LabeledInstance> instances) {
  if (instances.empty()) throw Error("pairwise_accuracy: no instances");
  std::size_t correct = 0;
  for (const LabeledInstance& inst : instances) {
    const double s1 = score_dialogue(m, inst.first);
    const double s2 = score_dialogue(m, inst.second);
    if (inst.label * (s1 - s2) > 0.0) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(instances.size());
}

// Macro average of the per-dimension pairwise accuracies.
inline double macro_accuracy(const MultitaskModel& m,
                             const std::array<std::vector<LabeledInstance>, 3>& pools) {
  double sum = 0.0;
  for (std::size_t di = 0; di < 3; ++di) {
    if (pools[di].empty()) throw Error("macro_accuracy: a dimension has no validation instances");
    std::size_t correct = 0;
    for (const LabeledInstance& inst : pools[di]) {
      const double s1 = score_dialogue(m, inst.first, inst.dimension);
      const double s2 = score_dialogue(m, inst.second, inst.dimension);
      if (inst.label * (s1 - s2) > 0.0) ++correct;
    }
    sum += static_cast<double>(correct) / static_cast<double>(pools[di].size());
  }
  return sum / 3.0;
}

// ---------------------------------------------------------------------------
// Training loop

struct CheckpointRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean batch loss since the previous checkpoint
  double val_accuracy = 0.0;
  bool improved = false;
};

struct TrainResult {
  double best_val_accuracy = 0.0;
  std::size_t best_step = 0;
  std::vector<CheckpointRecord> history;
  std::size_t total_steps = 0;
  bool early_stopped = false;
};

namespace detail {

inline std::vector<std::vector<double>> snapshot_params(const std::vector<Tensor*>& params) {
  std::vector<std::vector<double>> snap;
  snap.reserve(params.size());
  for (const Tensor* t : params) snap.push_back(t->value);
  return snap;
}

inline void restore_params(const std::vector<Tensor*>& params,
                           const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

// Expands an instance over the sub-dialogue chunks of both members. Chunks are
// aligned positionally; the shorter side repeats its last chunk.
inline void split_instance_into(const LabeledInstance& inst,
                                std::vector<LabeledInstance>& out) {
  if (inst.first.size() <= kTrainMaxUtterances && inst.second.size() <= kTrainMaxUtterances) {
    out.push_back(inst);
    return;
  }
  const std::vector<Dialogue> a = split_long_dialogue(inst.first, kTrainMaxUtterances);
  const std::vector<Dialogue> b = split_long_dialogue(inst.second, kTrainMaxUtterances);
  const std::size_t n = std::max(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    LabeledInstance sub = inst;
    sub.first = a[std::min(i, a.size() - 1)];
    sub.second = b[std::min(i, b.size() - 1)];
    out.push_back(std::move(sub));
  }
}

inline std::vector<LabeledInstance> split_instances(
    const std::vector<LabeledInstance>& instances) {
  std::vector<LabeledInstance> out;
  out.reserve(instances.size());
  for (const LabeledInstance& inst : instances) split_instance_into(inst, out);
  return out;
}

// Shared checkpoint/early-stopping bookkeeping. Ties break toward the earlier
// checkpoint (strict improvement required).
struct EarlyStopper {
  explicit EarlyStopper(std::size_t patience) : patience_(patience) {}

  bool offer(double accuracy, std::size_t step) {
    if (accuracy > best_accuracy_) {
      best_accuracy_ = accuracy;
      best_step_ = step;
      since_improvement_ = 0;
      return true;
    }
    ++since_improvement_;
    return false;
  }

  bool exhausted() const { return since_improvement_ >= patience_; }
  double best_accuracy() const { return best_accuracy_; }
  std::size_t best_step() const { return best_step_; }

 private:
  std::size_t patience_;
  double best_accuracy_ = -1.0;
  std::size_t best_step_ = 0;
  std::size_t since_improvement_ = 0;
};

}  // namespace detail

// Trains a single-task metric. Dialogues in both instance sets are pre-split
// to at most kTrainMaxUtterances utterances. The model is left holding the
// parameters of the checkpoint with the best validation accuracy.
inline TrainResult train(SubMetricModel& model, const std::vector<LabeledInstance>& train_insts,
                         const std::vector<LabeledInstance>& val_insts, const TrainConfig& cfg) {
  cfg.validate();
  if (train_insts.empty() || val_insts.empty())
    throw Error("train: train and validation splits must be non-empty");

  const std::vector<LabeledInstance> train_data = detail::split_instances(train_insts);
  const std::vector<LabeledInstance> val_data = detail::split_instances(val_insts);

  const std::vector<Tensor*> params = model.parameters();
  AdamW optimizer(params, cfg.learning_rate, cfg.weight_decay);
  Rng rng(mix_seed(cfg.seed, "train-single"));

  detail::EarlyStopper stopper(cfg.patience_checkpoints);
  std::vector<std::vector<double>> best_snapshot = detail::snapshot_params(params);
  TrainResult result;

  std::vector<std::size_t> order(train_data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::size_t step = 0;
  double loss_accum = 0.0;
  std::size_t loss_batches = 0;
  std::size_t last_eval_step = 0;
  bool stop = false;

  auto run_checkpoint = [&](std::size_t epoch) {
    const double acc = pairwise_accuracy(model, val_data);
    const bool improved = stopper.offer(acc, step);
    if (improved) best_snapshot = detail::snapshot_params(params);
    result.history.push_back({step, epoch,
                              loss_batches ? loss_accum / static_cast<double>(loss_batches) : 0.0,
                              acc, improved});
    loss_accum = 0.0;
    loss_batches = 0;
    last_eval_step = step;
    if (stopper.exhausted()) {
      result.early_stopped = true;
      stop = true;
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size() && !stop; start += cfg.batch_size) {
      const std::size_t end = std::min(start + cfg.batch_size, order.size());
      std::vector<LabeledInstance> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) batch.push_back(train_data[order[i]]);

      optimizer.zero_grad();
      const double loss = batch_loss_single_backward(model, batch, cfg.margin);
      if (std::isnan(loss))
        throw Error("train: loss diverged to NaN at step " + std::to_string(step + 1));
      optimizer.step();
      ++step;
      loss_accum += loss;
      ++loss_batches;

      if (step % cfg.eval_every_steps == 0) run_checkpoint(epoch);
    }
  }
  // Final partial interval, so a best checkpoint always exists.
  if (!stop && step != last_eval_step) run_checkpoint(cfg.max_epochs - 1);

  detail::restore_params(params, best_snapshot);
  result.best_val_accuracy = stopper.best_accuracy();
  result.best_step = stopper.best_step();
  result.total_steps = step;
  return result;
}

// Trains the multitask metric. Mini-batches draw instances uniformly from the
// three per-dimension pools; checkpoint selection uses the macro-averaged
// validation accuracy across the three ranking tasks.
inline TrainResult train(MultitaskModel& model, const std::vector<LabeledInstance>& train_insts,
                         const std::vector<LabeledInstance>& val_insts, const TrainConfig& cfg) {
  cfg.validate();
  if (train_insts.empty() || val_insts.empty())
    throw Error("train: train and validation splits must be non-empty");

  std::array<std::vector<LabeledInstance>, 3> train_pools;
  for (const LabeledInstance& inst : detail::split_instances(train_insts))
    train_pools[dim_index(inst.dimension)].push_back(inst);
  std::array<std::vector<LabeledInstance>, 3> val_pools;
  for (const LabeledInstance& inst : detail::split_instances(val_insts))
    val_pools[dim_index(inst.dimension)].push_back(inst);

  std::size_t n_train = 0;
  for (std::size_t di = 0; di < 3; ++di) {
    if (train_pools[di].empty() || val_pools[di].empty())
      throw Error(std::string("train: no instances for dimension ") +
                  std::string(to_string(static_cast<Dimension>(di))) + " in one of the splits");
    n_train += train_pools[di].size();
  }

  const std::vector<Tensor*> params = model.parameters();
  AdamW optimizer(params, cfg.learning_rate, cfg.weight_decay);
  Rng rng(mix_seed(cfg.seed, "train-multitask"));

  detail::EarlyStopper stopper(cfg.patience_checkpoints);
  std::vector<std::vector<double>> best_snapshot = detail::snapshot_params(params);
  TrainResult result;

  const std::size_t steps_per_epoch = (n_train + cfg.batch_size - 1) / cfg.batch_size;
  std::size_t step = 0;
  double loss_accum = 0.0;
  std::size_t loss_batches = 0;
  std::size_t last_eval_step = 0;
  bool stop = false;

  auto run_checkpoint = [&](std::size_t epoch) {
    const double acc = macro_accuracy(model, val_pools);
    const bool improved = stopper.offer(acc, step);
    if (improved) best_snapshot = detail::snapshot_params(params);
    result.history.push_back({step, epoch,
                              loss_batches ? loss_accum / static_cast<double>(loss_batches) : 0.0,
                              acc, improved});
    loss_accum = 0.0;
    loss_batches = 0;
    last_eval_step = step;
    if (stopper.exhausted()) {
      result.early_stopped = true;
      stop = true;
    }
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs && !stop; ++epoch) {
    for (std::size_t b = 0; b < steps_per_epoch && !stop; ++b) {
      std::vector<LabeledInstance> batch;
      batch.reserve(cfg.batch_size);
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        const std::size_t di = static_cast<std::size_t>(rng.below(3));
        const auto& pool = train_pools[di];
        batch.push_back(pool[rng.below(pool.size())]);
      }

      optimizer.zero_grad();
      const double loss = batch_loss_multitask_backward(model, batch, cfg.margin);
      if (std::isnan(loss))
        throw Error("train: loss diverged to NaN at step " + std::to_string(step + 1));
      optimizer.step();
      ++step;
      loss_accum += loss;
      ++loss_batches;

      if (step % cfg.eval_every_steps == 0) run_checkpoint(epoch);
    }
  }
  if (!stop && step != last_eval_step) run_checkpoint(cfg.max_epochs - 1);

  detail::restore_params(params, best_snapshot);
  result.best_val_accuracy = stopper.best_accuracy();
  result.best_step = stopper.best_step();
  result.total_steps = step;
  return result;
}

}  // namespace dialeval
