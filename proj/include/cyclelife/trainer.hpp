#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cyclelife/datapipe.hpp"
#include "cyclelife/model.hpp"

namespace cyclelife::training {

// Random partition sizes. The explicit sizes apply when they sum to the
// corpus size; any other corpus is split 64% / 20% / 16% (rounded, each
// part at least one battery).
struct SplitSpec {
  int n_train = 79;
  int n_val = 25;
  int n_test = 20;
  std::uint64_t seed = 0;
};

struct SplitResult {
  std::vector<std::size_t> train, val, test;
};

// Seeded shuffle partition: disjoint, exhaustive, deterministic per seed.
SplitResult split(std::size_t n_records, const SplitSpec& spec);

// Binary cross-entropy over a batch of sigmoid outputs, probabilities
// clamped to [1e-7, 1 - 1e-7].
ad::Tensor bce_loss(ad::Tape& tape, const ad::Tensor& preds, std::span<const double> labels);

// Mean relative absolute error |pred - y| / y: the training objective for
// the regressor (the reported MAPE is this value times 100). Labels must
// be strictly positive.
ad::Tensor relative_abs_loss(ad::Tape& tape, const ad::Tensor& preds,
                             std::span<const double> labels);

double accuracy_pct(std::span<const double> preds, std::span<const double> labels);
double mape_pct(std::span<const double> preds, std::span<const double> labels);
double metric(std::span<const double> preds, std::span<const double> labels, data::Task task);

// Metric formatting used by every human-facing report: one decimal place,
// so 19/20 correct prints as "95.0".
std::string format_metric(double value);

// Regression targets are optionally trained in a normalized space; the
// relative loss is scale-invariant, so this only conditions the optimizer.
struct TargetTransform {
  bool log10_space = false;
  double scale = 1.0;

  double forward(double y) const;
  double inverse(double t) const;
};

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 1e-3;
  int batch_size = 0;  // 0 = full batch
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  int early_stop_patience = 0;   // 0 = off; counts epochs since the best one
  double grad_clip_norm = 5.0;   // <= 0 disables clipping
  bool log_target = false;       // regress on log10(cycle life)
  bool scale_target = true;      // normalize targets by the training mean
};

using GradMap = std::map<std::string, std::vector<double>>;

struct AdamState {
  std::size_t step = 0;
  GradMap m, v;
};

// Scales all gradients to the given global L2 norm when they exceed it;
// returns the pre-clip norm.
double clip_gradients(GradMap& grads, double max_norm);

// One bias-corrected Adam update, in place.
void adam_step(std::map<std::string, ad::Tensor>& params, const GradMap& grads, AdamState& state,
               const TrainConfig& config);

struct EvalResult {
  double loss = 0.0;
  double metric = 0.0;
  std::vector<double> predictions;  // raw-space, one per battery
};

struct EpochStats {
  double train_loss, val_loss, train_metric, val_metric;
};

struct RunReport {
  std::vector<EpochStats> history;  // one entry per epoch actually run
  int best_epoch = 0;               // 1-based epoch with minimum validation loss
  bool diverged = false;
  TargetTransform target;
  EvalResult final_train, final_val, final_test;
  bool has_test = false;
};

// Deterministic forward pass with dropout disabled. Predictions are
// mapped back to raw space before the metric is computed.
EvalResult evaluate(nn::Model& model, const data::FeatureTensor& features, data::Task task,
                    const TargetTransform& target = {});

// Full training loop: Adam on the task loss, per-epoch train/val history
// evaluated with dropout off, parameters restored from the epoch with the
// lowest validation loss. A non-finite training loss aborts the run with
// the history truncated at the last finite epoch.
RunReport train(nn::Model& model, const data::FeatureTensor& train_data,
                const data::FeatureTensor& val_data, const data::FeatureTensor* test_data,
                const TrainConfig& config, data::Task task);

}  // namespace cyclelife::training
