#include "cyclelife/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "cyclelife/rng.hpp"

namespace cyclelife::training {

SplitResult split(std::size_t n_records, const SplitSpec& spec) {
  if (n_records < 3) throw std::invalid_argument("split: need at least 3 records");

  std::size_t n_train, n_val;
  const std::size_t requested = static_cast<std::size_t>(spec.n_train) +
                                static_cast<std::size_t>(spec.n_val) +
                                static_cast<std::size_t>(spec.n_test);
  if (requested == n_records && spec.n_train > 0 && spec.n_val > 0 && spec.n_test > 0) {
    n_train = static_cast<std::size_t>(spec.n_train);
    n_val = static_cast<std::size_t>(spec.n_val);
  } else {
    const auto n = static_cast<double>(n_records);
    n_train = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.64 * n)));
    n_val = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.20 * n)));
    while (n_train + n_val + 1 > n_records) {  // leave at least one test battery
      if (n_train > 1)
        --n_train;
      else
        --n_val;
    }
  }

  std::vector<std::size_t> order(n_records);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(spec.seed);
  rng.shuffle(order);

  SplitResult out;
  out.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  out.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                 order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  out.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return out;
}

ad::Tensor bce_loss(ad::Tape& tape, const ad::Tensor& preds, std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("bce_loss: prediction/label count mismatch");
  if (preds.size() == 0) throw std::invalid_argument("bce_loss: empty batch");
  constexpr double kLo = 1e-7, kHi = 1.0 - 1e-7;
  const auto n = static_cast<double>(preds.size());

  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double p = std::clamp(preds.values[i], kLo, kHi);
    acc -= labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p);
  }
  acc /= n;

  if (preds.node < 0) return ad::Tensor::scalar(acc);
  const int np = preds.node;
  const std::vector<double> y(labels.begin(), labels.end());
  auto back = [np, y, n](ad::Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    const auto& pv = tp.values(np);
    auto& gp = tp.grad_buffer(np);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double p = pv[i];
      if (p <= kLo || p >= kHi) continue;  // clamped region has zero slope
      gp[i] += g * (p - y[i]) / (p * (1.0 - p)) / n;
    }
  };
  ad::Tensor out = ad::Tensor::scalar(acc);
  out.requires_grad = true;
  out.node = tape.record({1}, {acc}, {np}, back);
  return out;
}

ad::Tensor relative_abs_loss(ad::Tape& tape, const ad::Tensor& preds,
                             std::span<const double> labels) {
  if (preds.size() != labels.size())
    throw std::invalid_argument("relative_abs_loss: prediction/label count mismatch");
  if (preds.size() == 0) throw std::invalid_argument("relative_abs_loss: empty batch");
  for (double y : labels)
    if (y <= 0.0) throw std::invalid_argument("relative_abs_loss: labels must be positive");
  const auto n = static_cast<double>(preds.size());

  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    acc += std::abs(preds.values[i] - labels[i]) / labels[i];
  acc /= n;

  if (preds.node < 0) return ad::Tensor::scalar(acc);
  const int np = preds.node;
  const std::vector<double> y(labels.begin(), labels.end());
  auto back = [np, y, n](ad::Tape& tp, int self) {
    const double g = tp.grad_buffer(self)[0];
    const auto& pv = tp.values(np);
    auto& gp = tp.grad_buffer(np);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double e = pv[i] - y[i];
      const double sign = e > 0.0 ? 1.0 : (e < 0.0 ? -1.0 : 0.0);  // subgradient 0 at the kink
      gp[i] += g * sign / (y[i] * n);
    }
  };
  ad::Tensor out = ad::Tensor::scalar(acc);
  out.requires_grad = true;
  out.node = tape.record({1}, {acc}, {np}, back);
  return out;
}

double accuracy_pct(std::span<const double> preds, std::span<const double> labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("accuracy: empty or mismatched inputs");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double cls = preds[i] > 0.5 ? 1.0 : 0.0;
    if (cls == labels[i]) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(preds.size());
}

double mape_pct(std::span<const double> preds, std::span<const double> labels) {
  if (preds.empty() || preds.size() != labels.size())
    throw std::invalid_argument("mape: empty or mismatched inputs");
  double acc = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (labels[i] <= 0.0) throw std::invalid_argument("mape: labels must be positive");
    acc += std::abs(preds[i] - labels[i]) / labels[i];
  }
  return 100.0 * acc / static_cast<double>(preds.size());
}

double metric(std::span<const double> preds, std::span<const double> labels, data::Task task) {
  return task == data::Task::classify ? accuracy_pct(preds, labels) : mape_pct(preds, labels);
}

std::string format_metric(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", value);
  return buf;
}

double TargetTransform::forward(double y) const {
  return log10_space ? std::log10(y) : y / scale;
}

double TargetTransform::inverse(double t) const {
  return log10_space ? std::pow(10.0, t) : t * scale;
}

double clip_gradients(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& [name, g] : grads)
      for (double& v : g) v *= factor;
  }
  return norm;
}

void adam_step(std::map<std::string, ad::Tensor>& params, const GradMap& grads, AdamState& state,
               const TrainConfig& config) {
  ++state.step;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.step));
  for (auto& [name, p] : params) {
    const auto it = grads.find(name);
    if (it == grads.end()) continue;
    const auto& g = it->second;
    if (g.size() != p.size()) throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) m.assign(p.size(), 0.0);
    if (v.empty()) v.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.values[i] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

namespace {

std::vector<double> transformed_labels(const data::FeatureTensor& data, data::Task task,
                                       const TargetTransform& target) {
  std::vector<double> out(data.y);
  if (task == data::Task::predict)
    for (double& y : out) y = target.forward(y);
  return out;
}

ad::Tensor task_loss(ad::Tape& tape, const ad::Tensor& preds, std::span<const double> labels,
                     data::Task task) {
  return task == data::Task::classify ? bce_loss(tape, preds, labels)
                                      : relative_abs_loss(tape, preds, labels);
}

}  // namespace

EvalResult evaluate(nn::Model& model, const data::FeatureTensor& features, data::Task task,
                    const TargetTransform& target) {
  if (features.n_batteries == 0) throw std::invalid_argument("evaluate: empty split");
  ad::Tape tape;
  Rng rng(0);  // dropout is off; never drawn from
  for (auto& [name, t] : model.params) t.node = -1;
  const ad::Tensor preds =
      nn::forward_batch(tape, model, features.x, features.n_batteries, false, rng);
  const std::vector<double> labels = transformed_labels(features, task, target);
  const ad::Tensor loss = task_loss(tape, preds, labels, task);

  EvalResult out;
  out.loss = loss.values[0];
  out.predictions.resize(features.n_batteries);
  for (std::size_t i = 0; i < features.n_batteries; ++i)
    out.predictions[i] =
        task == data::Task::predict ? target.inverse(preds.values[i]) : preds.values[i];
  out.metric = metric(out.predictions, features.y, task);
  return out;
}

RunReport train(nn::Model& model, const data::FeatureTensor& train_data,
                const data::FeatureTensor& val_data, const data::FeatureTensor* test_data,
                const TrainConfig& config, data::Task task) {
  if (config.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (config.learning_rate <= 0.0) throw std::invalid_argument("train: learning rate must be positive");
  if (train_data.n_batteries == 0) throw std::invalid_argument("train: empty training split");
  if (val_data.n_batteries == 0) throw std::invalid_argument("train: empty validation split");

  RunReport report;
  if (task == data::Task::predict) {
    report.target.log10_space = config.log_target;
    if (config.scale_target && !config.log_target) {
      double mean_y = 0.0;
      for (double y : train_data.y) mean_y += y;
      report.target.scale = mean_y / static_cast<double>(train_data.n_batteries);
    }
  }

  const std::vector<double> train_labels = transformed_labels(train_data, task, report.target);
  const std::size_t n = train_data.n_batteries;

  Rng rng(config.seed);
  AdamState adam;
  ad::Tape tape;
  GradMap grads;

  double best_val = std::numeric_limits<double>::infinity();
  std::map<std::string, std::vector<double>> best_params;
  for (const auto& [name, p] : model.params) best_params[name] = p.values;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t batch =
      config.batch_size > 0 ? std::min<std::size_t>(static_cast<std::size_t>(config.batch_size), n) : n;

  std::vector<double> batch_x;
  std::vector<double> batch_y;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    if (batch < n) rng.shuffle(order);
    double opt_loss = 0.0;
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t count = std::min(batch, n - start);
      batch_x.clear();
      batch_y.clear();
      for (std::size_t i = 0; i < count; ++i) {
        const std::size_t b = order[start + i];
        const auto s = train_data.sequence(b);
        batch_x.insert(batch_x.end(), s.begin(), s.end());
        batch_y.push_back(train_labels[b]);
      }
      tape.reset();
      const ad::Tensor preds = nn::forward_batch(tape, model, batch_x, count, true, rng);
      const ad::Tensor loss = task_loss(tape, preds, batch_y, task);
      opt_loss += loss.values[0] * static_cast<double>(count);
      if (!std::isfinite(loss.values[0])) break;
      tape.backward(loss);
      grads.clear();
      for (const auto& [name, p] : model.params) grads[name] = tape.grad(p);
      clip_gradients(grads, config.grad_clip_norm);
      adam_step(model.params, grads, adam, config);
    }
    opt_loss /= static_cast<double>(n);
    if (!std::isfinite(opt_loss)) {
      report.diverged = true;
      break;
    }

    // History entries are dropout-off evaluations of the updated model, so
    // the last entry matches a fresh evaluate() call exactly.
    const EvalResult on_train = evaluate(model, train_data, task, report.target);
    const EvalResult on_val = evaluate(model, val_data, task, report.target);
    report.history.push_back({on_train.loss, on_val.loss, on_train.metric, on_val.metric});
    if (on_val.loss < best_val) {
      best_val = on_val.loss;
      report.best_epoch = epoch;
      for (const auto& [name, p] : model.params) best_params[name] = p.values;
    }
    if (config.early_stop_patience > 0 && epoch - report.best_epoch >= config.early_stop_patience)
      break;
  }

  for (auto& [name, p] : model.params) {
    p.values = best_params[name];
    p.node = -1;
  }

  report.final_train = evaluate(model, train_data, task, report.target);
  report.final_val = evaluate(model, val_data, task, report.target);
  if (test_data && test_data->n_batteries > 0) {
    report.final_test = evaluate(model, *test_data, task, report.target);
    report.has_test = true;
  }
  return report;
}

}  // namespace cyclelife::training
