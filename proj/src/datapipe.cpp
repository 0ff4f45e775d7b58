#include "cyclelife/datapipe.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cyclelife::data {

const std::array<std::string, kAttributeCount>& attribute_names() {
  static const std::array<std::string, kAttributeCount> names = [] {
    std::array<std::string, kAttributeCount> out;
    std::size_t i = 0;
    for (const char* red : kReductions)
      for (const char* var : kVariables) out[i++] = std::string(red) + "(" + var + ")";
    return out;
  }();
  return names;
}

std::size_t attribute_index(const std::string& name) {
  const auto& names = attribute_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown attribute: " + name);
  return static_cast<std::size_t>(it - names.begin());
}

namespace {

double median_of(std::vector<double>& scratch) {
  const std::size_t n = scratch.size();
  const std::size_t mid = n / 2;
  std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid), scratch.end());
  double m = scratch[mid];
  if (n % 2 == 0) {
    const double lo = *std::max_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (lo + m);
  }
  return m;
}

struct Moments {
  double mean, var, min, max;
};

Moments moments(std::span<const double> s, const char* what) {
  if (s.empty()) throw std::invalid_argument(std::string("reduce: empty series ") + what);
  double mn = s[0], mx = s[0], acc = 0.0;
  for (double v : s) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
    acc += v;
  }
  const double mean = acc / static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.size());
  return {mean, var, mn, mx};
}

double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;  // constant input: correlation defined as 0
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace

std::vector<double> remove_outliers(std::span<const double> series, int window, double k) {
  if (window < 3 || window % 2 == 0)
    throw std::invalid_argument("remove_outliers: window must be odd and >= 3");
  if (k <= 0.0) throw std::invalid_argument("remove_outliers: k must be positive");

  std::vector<double> out(series.begin(), series.end());
  const std::size_t n = out.size();
  if (n < static_cast<std::size_t>(window)) return out;

  const std::size_t half = static_cast<std::size_t>(window) / 2;
  std::vector<double> win, dev;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    win.assign(series.begin() + static_cast<std::ptrdiff_t>(lo),
               series.begin() + static_cast<std::ptrdiff_t>(hi));
    const double med = median_of(win);
    dev.resize(win.size());
    for (std::size_t j = 0; j < win.size(); ++j)
      dev[j] = std::abs(series[lo + j] - med);
    const double mad = median_of(dev);
    const double tol = std::max(k * 1.4826 * mad, 1e-9);
    if (std::abs(series[i] - med) > tol) out[i] = med;
  }
  return out;
}

BatteryRecord clean_record(const BatteryRecord& record, int window, double k) {
  BatteryRecord out = record;
  for (auto& c : out.cycles) {
    c.T = remove_outliers(c.T, window, k);
    c.V = remove_outliers(c.V, window, k);
    c.Qd = remove_outliers(c.Qd, window, k);
    c.Qd_lin = remove_outliers(c.Qd_lin, window, k);
    c.Td_lin = remove_outliers(c.Td_lin, window, k);
    c.dQdV = remove_outliers(c.dQdV, window, k);
  }
  return out;
}

std::vector<double> linear_resample(std::span<const double> series, std::size_t n) {
  if (series.empty()) throw std::invalid_argument("linear_resample: empty series");
  if (n == 0) throw std::invalid_argument("linear_resample: zero target length");
  std::vector<double> out(n);
  if (series.size() == 1 || n == 1) {
    std::fill(out.begin(), out.end(), series[0]);
    return out;
  }
  const double step = static_cast<double>(series.size() - 1) / static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * step;
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, series.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    out[i] = series[lo] + frac * (series[hi] - series[lo]);
  }
  return out;
}

std::array<double, kAttributeCount> reduce_cycle(const CycleData& cycle) {
  const std::array<Moments, 6> m = {moments(cycle.T, "T"),         moments(cycle.V, "V"),
                                    moments(cycle.Qd, "Qd"),       moments(cycle.Qd_lin, "Qd_lin"),
                                    moments(cycle.Td_lin, "Td_lin"), moments(cycle.dQdV, "dQdV")};
  std::array<double, kAttributeCount> out{};
  for (std::size_t v = 0; v < 6; ++v) {
    out[0 * 6 + v] = m[v].mean;
    out[1 * 6 + v] = m[v].var;
    out[2 * 6 + v] = m[v].min;
    out[3 * 6 + v] = m[v].max;
  }
  return out;
}

AttributeMatrix reduce_record(const BatteryRecord& record) {
  AttributeMatrix out;
  out.battery_id = record.id;
  out.n_cycles = record.cycles.size();
  out.values.reserve(out.n_cycles * kAttributeCount);
  for (const auto& c : record.cycles) {
    const auto row = reduce_cycle(c);
    out.values.insert(out.values.end(), row.begin(), row.end());
  }
  return out;
}

std::vector<RankedAttribute> rank_attributes(const std::vector<BatteryRecord>& records) {
  if (records.size() < 3)
    throw std::invalid_argument("rank_attributes: need at least 3 batteries, got " +
                                std::to_string(records.size()));

  std::vector<double> log_life;
  log_life.reserve(records.size());
  std::vector<std::array<double, kAttributeCount>> delta(records.size());
  for (std::size_t b = 0; b < records.size(); ++b) {
    const auto& rec = records[b];
    if (rec.cycles.size() < 100)
      throw std::invalid_argument("rank_attributes: battery " + rec.id + " has fewer than 100 cycles");
    log_life.push_back(std::log10(static_cast<double>(effective_cycle_life(rec))));
    const auto at10 = reduce_cycle(rec.cycles[9]);
    const auto at100 = reduce_cycle(rec.cycles[99]);
    for (std::size_t a = 0; a < kAttributeCount; ++a) delta[b][a] = at100[a] - at10[a];
  }

  std::vector<RankedAttribute> out(kAttributeCount);
  std::vector<double> column(records.size());
  for (std::size_t a = 0; a < kAttributeCount; ++a) {
    for (std::size_t b = 0; b < records.size(); ++b) column[b] = delta[b][a];
    out[a] = {attribute_names()[a], std::abs(pearson(column, log_life))};
  }

  std::vector<std::size_t> order(kAttributeCount);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    if (out[i].score != out[j].score) return out[i].score > out[j].score;
    return i < j;  // fixed attribute order breaks ties
  });
  std::vector<RankedAttribute> sorted;
  sorted.reserve(kAttributeCount);
  for (std::size_t i : order) sorted.push_back(out[i]);
  return sorted;
}

std::vector<std::string> select_features() {
  return {
      // top tier
      "mean(Qd_lin)", "var(Qd_lin)", "var(dQdV)",
      // middle tier
      "max(T)", "mean(dQdV)", "mean(Qd)", "max(Qd_lin)", "min(T)", "var(T)", "mean(Td_lin)",
      "max(Qd)", "mean(T)", "max(Td_lin)", "var(Td_lin)", "min(Td_lin)"};
}

std::vector<std::string> select_features(const std::vector<RankedAttribute>& ranking,
                                         std::size_t top_k) {
  if (top_k == 0 || top_k > ranking.size())
    throw std::invalid_argument("select_features: top_k out of range");
  std::vector<std::string> out;
  out.reserve(top_k);
  for (std::size_t i = 0; i < top_k; ++i) out.push_back(ranking[i].name);
  return out;
}

int compute_cycle_life(const BatteryRecord& record) {
  if (record.nominal_capacity <= 0.0)
    throw std::invalid_argument("compute_cycle_life: battery " + record.id +
                                " has non-positive nominal capacity");
  if (record.cycles.empty())
    throw std::invalid_argument("compute_cycle_life: battery " + record.id + " has no cycles");
  const double threshold = 0.8 * record.nominal_capacity;
  for (std::size_t n = 0; n < record.cycles.size(); ++n) {
    const auto& qd = record.cycles[n].Qd;
    if (qd.empty())
      throw std::invalid_argument("compute_cycle_life: battery " + record.id + " has an empty Qd series");
    if (*std::max_element(qd.begin(), qd.end()) < threshold) return static_cast<int>(n) + 1;
  }
  throw std::runtime_error("compute_cycle_life: censored record " + record.id +
                           " never fades below 80% of nominal capacity");
}

int effective_cycle_life(const BatteryRecord& record) {
  if (record.cycle_life) return *record.cycle_life;
  return compute_cycle_life(record);
}

std::vector<double> make_labels(const std::vector<BatteryRecord>& records, Task task,
                                int threshold) {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    const int life = effective_cycle_life(rec);
    out.push_back(task == Task::classify ? (life > threshold ? 1.0 : 0.0)
                                         : static_cast<double>(life));
  }
  return out;
}

FeatureTensor build_features(const std::vector<BatteryRecord>& records, Task task,
                             const std::vector<std::string>& selected, const NormStats* stats,
                             int threshold) {
  if (selected.empty()) throw std::invalid_argument("build_features: no attributes selected");
  const std::size_t t_task =
      static_cast<std::size_t>(task == Task::classify ? kClassifyCycles : kPredictCycles);

  std::vector<std::size_t> attr_idx;
  attr_idx.reserve(selected.size());
  for (const auto& name : selected) attr_idx.push_back(attribute_index(name));

  FeatureTensor out;
  out.n_batteries = records.size();
  out.seq_len = t_task;
  out.n_features = selected.size();
  out.feature_names = selected;
  out.x.reserve(records.size() * t_task * selected.size());
  for (const auto& rec : records) {
    if (rec.cycles.size() < t_task)
      throw std::invalid_argument("build_features: battery " + rec.id + " has " +
                                  std::to_string(rec.cycles.size()) + " cycles, needs " +
                                  std::to_string(t_task));
    out.battery_ids.push_back(rec.id);
    for (std::size_t c = 0; c < t_task; ++c) {
      const auto row = reduce_cycle(rec.cycles[c]);
      for (std::size_t a : attr_idx) out.x.push_back(row[a]);
    }
  }
  out.y = make_labels(records, task, threshold);

  const std::size_t f = out.n_features;
  if (stats) {
    if (stats->mean.size() != f || stats->stddev.size() != f)
      throw std::invalid_argument("build_features: stats dimension mismatch");
    out.stats = *stats;
  } else {
    out.stats.mean.assign(f, 0.0);
    out.stats.stddev.assign(f, 0.0);
    const std::size_t rows = out.n_batteries * t_task;
    if (rows == 0) throw std::invalid_argument("build_features: empty corpus");
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) out.stats.mean[j] += out.x[r * f + j];
    for (auto& m : out.stats.mean) m /= static_cast<double>(rows);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < f; ++j) {
        const double d = out.x[r * f + j] - out.stats.mean[j];
        out.stats.stddev[j] += d * d;
      }
    for (auto& s : out.stats.stddev) s = std::sqrt(s / static_cast<double>(rows));
  }

  const std::size_t rows = out.n_batteries * t_task;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      double& v = out.x[r * f + j];
      v = out.stats.stddev[j] > 1e-12 ? (v - out.stats.mean[j]) / out.stats.stddev[j] : 0.0;
    }
  return out;
}

}  // namespace cyclelife::data
