#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cyclelife::data {

// Per-cycle telemetry. The raw series (T, V, Qd, dQdV) may have any
// positive length; the interpolated series share one fixed grid.
struct CycleData {
  std::vector<double> T;       // temperature, deg C
  std::vector<double> V;       // voltage, V
  std::vector<double> Qd;      // discharge capacity, Ah
  std::vector<double> Qd_lin;  // discharge capacity on the fixed grid
  std::vector<double> Td_lin;  // temperature on the fixed grid
  std::vector<double> dQdV;    // differential capacity, Ah/V
};

struct BatteryRecord {
  std::string id;
  double nominal_capacity = 0.0;        // Ah
  std::vector<CycleData> cycles;        // ordered, cycle 1 first
  std::optional<int> cycle_life;        // ground truth, if known
};

inline constexpr std::array<const char*, 6> kVariables = {"T", "V", "Qd", "Qd_lin", "Td_lin", "dQdV"};
inline constexpr std::array<const char*, 4> kReductions = {"mean", "var", "min", "max"};
inline constexpr std::size_t kAttributeCount = 24;

// Fixed attribute order: reductions outer, variables inner
// ("mean(T)", "mean(V)", ..., "max(dQdV)").
const std::array<std::string, kAttributeCount>& attribute_names();
std::size_t attribute_index(const std::string& name);  // throws on unknown name

struct AttributeMatrix {
  std::string battery_id;
  std::size_t n_cycles = 0;
  std::vector<double> values;  // n_cycles x 24, row-major

  double at(std::size_t cycle, std::size_t attr) const { return values[cycle * kAttributeCount + attr]; }
};

// Replaces points farther than k * (1.4826 * MAD) from the rolling median
// (window centered, truncated at the edges) by that median. A zero MAD
// falls back to an absolute tolerance of 1e-9. Series shorter than the
// window are returned unchanged.
std::vector<double> remove_outliers(std::span<const double> series, int window = 21, double k = 5.0);

// Outlier removal applied to every series of every cycle.
BatteryRecord clean_record(const BatteryRecord& record, int window = 21, double k = 5.0);

// Linear interpolation of `series` onto a uniform grid of `n` points
// spanning the same index range.
std::vector<double> linear_resample(std::span<const double> series, std::size_t n);

// The 24 per-cycle attributes, in attribute_names() order. Variance is
// population variance (divide by n). Errors on an empty series.
std::array<double, kAttributeCount> reduce_cycle(const CycleData& cycle);

AttributeMatrix reduce_record(const BatteryRecord& record);

struct RankedAttribute {
  std::string name;
  double score = 0.0;  // |Pearson| of attr(100)-attr(10) vs log10 cycle life
};

// Ranks all 24 attributes by how strongly their change between cycle 100
// and cycle 10 tracks log10 cycle life across batteries. Sorted by score
// descending, ties broken by the fixed attribute order. Requires >= 3
// batteries, each with >= 100 cycles and a known cycle life.
std::vector<RankedAttribute> rank_attributes(const std::vector<BatteryRecord>& records);

// The default model inputs: the 3 top-tier and 12 middle-tier attributes.
std::vector<std::string> select_features();
// First `top_k` names of a computed ranking.
std::vector<std::string> select_features(const std::vector<RankedAttribute>& ranking, std::size_t top_k);

// First cycle whose peak discharge capacity drops below 80% of nominal.
// Throws "censored record" if the battery never fades below the threshold.
int compute_cycle_life(const BatteryRecord& record);

// Stated cycle life if present, otherwise computed from the fade curve.
int effective_cycle_life(const BatteryRecord& record);

enum class Task { classify, predict };

inline constexpr int kClassifyCycles = 5;
inline constexpr int kPredictCycles = 100;
inline constexpr int kDefaultThreshold = 700;

// Classification: 1 iff cycle life strictly exceeds the threshold.
// Prediction: the cycle life as a real number.
std::vector<double> make_labels(const std::vector<BatteryRecord>& records, Task task,
                                int threshold = kDefaultThreshold);

struct NormStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population std; 0 marks a constant feature
};

struct FeatureTensor {
  std::size_t n_batteries = 0;
  std::size_t seq_len = 0;
  std::size_t n_features = 0;
  std::vector<double> x;  // [battery][cycle][feature]
  std::vector<double> y;
  NormStats stats;
  std::vector<std::string> feature_names;
  std::vector<std::string> battery_ids;

  std::span<const double> sequence(std::size_t b) const {
    return {x.data() + b * seq_len * n_features, seq_len * n_features};
  }
};

// Model inputs: the selected attributes of the first 5 (classification) or
// 100 (prediction) cycles, z-scored per feature. Stats are computed here
// when absent (training split) and applied as-is when given; constant
// features map to 0.
FeatureTensor build_features(const std::vector<BatteryRecord>& records, Task task,
                             const std::vector<std::string>& selected,
                             const NormStats* stats = nullptr,
                             int threshold = kDefaultThreshold);

// Reads a cyclelife-v1 corpus directory (see the format notes in the
// README). A directory without a manifest and without battery files loads
// as an empty corpus.
std::vector<BatteryRecord> load_dataset(const std::string& dir);

}  // namespace cyclelife::data
