#pragma once

#include <cstdint>
#include <vector>

#include "cyclelife/datapipe.hpp"

namespace cyclelife::synth {

struct SynthConfig {
  int n_batteries = 124;
  double life_min = 350.0;   // cycles; must exceed the 100 input cycles comfortably
  double life_max = 1400.0;  // geometric midpoint of the default range is 700
  double nominal_capacity = 1.1;
  double knee_sharpness = 2.0;  // fade exponent, > 1
  double noise_sigma = 0.0;     // relative noise applied to every series
  int points_per_cycle = 64;    // even, >= 8
  int max_stored_cycles = 110;  // 0 = store through end of life
  std::uint64_t seed = 0;

  void validate() const;
};

// Capacity multiplier after n cycles of a battery with planted life L:
// 1 - 0.2 * (n / L)^k, so the 80%-of-nominal crossing lands exactly at L.
double fade_multiplier(double cycle, double life, double knee_sharpness);

// One battery with a planted (real-valued) cycle life. Deterministic given
// (config.seed, index); the record's cycle_life field is the first integer
// cycle past the 80% crossing, floor(life) + 1.
data::BatteryRecord generate_battery(const SynthConfig& config, int index, double life,
                                     const std::string& id);

// Batteries with lives drawn log-uniformly from the configured range.
// Pure function of the config; per-battery RNG streams make the output
// independent of generation order.
std::vector<data::BatteryRecord> generate_corpus(const SynthConfig& config);

// Fixed 8-battery fixture: four lives above the 700-cycle threshold, four
// below, mild noise, 110 stored cycles. Used by smoke and overfit tests.
std::vector<data::BatteryRecord> golden_corpus();

}  // namespace cyclelife::synth
