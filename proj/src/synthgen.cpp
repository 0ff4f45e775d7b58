#include "cyclelife/synthgen.hpp"

#include <cmath>
#include <stdexcept>

#include "cyclelife/rng.hpp"

namespace cyclelife::synth {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Signal placement mirrors the tier structure the attribute ranking is
// expected to find: statistics of Qd_lin and dQdV carry the cycle-life
// signal, temperature carries a weaker (jittered) one, and voltage
// carries none at all.
constexpr double kQdLinFadeSlope = 0.18;  // linear fade of Qd_lin, 1/L-proportional attributes
constexpr double kQdLinFadeCurve = 0.02;  // mild curvature keeps Qd_lin scores off the dQdV tie
constexpr double kDqdvBase = -0.3;        // constant dQdV offset
constexpr double kDqdvSpike = 1.3;        // fixed end-point spikes pin min/max of dQdV
constexpr double kDqdvVarOffset = 24.0;   // frail cells start with a wider dQdV spread
constexpr double kDqdvMeanSlope = 0.4;    // mean(dQdV) drifts down on the same 1/life law
constexpr double kTempMean = 30.0;        // deg C
constexpr double kTempAmpBase = 3.0;
constexpr double kTempAmpLifeSlope = 2.0;  // amplitude grows with log-life
constexpr double kTempAmpJitter = 0.18;     // per-battery spread decorrelates the signal
constexpr double kTempAmpCycleSlope = 0.3;
constexpr double kVoltTop = 3.5;
constexpr double kVoltBottom = 2.0;

struct SeriesScales {
  double qd, v, t, dqdv;
};

}  // namespace

void SynthConfig::validate() const {
  if (n_batteries < 1) throw std::invalid_argument("synth: n_batteries must be >= 1");
  if (life_min < 150.0) throw std::invalid_argument("synth: life_min must be >= 150 cycles");
  if (life_max <= life_min) throw std::invalid_argument("synth: life_max must exceed life_min");
  if (nominal_capacity <= 0.0) throw std::invalid_argument("synth: nominal capacity must be positive");
  if (knee_sharpness <= 1.0) throw std::invalid_argument("synth: knee_sharpness must be > 1");
  if (noise_sigma < 0.0) throw std::invalid_argument("synth: noise_sigma must be >= 0");
  if (points_per_cycle < 8 || points_per_cycle % 2 != 0)
    throw std::invalid_argument("synth: points_per_cycle must be even and >= 8");
  if (max_stored_cycles < 0) throw std::invalid_argument("synth: max_stored_cycles must be >= 0");
}

double fade_multiplier(double cycle, double life, double knee_sharpness) {
  return 1.0 - 0.2 * std::pow(cycle / life, knee_sharpness);
}

data::BatteryRecord generate_battery(const SynthConfig& config, int index, double life,
                                     const std::string& id) {
  config.validate();
  if (life < config.life_min || life > config.life_max)
    throw std::invalid_argument("synth: planted life outside configured range");

  Rng rng = Rng(config.seed).fork(static_cast<std::uint64_t>(index));
  // Battery-level draws first so the per-cycle noise stream is stable.
  const double amp_jitter = rng.gauss();
  const double phase = rng.uniform() * 2.0 * kPi;

  const double life01 = std::log(life / config.life_min) / std::log(config.life_max / config.life_min);
  const double amp_base = kTempAmpBase + kTempAmpLifeSlope * life01 + kTempAmpJitter * amp_jitter;
  const double cap = config.nominal_capacity;
  const int p = config.points_per_cycle;
  const int dead_cycle = static_cast<int>(std::floor(life)) + 1;
  const int stored =
      config.max_stored_cycles == 0 ? dead_cycle : std::min(config.max_stored_cycles, dead_cycle);
  const SeriesScales noise = {cap * config.noise_sigma, 1.5 * config.noise_sigma,
                              3.0 * config.noise_sigma, 0.3 * config.noise_sigma};

  data::BatteryRecord rec;
  rec.id = id;
  rec.nominal_capacity = cap;
  rec.cycle_life = dead_cycle;
  rec.cycles.reserve(static_cast<std::size_t>(stored));

  for (int n = 1; n <= stored; ++n) {
    const double frac = static_cast<double>(n) / life;
    const double m = fade_multiplier(n, life, config.knee_sharpness);
    const double amp = amp_base * (1.0 + kTempAmpCycleSlope * frac);
    // dQdV spread: a 1/life-proportional baseline plus linear growth in the
    // cycle fraction, so var(dQdV) reads the planted life at any cycle and
    // its change between two cycles is exactly proportional to 1/life.
    const double dqdv_sd = std::sqrt((kDqdvVarOffset + n) / life);
    const double dqdv_mean = kDqdvBase - kDqdvMeanSlope * (kDqdvVarOffset + n) / life;

    data::CycleData c;
    c.T.resize(static_cast<std::size_t>(p));
    c.V.resize(static_cast<std::size_t>(p));
    c.Qd.resize(static_cast<std::size_t>(p));
    c.Qd_lin.resize(static_cast<std::size_t>(p));
    c.Td_lin.resize(static_cast<std::size_t>(p));
    c.dQdV.resize(static_cast<std::size_t>(p));

    for (int i = 0; i < p; ++i) {
      const double u = static_cast<double>(i) / static_cast<double>(p - 1);
      const double temp = kTempMean + amp * std::sin(2.0 * kPi * u + phase);
      c.T[static_cast<std::size_t>(i)] = temp + noise.t * rng.gauss();
      c.V[static_cast<std::size_t>(i)] =
          kVoltTop - (kVoltTop - kVoltBottom) * u + noise.v * rng.gauss();
      c.Qd[static_cast<std::size_t>(i)] = m * cap * u + noise.qd * rng.gauss();
      // Degradation shows up as a mid-curve sag: zero at both ends of the
      // ramp, so min and max of Qd_lin stay life-independent while its mean
      // and variance track the fade.
      const double sag = kQdLinFadeSlope * frac + kQdLinFadeCurve * frac * frac;
      c.Qd_lin[static_cast<std::size_t>(i)] =
          cap * u * (1.0 - 2.0 * sag * (1.0 - u)) + noise.qd * rng.gauss();
      c.Td_lin[static_cast<std::size_t>(i)] = temp + noise.t * rng.gauss();
      // Zero-mean oscillation whose variance scales as n/life, plus fixed
      // spikes at the two zero crossings so min/max stay life-independent.
      const double w = std::sqrt(2.0) * std::sin(2.0 * kPi * static_cast<double>(i) / p);
      double dqdv;
      if (i == 0)
        dqdv = kDqdvBase + kDqdvSpike;  // spike points stay at fixed levels,
      else if (i == p / 2)
        dqdv = kDqdvBase - kDqdvSpike;  // so min/max carry no life signal
      else
        dqdv = dqdv_mean + dqdv_sd * w;
      c.dQdV[static_cast<std::size_t>(i)] = dqdv + noise.dqdv * rng.gauss();
    }
    rec.cycles.push_back(std::move(c));
  }
  return rec;
}

std::vector<data::BatteryRecord> generate_corpus(const SynthConfig& config) {
  config.validate();
  Rng master(config.seed);
  std::vector<data::BatteryRecord> out;
  out.reserve(static_cast<std::size_t>(config.n_batteries));
  for (int b = 0; b < config.n_batteries; ++b) {
    // The life draw comes from its own stream so it matches the battery's
    // noise stream regardless of how many batteries precede it.
    Rng life_rng = master.fork(0x10000ULL + static_cast<std::uint64_t>(b));
    const double life =
        std::exp(life_rng.uniform(std::log(config.life_min), std::log(config.life_max)));
    std::string id = "b";
    const std::string num = std::to_string(b);
    id += std::string(3 - std::min<std::size_t>(3, num.size()), '0') + num;
    out.push_back(generate_battery(config, b, life, id));
  }
  return out;
}

std::vector<data::BatteryRecord> golden_corpus() {
  SynthConfig config;
  config.n_batteries = 8;
  config.noise_sigma = 0.005;
  config.seed = 11;
  const double lives[] = {1450.0, 1120.0, 900.0, 760.0, 640.0, 520.0, 430.0, 360.0};
  std::vector<data::BatteryRecord> out;
  out.reserve(8);
  for (int b = 0; b < 8; ++b)
    out.push_back(generate_battery(config, b, lives[b], "g00" + std::to_string(b)));
  return out;
}

}  // namespace cyclelife::synth
