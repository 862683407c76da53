#pragma once

// Synthetic bearing faults: periodic impact trains with cosine-sum amplitude
// modulation injected into real healthy recordings.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "synfault/dsp.hpp"
#include "synfault/error.hpp"
#include "synfault/filter.hpp"
#include "synfault/random.hpp"
#include "synfault/types.hpp"

namespace synfault::siggen {

struct BearingGeometry {
  int n_elements = 9;
  double ball_diameter_mm = 7.94;
  double pitch_diameter_mm = 39.04;
  double contact_angle_rad = 0.0;

  void validate() const {
    detail::require(n_elements >= 3, "bearing needs at least 3 rolling elements");
    detail::require(ball_diameter_mm > 0.0 && ball_diameter_mm < pitch_diameter_mm,
                    "bearing geometry requires 0 < ball diameter < pitch diameter");
    detail::require(contact_angle_rad >= 0.0 && contact_angle_rad < std::numbers::pi / 2.0,
                    "contact angle must lie in [0, pi/2)");
  }

  /// SKF 6205-2RS JEM, the CWRU drive-end bearing.
  static BearingGeometry cwru_drive_end() { return {9, 7.94, 39.04, 0.0}; }
};

struct DefectFrequencies {
  double bpfo = 0.0;
  double bpfi = 0.0;
  double bsf = 0.0;
  double ftf = 0.0;
};

/// Standard kinematic defect frequencies (Hz) for shaft rotation `shaft_hz`.
inline DefectFrequencies defect_frequencies(const BearingGeometry& g, double shaft_hz) {
  g.validate();
  detail::require(std::isfinite(shaft_hz) && shaft_hz > 0.0, "shaft frequency must be positive");
  const double r = g.ball_diameter_mm / g.pitch_diameter_mm * std::cos(g.contact_angle_rad);
  const double n = static_cast<double>(g.n_elements);
  return {
      .bpfo = 0.5 * n * shaft_hz * (1.0 - r),
      .bpfi = 0.5 * n * shaft_hz * (1.0 + r),
      .bsf = g.pitch_diameter_mm / (2.0 * g.ball_diameter_mm) * shaft_hz * (1.0 - r * r),
      .ftf = 0.5 * shaft_hz * (1.0 - r),
  };
}

/// Modulation period sentinel for a stationary (unmodulated) defect.
inline constexpr double kUnmodulated = std::numeric_limits<double>::infinity();

/// Expert-knowledge parameterization of one synthetic fault. Periods left empty
/// are derived from the bearing kinematics when the fault is synthesized.
struct DefectSpec {
  FaultClass fault_class = FaultClass::Healthy;
  std::optional<double> impact_period_s;
  std::optional<double> modulation_period_s;
  std::vector<double> sideband_amplitudes = {1.0, 0.76, 0.38, 0.11, 0.05};
  Interval beta_range{0.25, 2.0};
  double jitter_sigma = 0.1;
  double duty_fraction = 0.05;
  /// Pass-band of the single-impact filter as fractions of the sample rate.
  Interval pulse_band{0.02, 0.45};
  /// Multiplies the kinematic defect frequency when periods are derived.
  double frequency_scale = 1.0;

  void validate() const {
    detail::require(!sideband_amplitudes.empty(), "sideband amplitude list must not be empty");
    for (double a : sideband_amplitudes) detail::require(a >= 0.0 && std::isfinite(a), "sideband amplitudes must be nonnegative");
    detail::require(beta_range.lo <= beta_range.hi && beta_range.lo >= 0.0, "beta range must be a nonnegative interval");
    detail::require(jitter_sigma >= 0.0, "jitter sigma must be nonnegative");
    detail::require(duty_fraction > 0.0 && duty_fraction < 1.0, "duty fraction must lie in (0, 1)");
    detail::require(pulse_band.lo > 0.0 && pulse_band.lo < pulse_band.hi && pulse_band.hi < 0.5,
                    "pulse band must satisfy 0 < lo < hi < 0.5 (fractions of fs)");
    detail::require(frequency_scale > 0.0, "frequency scale must be positive");
    if (impact_period_s) detail::require(*impact_period_s > 0.0, "impact period must be positive");
    if (modulation_period_s) detail::require(*modulation_period_s > 0.0, "modulation period must be positive");
  }

  /// Copy with impact and modulation periods filled in from kinematics:
  /// outer race is unmodulated, inner race is modulated by the shaft and
  /// rolling-element defects by the cage.
  DefectSpec resolved(const BearingGeometry& geom, double shaft_hz) const {
    DefectSpec out = *this;
    if (fault_class == FaultClass::Healthy) return out;
    const DefectFrequencies f = defect_frequencies(geom, shaft_hz);
    double defect_hz = 0.0;
    double modulation = kUnmodulated;
    switch (fault_class) {
      case FaultClass::OuterRace: defect_hz = f.bpfo; break;
      case FaultClass::InnerRace:
        defect_hz = f.bpfi;
        modulation = 1.0 / shaft_hz;
        break;
      case FaultClass::RollingElement:
        defect_hz = f.bsf;
        modulation = 1.0 / f.ftf;
        break;
      case FaultClass::Healthy: break;
    }
    if (!out.impact_period_s) out.impact_period_s = 1.0 / (defect_hz * frequency_scale);
    if (!out.modulation_period_s) out.modulation_period_s = modulation;
    return out;
  }
};

/// Band-passed single-impact waveform. `center` is the index that lands on the
/// impact instant.
struct ImpactWaveform {
  std::vector<double> samples;
  std::size_t center = 0;
  std::size_t support = 0;  // pre-filter Hann length
};

/// Hann window of length n without the zero end points; peaks at the centre.
inline std::vector<double> hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) / static_cast<double>(n + 1)));
  }
  return w;
}

/// Hann pulse of length round(duty * T * fs), zero-padded by the filter
/// ring-down on both sides and zero-phase band-passed. The result is scaled so
/// that a train of unit-amplitude impacts with period T has unit RMS.
inline ImpactWaveform impact_waveform(double period_s, double duty, double fs, Interval band_hz) {
  detail::require(duty > 0.0 && duty < 1.0, "duty fraction must lie in (0, 1)");
  detail::require(fs > 0.0 && period_s > 0.0, "impact period and sample rate must be positive");
  detail::require(period_s * fs >= 4.0, "impact period spans fewer than 4 samples");
  const auto support = static_cast<std::size_t>(std::llround(duty * period_s * fs));
  detail::require(support >= 1, "impact period too short to represent the Hann pulse");
  const auto cascade = filter::butterworth_band_pass(band_hz.lo, band_hz.hi, fs, 4);
  const std::size_t pad = filter::ring_down_samples(band_hz.lo, fs, 4, 8.0);

  std::vector<double> x(support + 2 * pad, 0.0);
  const auto w = hann(support);
  std::copy(w.begin(), w.end(), x.begin() + static_cast<std::ptrdiff_t>(pad));
  ImpactWaveform out;
  out.samples = cascade.filtfilt(x, 0);
  out.support = support;
  out.center = pad + support / 2;
  double energy = 0.0;
  for (double v : out.samples) energy += v * v;
  detail::require<DegenerateInputError>(energy > 0.0, "impact waveform vanished after filtering");
  const double scale = std::sqrt(period_s * fs / energy);
  for (double& v : out.samples) v *= scale;
  return out;
}

/// Amplitude of impact i: gamma * sum_k alpha_k cos(i T k 2 pi / Q).
inline double modulation_amplitude(long i, double period_s, double modulation_period_s,
                                   std::span<const double> alpha, double gamma) {
  detail::require(modulation_period_s > 0.0, "modulation period must be positive");
  double a = 0.0;
  if (std::isinf(modulation_period_s)) {
    for (double ak : alpha) a += ak;
    return gamma * a;
  }
  const double phase = static_cast<double>(i) * period_s * 2.0 * std::numbers::pi / modulation_period_s;
  for (std::size_t k = 0; k < alpha.size(); ++k) a += alpha[k] * std::cos(phase * static_cast<double>(k));
  return gamma * a;
}

/// Impact instants and per-impact jitter for one pulse train. Impact i sits at
/// first_impact_s + i * T; gammas[j] belongs to impact first_index + j.
struct PulseTrainPlan {
  double first_impact_s = 0.0;
  long first_index = 0;
  std::vector<double> gammas;
};

/// Inclusive range of impact indices whose waveform touches [0, n).
inline std::pair<long, long> impact_index_range(std::size_t n, double fs, double period_s,
                                                const ImpactWaveform& w, double first_impact_s) {
  const double before = static_cast<double>(w.samples.size() - w.center) / fs;
  const double after = static_cast<double>(n + w.center) / fs;
  const long lo = static_cast<long>(std::floor((-before - first_impact_s) / period_s)) - 1;
  const long hi = static_cast<long>(std::ceil((after - first_impact_s) / period_s)) + 1;
  return {lo, hi};
}

/// Sum_i A_i s(t - iT) sampled on n points, truncated at the segment edges.
inline std::vector<double> pulse_train(std::size_t n, double fs, double period_s, double modulation_period_s,
                                       std::span<const double> alpha, const ImpactWaveform& w,
                                       const PulseTrainPlan& plan) {
  std::vector<double> out(n, 0.0);
  const auto len = static_cast<long>(w.samples.size());
  const auto center = static_cast<long>(w.center);
  for (std::size_t j = 0; j < plan.gammas.size(); ++j) {
    const long i = plan.first_index + static_cast<long>(j);
    const long pos = std::lround((plan.first_impact_s + static_cast<double>(i) * period_s) * fs);
    const long start = pos - center;
    if (start + len <= 0 || start >= static_cast<long>(n)) continue;
    const double a = modulation_amplitude(i, period_s, modulation_period_s, alpha, plan.gammas[j]);
    const long from = std::max(0L, -start);
    const long to = std::min(len, static_cast<long>(n) - start);
    for (long t = from; t < to; ++t) out[static_cast<std::size_t>(start + t)] += a * w.samples[static_cast<std::size_t>(t)];
  }
  return out;
}

/// Injects the fault described by `spec` into a healthy recording:
/// eps = sum_i A_i s(t - iT) + beta * n, with n the healthy carrier scaled to
/// unit standard deviation. Deterministic in `seed`.
inline Segment synthesize_fault(const Segment& healthy, const DefectSpec& spec, const BearingGeometry& geom,
                                std::uint64_t seed) {
  healthy.validate();
  detail::require(!healthy.label || *healthy.label == FaultClass::Healthy, "carrier segment must be labeled healthy");
  detail::require(healthy.samples.size() >= 2, "carrier segment too short");
  spec.validate();

  Rng rng(seed);
  std::uniform_real_distribution<double> beta_dist(spec.beta_range.lo, spec.beta_range.hi);
  const double beta = spec.beta_range.lo == spec.beta_range.hi ? spec.beta_range.lo : beta_dist(rng);

  const double carrier_sd = dsp::population_std(healthy.samples);
  detail::require<DegenerateInputError>(carrier_sd > 0.0, "carrier segment has zero variance");

  Segment out = healthy;
  out.label = spec.fault_class;
  out.domain = DomainTag::SyntheticSource;
  for (double& v : out.samples) v *= beta / carrier_sd;
  if (spec.fault_class == FaultClass::Healthy) return out;

  const DefectSpec r = spec.resolved(geom, healthy.shaft_hz());
  const double fs = healthy.sample_rate;
  const double period = *r.impact_period_s;
  const ImpactWaveform w = impact_waveform(period, r.duty_fraction, fs, {r.pulse_band.lo * fs, r.pulse_band.hi * fs});

  PulseTrainPlan plan;
  plan.first_impact_s = std::uniform_real_distribution<double>(0.0, period)(rng);
  const auto [lo, hi] = impact_index_range(out.samples.size(), fs, period, w, plan.first_impact_s);
  plan.first_index = lo;
  std::normal_distribution<double> gamma_dist(1.0, r.jitter_sigma);
  plan.gammas.resize(static_cast<std::size_t>(hi - lo + 1));
  for (double& g : plan.gammas) g = r.jitter_sigma > 0.0 ? std::max(0.0, gamma_dist(rng)) : 1.0;

  const auto train = pulse_train(out.samples.size(), fs, period, *r.modulation_period_s, r.sideband_amplitudes, w, plan);
  for (std::size_t t = 0; t < train.size(); ++t) out.samples[t] += train[t];
  return out;
}

struct SyntheticSample {
  Segment segment;
  std::size_t carrier = 0;  // index into the healthy pool
  std::uint64_t seed = 0;   // sub-stream seed used by synthesize_fault
};

/// Balanced synthetic dataset: `per_class` samples for every class. Carriers
/// are drawn without replacement when the pool is large enough, otherwise with
/// replacement. Per-sample seeds are derived from (seed, class, index).
inline std::vector<SyntheticSample> generate_source_dataset(std::span<const Segment> pool, const BearingGeometry& geom,
                                                            std::span<const FaultClass> classes, std::size_t per_class,
                                                            std::uint64_t seed, const DefectSpec& prototype = {}) {
  detail::require(!pool.empty(), "healthy pool is empty");
  detail::require(per_class >= 1, "per_class must be at least 1");
  detail::require(!classes.empty(), "class list is empty");
  geom.validate();

  std::vector<SyntheticSample> out;
  out.reserve(classes.size() * per_class);
  for (FaultClass c : classes) {
    Rng pick = make_rng(seed, 0x100 + class_index(c));
    std::vector<std::size_t> carriers(per_class);
    if (pool.size() >= per_class) {
      std::vector<std::size_t> idx(pool.size());
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), pick);
      std::copy_n(idx.begin(), per_class, carriers.begin());
    } else {
      std::uniform_int_distribution<std::size_t> u(0, pool.size() - 1);
      for (auto& k : carriers) k = u(pick);
    }
    DefectSpec spec = prototype;
    spec.fault_class = c;
    for (std::size_t j = 0; j < per_class; ++j) {
      const std::uint64_t s = derive_seed(seed, 1 + class_index(c), j);
      Segment carrier = pool[carriers[j]];
      carrier.label = FaultClass::Healthy;
      out.push_back({synthesize_fault(carrier, spec, geom, s), carriers[j], s});
    }
  }
  return out;
}

}  // namespace synfault::siggen
