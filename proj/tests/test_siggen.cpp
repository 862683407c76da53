#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "oracles.hpp"
#include "spectral.hpp"
#include "synfault/dsp.hpp"
#include "synfault/siggen.hpp"
#include "synfault/machine.hpp"

using namespace synfault;
using namespace synfault::siggen;

namespace {

constexpr double kShaftHz = 29.95;

Segment carrier(std::size_t n = 4096, std::uint64_t seed = 7) {
  machine::MachineProfile p;
  p.shaft_rpm = kShaftHz * 60.0;
  return machine::healthy_segment(n, seed, p);
}

std::size_t argmax_above(const std::vector<double>& v, std::size_t from) {
  return static_cast<std::size_t>(std::max_element(v.begin() + static_cast<std::ptrdiff_t>(from), v.end()) - v.begin());
}

}  // namespace

TEST(DefectFrequencies, SmallBallLimitCollapsesToHalfElementCount) {
  const BearingGeometry g{8, 1e-9, 1.0, 0.0};
  const auto f = defect_frequencies(g, 10.0);
  EXPECT_NEAR(f.bpfo, 40.0, 1e-6);
  EXPECT_NEAR(f.bpfi, 40.0, 1e-6);
}

TEST(DefectFrequencies, CwruInnerRaceMatchesHandEvaluation) {
  // (n/2) f_r (1 + d/D) with n = 9, d = 7.94 mm, D = 39.04 mm.
  const double expected = 4.5 * 29.95 * (1.0 + 7.94 / 39.04);
  const auto f = defect_frequencies(BearingGeometry::cwru_drive_end(), 29.95);
  EXPECT_NEAR(f.bpfi, expected, 1e-9);
  EXPECT_NEAR(f.bpfi, 162.2, 0.05);
}

TEST(DefectFrequencies, InnerAboveOuterForRandomGeometries) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.01, 0.99);
  for (int trial = 0; trial < 500; ++trial) {
    const double big_d = 10.0 + 90.0 * u(rng);
    const BearingGeometry g{3 + static_cast<int>(20 * u(rng)), big_d * u(rng), big_d, 1.5 * u(rng)};
    const auto f = defect_frequencies(g, 1.0 + 50.0 * u(rng));
    EXPECT_GT(f.bpfi, f.bpfo);
    EXPECT_GT(f.bpfo, 0.0);
    EXPECT_GT(f.bsf, 0.0);
    EXPECT_GT(f.ftf, 0.0);
  }
}

TEST(DefectFrequencies, RejectsBadInput) {
  EXPECT_THROW(defect_frequencies(BearingGeometry::cwru_drive_end(), 0.0), ParameterError);
  EXPECT_THROW(defect_frequencies({2, 1.0, 10.0, 0.0}, 10.0), ParameterError);
  EXPECT_THROW(defect_frequencies({9, 10.0, 10.0, 0.0}, 10.0), ParameterError);
  EXPECT_THROW(defect_frequencies({9, 1.0, 10.0, 1.6}, 10.0), ParameterError);
}

TEST(ImpactWaveform, HannSupportAndShape) {
  const auto w = impact_waveform(0.01, 0.05, 12000.0, {240.0, 5400.0});
  EXPECT_EQ(w.support, 6u);
  const auto h = hann(6);
  const auto peak = std::max_element(h.begin(), h.end()) - h.begin();
  EXPECT_TRUE(peak == 2 || peak == 3);
  EXPECT_DOUBLE_EQ(h[2], h[3]);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(h[i], h[5 - i]);
  EXPECT_GT(h[2], h[1]);
  EXPECT_GT(h[1], h[0]);
}

TEST(ImpactWaveform, BandPassRemovesDcAndNyquist) {
  const double fs = 12000.0;
  const auto w = impact_waveform(0.01, 0.05, fs, {0.02 * fs, 0.45 * fs});
  double peak = 0.0;
  for (double v : w.samples) peak = std::max(peak, std::abs(v));
  const double mean = std::accumulate(w.samples.begin(), w.samples.end(), 0.0) / static_cast<double>(w.samples.size());
  EXPECT_LT(std::abs(mean), 1e-6 * peak);

  double passband_peak = 0.0;
  for (double f = 0.05 * fs; f <= 0.4 * fs; f += 25.0) {
    passband_peak = std::max(passband_peak, std::abs(oracle::dft_at(w.samples, f, fs)));
  }
  const double at_nyquist = std::abs(oracle::dft_at(w.samples, 0.5 * fs, fs));
  const double near_dc = std::abs(oracle::dft_at(w.samples, 0.002 * fs, fs));
  EXPECT_LT(at_nyquist, 0.01 * passband_peak);
  EXPECT_LT(oracle::db(near_dc / passband_peak), -40.0);
  EXPECT_LT(oracle::db(std::abs(oracle::dft_at(w.samples, 0.49 * fs, fs)) / passband_peak), -40.0);
}

TEST(ImpactWaveform, RejectsTooShortPeriod) {
  EXPECT_THROW(impact_waveform(3.0 / 12000.0, 0.05, 12000.0, {240.0, 5400.0}), ParameterError);
  EXPECT_THROW(impact_waveform(0.01, 1.0, 12000.0, {240.0, 5400.0}), ParameterError);
  EXPECT_THROW(impact_waveform(5.0 / 12000.0, 0.05, 12000.0, {240.0, 5400.0}), ParameterError);
}

TEST(ModulationAmplitude, Examples) {
  const std::vector<double> alpha{1.0, 0.76, 0.38, 0.11, 0.05};
  EXPECT_NEAR(modulation_amplitude(0, 0.004, 0.033, alpha, 1.0), 2.30, 1e-12);
  EXPECT_NEAR(modulation_amplitude(17, 0.004, kUnmodulated, alpha, 1.0), 2.30, 1e-12);
  const std::vector<double> single{1.0};
  EXPECT_DOUBLE_EQ(modulation_amplitude(5, 0.004, 0.033, single, 1.0), 1.0);
  const std::vector<double> two{1.0, 0.5};
  EXPECT_NEAR(modulation_amplitude(3, 0.005, 0.03, two, 1.0), 0.5, 1e-12);
  EXPECT_THROW(modulation_amplitude(0, 0.005, 0.0, two, 1.0), ParameterError);
}

TEST(SynthesizeFault, HealthySpecOnlyScalesTheCarrier) {
  const Segment h = carrier();
  DefectSpec spec;
  spec.fault_class = FaultClass::Healthy;
  const Segment out = synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 11);
  ASSERT_EQ(out.samples.size(), h.samples.size());
  EXPECT_EQ(out.label, FaultClass::Healthy);
  EXPECT_EQ(out.domain, DomainTag::SyntheticSource);
  const double ratio = out.samples[0] / h.samples[0];
  for (std::size_t i = 0; i < h.samples.size(); ++i) EXPECT_NEAR(out.samples[i], ratio * h.samples[i], 1e-12);
  const double beta = ratio * dsp::population_std(h.samples);
  EXPECT_GE(beta, 0.25);
  EXPECT_LE(beta, 2.0);
}

TEST(SynthesizeFault, SameSeedIsBitIdentical) {
  const Segment h = carrier();
  DefectSpec spec;
  spec.fault_class = FaultClass::InnerRace;
  const auto a = synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 42);
  const auto b = synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 42);
  const auto c = synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 43);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_NE(a.samples, c.samples);
  EXPECT_EQ(a.label, FaultClass::InnerRace);
  EXPECT_EQ(a.sample_rate, h.sample_rate);
  EXPECT_EQ(a.shaft_speed_rpm, h.shaft_speed_rpm);
}

TEST(SynthesizeFault, OuterRacePeakAtBpfo) {
  const auto geom = BearingGeometry::cwru_drive_end();
  DefectSpec spec;
  spec.fault_class = FaultClass::OuterRace;
  spec.beta_range = {0.5, 0.5};
  const auto e = dsp::preprocess(synthesize_fault(carrier(), spec, geom, 5));
  const std::size_t peak = argmax_above(e.values, 17);
  const double bpfo_order = defect_frequencies(geom, kShaftHz).bpfo / kShaftHz;
  EXPECT_NEAR(dsp::EnvelopeSpectrum::order_at(peak), bpfo_order, 0.02 * bpfo_order);
}

TEST(SynthesizeFault, RejectsFaultyCarrierAndMissingSpeed) {
  Segment h = carrier(512);
  DefectSpec spec;
  spec.fault_class = FaultClass::OuterRace;
  h.label = FaultClass::InnerRace;
  EXPECT_THROW(synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 1), ParameterError);
  h.label = FaultClass::Healthy;
  h.shaft_speed_rpm = 0.0;
  EXPECT_THROW(synthesize_fault(h, spec, BearingGeometry::cwru_drive_end(), 1), ParameterError);
}

TEST(PulseTrain, LinearInJitter) {
  const double fs = 12000.0, period = 1.0 / 162.19, q = 1.0 / kShaftHz;
  const std::vector<double> alpha{1.0, 0.76, 0.38, 0.11, 0.05};
  const auto w = impact_waveform(period, 0.05, fs, {240.0, 5400.0});
  PulseTrainPlan plan;
  plan.first_impact_s = 0.0021;
  const auto [lo, hi] = impact_index_range(2048, fs, period, w, plan.first_impact_s);
  plan.first_index = lo;
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(1.0, 0.1);
  for (long i = lo; i <= hi; ++i) plan.gammas.push_back(g(rng));
  const auto base = pulse_train(2048, fs, period, q, alpha, w, plan);
  for (double c : {0.0, 0.5, 3.0}) {
    PulseTrainPlan scaled = plan;
    for (double& v : scaled.gammas) v *= c;
    const auto out = pulse_train(2048, fs, period, q, alpha, w, scaled);
    for (std::size_t t = 0; t < out.size(); ++t) EXPECT_NEAR(out[t], c * base[t], 1e-12 * (1.0 + std::abs(base[t])));
  }
}

TEST(PulseTrain, AutocorrelationPeaksAtImpactPeriod) {
  const double fs = 12000.0;
  for (double period : {1.0 / 107.36, 1.0 / 162.19, 1.0 / 70.58, 0.0123}) {
    const auto w = impact_waveform(period, 0.05, fs, {240.0, 5400.0});
    PulseTrainPlan plan;
    plan.first_impact_s = 0.3 * period;
    const auto [lo, hi] = impact_index_range(4096, fs, period, w, plan.first_impact_s);
    plan.first_index = lo;
    plan.gammas.assign(static_cast<std::size_t>(hi - lo + 1), 1.0);
    const std::vector<double> alpha{1.0};
    const auto x = pulse_train(4096, fs, period, kUnmodulated, alpha, w, plan);
    const long expected = std::lround(period * fs);
    long best = 0;
    double best_val = -1e300;
    for (long lag = expected / 2; lag <= 3 * expected / 2; ++lag) {
      double acc = 0.0;
      for (std::size_t t = 0; t + static_cast<std::size_t>(lag) < x.size(); ++t) acc += x[t] * x[t + static_cast<std::size_t>(lag)];
      if (acc > best_val) {
        best_val = acc;
        best = lag;
      }
    }
    EXPECT_LE(std::abs(best - expected), 1) << "period " << period;
  }
}

TEST(ModulationAmplitude, SidebandStructureOfAmplitudeSequence) {
  // Q / T = 10 and N = 1000 put every modulation harmonic exactly on a bin.
  const double period = 0.005, q = 0.05;
  const std::vector<double> alpha{1.0, 0.76, 0.38, 0.11, 0.05};
  const std::size_t n = 1000;
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = modulation_amplitude(static_cast<long>(i), period, q, alpha, 1.0);
  std::set<std::size_t> lines;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    lines.insert(k * 100);
    lines.insert((n - k * 100) % n);
  }
  double peak = 0.0;
  for (std::size_t k = 0; k < n; ++k) peak = std::max(peak, oracle::dft_magnitude(a, k));
  for (std::size_t k = 0; k < n; ++k) {
    const double m = oracle::dft_magnitude(a, k);
    if (lines.contains(k)) {
      EXPECT_GT(m, 0.01 * peak) << "bin " << k;
    } else {
      EXPECT_LT(oracle::db(m / peak + 1e-300), -60.0) << "bin " << k;
    }
  }
}

TEST(GenerateSourceDataset, BalancedPerClass) {
  std::vector<Segment> pool;
  for (std::uint64_t s = 0; s < 8; ++s) pool.push_back(carrier(512, s));
  const std::vector<FaultClass> classes(kAllFaultClasses.begin(), kAllFaultClasses.end());
  const auto ds = generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), classes, 1200, 99);
  ASSERT_EQ(ds.size(), 4800u);
  std::map<FaultClass, int> hist;
  for (const auto& s : ds) ++hist[*s.segment.label];
  for (FaultClass c : kAllFaultClasses) EXPECT_EQ(hist[c], 1200);
}

TEST(GenerateSourceDataset, SingleHealthySample) {
  const std::vector<Segment> pool{carrier(512)};
  const std::vector<FaultClass> classes{FaultClass::Healthy};
  const auto ds = generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), classes, 1, 1);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].segment.label, FaultClass::Healthy);
  const double ratio = ds[0].segment.samples[3] / pool[0].samples[3];
  for (std::size_t i = 0; i < 512; ++i) EXPECT_NEAR(ds[0].segment.samples[i], ratio * pool[0].samples[i], 1e-12);
}

TEST(GenerateSourceDataset, CarrierReuseWhenPoolIsSmall) {
  std::vector<Segment> pool;
  for (std::uint64_t s = 0; s < 600; ++s) pool.push_back(carrier(64, s));
  const std::vector<FaultClass> classes{FaultClass::Healthy};
  const auto ds = generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), classes, 1200, 5);
  std::map<std::size_t, int> uses;
  for (const auto& s : ds) ++uses[s.carrier];
  double total = 0.0;
  for (const auto& [k, v] : uses) total += v;
  EXPECT_DOUBLE_EQ(total / static_cast<double>(pool.size()), 2.0);
  EXPECT_GT(uses.size(), 500u);  // with replacement: ~86% of carriers drawn at least once
}

TEST(GenerateSourceDataset, DeterministicAndOrderIndependent) {
  std::vector<Segment> pool;
  for (std::uint64_t s = 0; s < 5; ++s) pool.push_back(carrier(1024, s));
  const std::vector<FaultClass> forward{FaultClass::OuterRace, FaultClass::InnerRace};
  const std::vector<FaultClass> reversed{FaultClass::InnerRace, FaultClass::OuterRace};
  const auto a = generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), forward, 3, 17);
  const auto b = generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), reversed, 3, 17);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t j = 0; j < 3; ++j) {
    EXPECT_EQ(a[j].segment.samples, b[3 + j].segment.samples);
    EXPECT_EQ(a[j].seed, b[3 + j].seed);
    EXPECT_EQ(a[3 + j].segment.samples, b[j].segment.samples);
  }
}

TEST(GenerateSourceDataset, EmptyPoolIsAnError) {
  const std::vector<Segment> pool;
  const std::vector<FaultClass> classes{FaultClass::Healthy};
  EXPECT_THROW(generate_source_dataset(pool, BearingGeometry::cwru_drive_end(), classes, 4, 1), ParameterError);
}

TEST(SpectralFidelity, DefectLineAndInnerRaceSidebands) {
  for (std::uint64_t seed : {1, 2, 3}) {
    for (FaultClass c : {FaultClass::OuterRace, FaultClass::InnerRace, FaultClass::RollingElement}) {
      const auto r = oracle::check_lines(c, kShaftHz, 12000.0, 16, seed);
      EXPECT_TRUE(r.peak_ok()) << to_string(c) << " peak " << r.peak_hz << " Hz, defect " << r.defect_hz << " Hz";
      if (c == FaultClass::InnerRace) EXPECT_GE(r.sidebands, 2u) << "seed " << seed;
      // Stationary outer-race impacts carry no shaft modulation.
      if (c == FaultClass::OuterRace) EXPECT_LE(r.sidebands, 1u) << "seed " << seed;
    }
  }
}
