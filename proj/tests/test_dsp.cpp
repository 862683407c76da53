#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "synfault/dsp.hpp"
#include "synfault/siggen.hpp"
#include "synfault/machine.hpp"

using namespace synfault;
using namespace synfault::dsp;

namespace {

Segment make_segment(std::vector<double> x, double fs = 12000.0, double rpm = 1797.0) {
  Segment s;
  s.samples = std::move(x);
  s.sample_rate = fs;
  s.shaft_speed_rpm = rpm;
  return s;
}

std::vector<double> tone(std::size_t n, double f, double fs, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(t) / fs);
  return x;
}

std::vector<double> white(std::size_t n, std::uint64_t seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.3, sd);
  std::vector<double> x(n);
  for (double& v : x) v = d(rng);
  return x;
}

}  // namespace

TEST(NormalizeStd, ConstantSignalIsDegenerate) {
  EXPECT_THROW(normalize_std(make_segment(std::vector<double>(100, 3.5))), DegenerateInputError);
  EXPECT_THROW(normalize_std(make_segment({1.0})), ParameterError);
}

TEST(NormalizeStd, HalvesSignalWithStdTwo) {
  const auto out = normalize_std(make_segment({-2.0, 2.0, -2.0, 2.0, 2.0, -2.0}));
  for (double v : out.samples) EXPECT_EQ(std::abs(v), 1.0);
}

TEST(NormalizeStd, WhiteNoiseHasUnitStdAndIsIdempotent) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto once = normalize_std(make_segment(white(4096, seed, 0.1 + static_cast<double>(seed))));
    EXPECT_NEAR(population_std(once.samples), 1.0, 1e-9);
    const auto twice = normalize_std(once);
    for (std::size_t i = 0; i < once.samples.size(); ++i) EXPECT_NEAR(twice.samples[i], once.samples[i], 1e-12);
  }
}

TEST(BandPass, PassBandToneKeepsAmplitude) {
  const double fs = 12800.0;
  const auto out = band_pass(make_segment(tone(6400, 2000.0, fs), fs));
  const double gain = oracle::tone_amplitude(out.samples, 2000.0, fs);
  EXPECT_LT(std::abs(oracle::db(gain)), 1.0);
}

TEST(BandPass, StopBandToneIsAttenuated) {
  const double fs = 12800.0;
  for (double f : {100.0, 250.0}) {
    const auto out = band_pass(make_segment(tone(6400, f, fs), fs));
    EXPECT_LT(oracle::db(oracle::tone_amplitude(out.samples, f, fs)), -40.0) << f;
  }
  // Nyquist: alternating sequence.
  std::vector<double> alt(6400);
  for (std::size_t t = 0; t < alt.size(); ++t) alt[t] = t % 2 ? -1.0 : 1.0;
  const auto out = band_pass(make_segment(alt, fs));
  EXPECT_LT(oracle::db(oracle::tone_amplitude(out.samples, fs / 2, fs) / 2.0), -40.0);
}

TEST(BandPass, ZeroPhaseAlignsToneWithInput) {
  const double fs = 12000.0;
  const auto in = tone(6000, 1500.0, fs);
  const auto out = band_pass(make_segment(in, fs));
  const auto a = oracle::dft_at(in, 1500.0, fs);
  const auto b = oracle::dft_at(out.samples, 1500.0, fs);
  EXPECT_NEAR(std::arg(b / a), 0.0, 1e-3);
}

TEST(BandPass, RequiresSampleRateAboveTwiceUpperEdge) {
  EXPECT_THROW(band_pass(make_segment(tone(1000, 100.0, 8000.0), 8000.0), 500.0, 4000.0), ParameterError);
}

TEST(EnvelopeSpectrum, AmplitudeModulatedToneDemodulates) {
  const double fs = 12000.0;
  const std::size_t n = 4096;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t) / fs;
    x[t] = (1.0 + 0.8 * std::cos(2.0 * std::numbers::pi * 97.0 * tt)) * std::sin(2.0 * std::numbers::pi * 2500.0 * tt);
  }
  const auto spec = envelope_spectrum(make_segment(x, fs));
  ASSERT_EQ(spec.size(), n / 2 + 1);
  const double bin = fs / static_cast<double>(n);
  // Strongest component away from DC and the 2x-carrier image.
  std::size_t best = 2;
  for (std::size_t k = 2; k < static_cast<std::size_t>(1000.0 / bin); ++k) if (spec[k] > spec[best]) best = k;
  EXPECT_NEAR(static_cast<double>(best) * bin, 97.0, bin);
}

TEST(EnvelopeSpectrum, ZeroSignalGivesZeroSpectrum) {
  const auto spec = envelope_spectrum(make_segment(std::vector<double>(3000, 0.0)));
  EXPECT_EQ(spec.size(), 4096u / 2 + 1);
  for (double v : spec) EXPECT_EQ(v, 0.0);
}

TEST(EnvelopeSpectrum, MagnitudesMatchDirectDft) {
  std::vector<double> x = white(256, 4);
  const auto mag = magnitude_spectrum(x, 256, 1.0);
  for (std::size_t k : {0u, 1u, 17u, 128u}) EXPECT_NEAR(mag[k], oracle::dft_magnitude(x, k), 1e-9);
}

TEST(OrderNormalize, IndexArithmetic) {
  // Linear ramp in frequency: value(bin k) = k * bin_hz. Interpolation is exact.
  const double fs = 12000.0;
  const std::size_t nfft = 4000;
  std::vector<double> spec(nfft / 2 + 1);
  for (std::size_t k = 0; k < spec.size(); ++k) spec[k] = static_cast<double>(k) * fs / static_cast<double>(nfft);
  const auto out = order_normalize(spec, fs, 1800.0);
  ASSERT_EQ(out.values.size(), 1000u);
  EXPECT_NEAR(EnvelopeSpectrum::order_at(333), 10.0, 1e-12);
  EXPECT_NEAR(out.values[333], 300.0, 1e-9);
  EXPECT_NEAR(out.values[999], 900.0, 1e-9);
  EXPECT_NEAR(out.values[0], 0.0, 1e-12);
}

TEST(OrderNormalize, FlatSpectrumStaysFlat) {
  const std::vector<double> spec(2049, 0.25);
  const auto out = order_normalize(spec, 12000.0, 1797.0);
  for (double v : out.values) EXPECT_DOUBLE_EQ(v, 0.25);
}

TEST(OrderNormalize, RejectsShortSpectrum) {
  const std::vector<double> spec(2049, 1.0);
  EXPECT_THROW(order_normalize(spec, 1000.0, 1800.0), ParameterError);  // reaches 500 Hz < 900 Hz
  EXPECT_THROW(order_normalize(spec, 12000.0, 0.0), ParameterError);
}

TEST(OrderNormalize, SameDefectOrderAtDoubleSpeedLandsOnSameIndex) {
  const auto geom = siggen::BearingGeometry::cwru_drive_end();
  for (FaultClass c : {FaultClass::OuterRace, FaultClass::InnerRace}) {
    std::size_t peaks[2];
    int i = 0;
    for (double rpm : {900.0, 1800.0}) {
      machine::MachineProfile p;
      p.shaft_rpm = rpm;
      siggen::DefectSpec spec;
      spec.fault_class = c;
      spec.beta_range = {0.3, 0.3};
      spec.jitter_sigma = 0.0;
      const auto e = preprocess(siggen::synthesize_fault(machine::healthy_segment(8192, 3, p), spec, geom, 8));
      const auto f = siggen::defect_frequencies(geom, rpm / 60.0);
      const double order = (c == FaultClass::OuterRace ? f.bpfo : f.bpfi) / (rpm / 60.0);
      // Search +-20% around the defect order so harmonics cannot win.
      const auto lo = e.values.begin() + std::lround(0.8 * order / kMaxOrder * 999.0);
      const auto hi = e.values.begin() + std::lround(1.2 * order / kMaxOrder * 999.0);
      peaks[i++] = static_cast<std::size_t>(std::max_element(lo, hi) - e.values.begin());
    }
    EXPECT_LE(std::abs(static_cast<long>(peaks[0]) - static_cast<long>(peaks[1])), 1) << to_string(c);
  }
}

TEST(Preprocess, OutputIsAlwaysValid) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    const double rpm = 600.0 + 2400.0 * u(rng);
    const auto n = static_cast<std::size_t>(2048 + 4096 * u(rng));
    auto seg = make_segment(white(n, static_cast<std::uint64_t>(trial), 0.01 + 10.0 * u(rng)), 12000.0, rpm);
    const auto e = preprocess(seg);
    EXPECT_NO_THROW(e.validate());
    const auto again = preprocess(seg);
    EXPECT_EQ(e.values, again.values);
  }
}
