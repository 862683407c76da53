#pragma once

// Envelope-spectrum preprocessing: unit-std normalization, band-pass, full-wave
// rectification, FFT magnitude, and interpolation onto a shaft-order axis.

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "synfault/error.hpp"
#include "synfault/filter.hpp"
#include "synfault/types.hpp"

namespace synfault::dsp {

inline constexpr std::size_t kSpectrumLength = 1000;
inline constexpr double kMaxOrder = 30.0;

/// Model input: envelope magnitudes on a uniform grid of kSpectrumLength
/// points spanning [0, kMaxOrder] shaft orders (both ends included).
struct EnvelopeSpectrum {
  std::vector<double> values;
  std::optional<FaultClass> label;
  DomainTag domain = DomainTag::RealTarget;

  static double order_at(std::size_t index) {
    return kMaxOrder * static_cast<double>(index) / static_cast<double>(kSpectrumLength - 1);
  }

  void validate() const {
    detail::require<ShapeError>(values.size() == kSpectrumLength, "envelope spectrum must have 1000 values");
    for (double v : values) {
      detail::require(std::isfinite(v) && v >= 0.0, "envelope spectrum values must be finite and nonnegative");
    }
  }
};

struct PreprocessOptions {
  double band_lo_hz = 500.0;
  double band_hi_hz = 4000.0;
  int filter_order = 4;
};

inline std::size_t next_pow2(std::size_t n) { return std::bit_ceil(std::max<std::size_t>(n, 1)); }

inline double population_std(std::span<const double> x) {
  const double n = static_cast<double>(x.size());
  const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : x) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

/// Scales the segment to unit population standard deviation. The mean is kept.
inline Segment normalize_std(const Segment& seg) {
  detail::require(seg.samples.size() >= 2, "normalize_std needs at least two samples");
  const double sd = population_std(seg.samples);
  double peak = 0.0;
  for (double v : seg.samples) peak = std::max(peak, std::abs(v));
  if (!(sd > 1e-14 * peak) || !std::isfinite(sd) || sd == 0.0) {
    throw DegenerateInputError("normalize_std: input has zero variance");
  }
  Segment out = seg;
  for (double& v : out.samples) v /= sd;
  return out;
}

/// Zero-phase Butterworth band-pass between lo and hi.
inline Segment band_pass(const Segment& seg, double lo_hz = 500.0, double hi_hz = 4000.0, int order = 4) {
  seg.validate();
  detail::require(seg.sample_rate > 2.0 * hi_hz, "band_pass: sample rate must exceed twice the upper edge");
  const auto cascade = filter::butterworth_band_pass(lo_hz, hi_hz, seg.sample_rate, order);
  const auto pad = static_cast<std::size_t>(std::ceil(6.0 * seg.sample_rate / lo_hz));
  Segment out = seg;
  out.samples = cascade.filtfilt(seg.samples, pad);
  return out;
}

/// One-sided FFT magnitudes |X_k| / scale of x zero-padded to `nfft` points.
/// Returns nfft/2 + 1 bins.
inline std::vector<double> magnitude_spectrum(std::span<const double> x, std::size_t nfft, double scale) {
  detail::require(nfft >= x.size() && nfft >= 2 && std::has_single_bit(nfft), "nfft must be a power of two >= input");
  std::vector<double> padded(nfft, 0.0);
  std::copy(x.begin(), x.end(), padded.begin());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> bins;
  fft.fwd(bins, padded);
  std::vector<double> mag(nfft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(bins[k]) / scale;
  return mag;
}

/// Band-pass, full-wave rectify, and take the one-sided FFT magnitude
/// (normalized by the segment length). The FFT length is the next power of two
/// >= the segment length; the result has nfft/2 + 1 bins of width fs / nfft.
inline std::vector<double> envelope_spectrum(const Segment& seg, const PreprocessOptions& opt = {}) {
  Segment filtered = band_pass(seg, opt.band_lo_hz, opt.band_hi_hz, opt.filter_order);
  for (double& v : filtered.samples) v = std::abs(v);
  const std::size_t n = filtered.samples.size();
  return magnitude_spectrum(filtered.samples, next_pow2(n), static_cast<double>(n));
}

/// Linear interpolation of a one-sided magnitude spectrum (nfft/2 + 1 bins)
/// onto the 1000-point order axis, where order = f / (rpm / 60).
inline EnvelopeSpectrum order_normalize(std::span<const double> spectrum, double fs, double shaft_speed_rpm) {
  detail::require(std::isfinite(shaft_speed_rpm) && shaft_speed_rpm > 0.0, "order_normalize: shaft speed must be positive");
  detail::require(fs > 0.0, "order_normalize: sample rate must be positive");
  detail::require(spectrum.size() >= 2, "order_normalize: spectrum too short");
  const double nfft = 2.0 * static_cast<double>(spectrum.size() - 1);
  const double bin_hz = fs / nfft;
  const double shaft_hz = shaft_speed_rpm / 60.0;
  const double last_bin = static_cast<double>(spectrum.size() - 1);
  if (kMaxOrder * shaft_hz / bin_hz > last_bin + 1e-9) {
    throw ParameterError("order_normalize: spectrum does not reach order 30");
  }
  EnvelopeSpectrum out;
  out.values.resize(kSpectrumLength);
  for (std::size_t j = 0; j < kSpectrumLength; ++j) {
    const double pos = std::clamp(EnvelopeSpectrum::order_at(j) * shaft_hz / bin_hz, 0.0, last_bin);
    const auto k = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(k);
    out.values[j] = k + 1 < spectrum.size() ? (1.0 - frac) * spectrum[k] + frac * spectrum[k + 1] : spectrum[k];
  }
  return out;
}

/// Full preprocessing pipeline for one segment.
inline EnvelopeSpectrum preprocess(const Segment& seg, const PreprocessOptions& opt = {}) {
  const Segment unit = normalize_std(seg);
  const auto spec = envelope_spectrum(unit, opt);
  EnvelopeSpectrum out = order_normalize(spec, seg.sample_rate, seg.shaft_speed_rpm);
  out.label = seg.label;
  out.domain = seg.domain;
  return out;
}

}  // namespace synfault::dsp
