#pragma once

// Independent reference computations used by the tests. Nothing here calls
// into the library's FFT or filter code.

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace synfault::oracle {

/// Direct DFT coefficient of x at (possibly fractional) frequency f_hz.
inline std::complex<double> dft_at(std::span<const double> x, double f_hz, double fs) {
  std::complex<double> acc{0.0, 0.0};
  for (std::size_t n = 0; n < x.size(); ++n) {
    const double ph = -2.0 * std::numbers::pi * f_hz * static_cast<double>(n) / fs;
    acc += x[n] * std::complex<double>(std::cos(ph), std::sin(ph));
  }
  return acc;
}

/// Amplitude of a sinusoid at f_hz, exact when x holds an integer number of cycles.
inline double tone_amplitude(std::span<const double> x, double f_hz, double fs) {
  return 2.0 * std::abs(dft_at(x, f_hz, fs)) / static_cast<double>(x.size());
}

/// |X| at DFT bin k computed by direct summation.
inline double dft_magnitude(std::span<const double> x, std::size_t k) {
  const double n = static_cast<double>(x.size());
  return std::abs(dft_at(x, static_cast<double>(k), n));
}

inline double db(double ratio) { return 20.0 * std::log10(ratio); }

}  // namespace synfault::oracle
