#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "synfault/error.hpp"

namespace synfault::filter {

/// Second-order section, normalized so a0 == 1.
struct Biquad {
  double b0 = 1.0, b1 = 0.0, b2 = 0.0;
  double a1 = 0.0, a2 = 0.0;
};

enum class Kind { LowPass, HighPass };

/// Butterworth section Q values for an even filter order.
inline std::vector<double> butterworth_q(int order) {
  detail::require(order >= 2 && order % 2 == 0, "butterworth order must be even and >= 2");
  std::vector<double> q;
  for (int k = 0; k < order / 2; ++k) {
    q.push_back(1.0 / (2.0 * std::sin((2.0 * k + 1.0) * std::numbers::pi / (2.0 * order))));
  }
  return q;
}

/// Bilinear-transform biquad with the cutoff pre-warped (audio-EQ cookbook form).
inline Biquad design_section(Kind kind, double cutoff_hz, double q, double fs) {
  detail::require(cutoff_hz > 0.0 && cutoff_hz < 0.5 * fs, "cutoff must lie strictly inside (0, fs/2)");
  const double w0 = 2.0 * std::numbers::pi * cutoff_hz / fs;
  const double c = std::cos(w0);
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  Biquad s;
  if (kind == Kind::LowPass) {
    s.b0 = (1.0 - c) / 2.0 / a0;
    s.b1 = (1.0 - c) / a0;
    s.b2 = s.b0;
  } else {
    s.b0 = (1.0 + c) / 2.0 / a0;
    s.b1 = -(1.0 + c) / a0;
    s.b2 = s.b0;
  }
  s.a1 = -2.0 * c / a0;
  s.a2 = (1.0 - alpha) / a0;
  return s;
}

/// Cascade of second-order sections.
struct Cascade {
  std::vector<Biquad> sections;

  /// Causal filtering, direct form II transposed, zero initial state.
  void apply(std::span<double> x) const {
    for (const Biquad& s : sections) {
      double z1 = 0.0, z2 = 0.0;
      for (double& v : x) {
        const double in = v;
        const double out = s.b0 * in + z1;
        z1 = s.b1 * in - s.a1 * out + z2;
        z2 = s.b2 * in - s.a2 * out;
        v = out;
      }
    }
  }

  /// Zero-phase forward-backward filtering. `pad` samples of odd (point-
  /// symmetric) extension are added at both ends to settle edge transients.
  std::vector<double> filtfilt(std::span<const double> x, std::size_t pad) const {
    const std::size_t n = x.size();
    if (n == 0) return {};
    pad = std::min(pad, n - 1);
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
      ext[i] = 2.0 * x[0] - x[pad - i];
      ext[n + pad + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    apply(ext);
    std::reverse(ext.begin(), ext.end());
    apply(ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
  }
};

/// Butterworth band-pass as a high-pass cascade at `lo` followed by a low-pass
/// cascade at `hi`, each of order `order`.
inline Cascade butterworth_band_pass(double lo_hz, double hi_hz, double fs, int order = 4) {
  detail::require(lo_hz > 0.0 && lo_hz < hi_hz, "band-pass requires 0 < lo < hi");
  detail::require(hi_hz < 0.5 * fs, "band-pass upper edge must lie below Nyquist");
  Cascade c;
  for (double q : butterworth_q(order)) c.sections.push_back(design_section(Kind::HighPass, lo_hz, q, fs));
  for (double q : butterworth_q(order)) c.sections.push_back(design_section(Kind::LowPass, hi_hz, q, fs));
  return c;
}

/// Number of samples after which the slowest pole of an order-`order`
/// Butterworth high-pass at `lo_hz` has decayed by `decades` decades.
inline std::size_t ring_down_samples(double lo_hz, double fs, int order, double decades) {
  const double wc = 2.0 * std::numbers::pi * lo_hz / fs;
  const double damping = std::sin(std::numbers::pi / (2.0 * order));
  return static_cast<std::size_t>(std::ceil(decades * std::log(10.0) / (wc * damping)));
}

}  // namespace synfault::filter
