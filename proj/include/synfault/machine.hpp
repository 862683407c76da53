#pragma once

// Simulated healthy machine: shaft harmonics, two noise-excited structural
// resonances and broadband sensor noise. Stands in for measured healthy
// recordings when none are available.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include "synfault/types.hpp"

namespace synfault::machine {

struct MachineProfile {
  double shaft_rpm = 1797.0;
  double sample_rate = 12000.0;
  double resonance1_hz = 2600.0;
  double resonance2_hz = 3600.0;
  double resonance_q_radius = 0.995;
  double shaft_harmonic_amp = 0.6;
  double sensor_noise = 0.3;
};

/// Second-order resonator driven by white noise.
inline void add_resonance(std::vector<double>& out, double f_hz, double fs, double radius, double gain, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const double a1 = 2.0 * radius * std::cos(2.0 * std::numbers::pi * f_hz / fs);
  const double a2 = -radius * radius;
  double y1 = 0.0, y2 = 0.0;
  const double norm = std::sqrt(1.0 - radius * radius) * 0.5;
  for (double& v : out) {
    const double y = a1 * y1 + a2 * y2 + n(rng);
    y2 = y1;
    y1 = y;
    v += gain * norm * y;
  }
}

inline std::vector<double> healthy_recording(std::size_t n, std::uint64_t seed, const MachineProfile& p = {}) {
  std::mt19937_64 rng(seed);
  std::vector<double> x(n, 0.0);
  const double fr = p.shaft_rpm / 60.0;
  std::uniform_real_distribution<double> ph(0.0, 2.0 * std::numbers::pi);
  const double phases[3] = {ph(rng), ph(rng), ph(rng)};
  for (std::size_t t = 0; t < n; ++t) {
    const double tt = static_cast<double>(t) / p.sample_rate;
    for (int h = 0; h < 3; ++h) {
      x[t] += p.shaft_harmonic_amp / (h + 1) * std::sin(2.0 * std::numbers::pi * fr * (h + 1) * tt + phases[h]);
    }
  }
  add_resonance(x, p.resonance1_hz, p.sample_rate, p.resonance_q_radius, 1.0, rng);
  add_resonance(x, p.resonance2_hz, p.sample_rate, p.resonance_q_radius, 0.7, rng);
  std::normal_distribution<double> noise(0.0, p.sensor_noise);
  for (double& v : x) v += noise(rng);
  return x;
}

inline Segment healthy_segment(std::size_t n, std::uint64_t seed, const MachineProfile& p = {}) {
  Segment s;
  s.samples = healthy_recording(n, seed, p);
  s.sample_rate = p.sample_rate;
  s.shaft_speed_rpm = p.shaft_rpm;
  s.label = FaultClass::Healthy;
  s.domain = DomainTag::RealTarget;
  return s;
}

}  // namespace synfault::machine
