#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "synfault/error.hpp"

namespace synfault {

/// Health state of a bearing. The integer value is the class index used by
/// the classifier.
enum class FaultClass : std::uint8_t { Healthy = 0, OuterRace = 1, InnerRace = 2, RollingElement = 3 };

inline constexpr std::array<FaultClass, 4> kAllFaultClasses = {
    FaultClass::Healthy, FaultClass::OuterRace, FaultClass::InnerRace, FaultClass::RollingElement};

enum class DomainTag : std::uint8_t { SyntheticSource, RealTarget };

inline std::string_view to_string(FaultClass c) {
  switch (c) {
    case FaultClass::Healthy: return "healthy";
    case FaultClass::OuterRace: return "outer_race";
    case FaultClass::InnerRace: return "inner_race";
    case FaultClass::RollingElement: return "rolling_element";
  }
  return "unknown";
}

/// Accepts the canonical names plus the usual CWRU shorthands (OF, IF, REF).
inline FaultClass fault_class_from_string(std::string_view s) {
  if (s == "healthy" || s == "normal" || s == "H") return FaultClass::Healthy;
  if (s == "outer_race" || s == "OF" || s == "OR") return FaultClass::OuterRace;
  if (s == "inner_race" || s == "IF" || s == "IR") return FaultClass::InnerRace;
  if (s == "rolling_element" || s == "REF" || s == "ball" || s == "B") return FaultClass::RollingElement;
  throw ParameterError("unknown fault class '" + std::string(s) + "'");
}

inline std::string_view to_string(DomainTag d) {
  return d == DomainTag::SyntheticSource ? "synthetic_source" : "real_target";
}

inline DomainTag domain_from_string(std::string_view s) {
  if (s == "synthetic_source") return DomainTag::SyntheticSource;
  if (s == "real_target") return DomainTag::RealTarget;
  throw ParameterError("unknown domain tag '" + std::string(s) + "'");
}

inline std::size_t class_index(FaultClass c) { return static_cast<std::size_t>(c); }

/// A raw vibration waveform.
struct Segment {
  std::vector<double> samples;
  double sample_rate = 0.0;      // Hz
  double shaft_speed_rpm = 0.0;  // revolutions per minute
  std::optional<FaultClass> label;
  DomainTag domain = DomainTag::RealTarget;

  double shaft_hz() const { return shaft_speed_rpm / 60.0; }

  void validate() const {
    detail::require(!samples.empty(), "segment has no samples");
    detail::require(std::isfinite(sample_rate) && sample_rate > 0.0, "segment sample rate must be positive");
    detail::require(std::isfinite(shaft_speed_rpm) && shaft_speed_rpm > 0.0,
                    "segment shaft speed must be positive");
  }
};

/// Closed interval [lo, hi].
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

}  // namespace synfault
