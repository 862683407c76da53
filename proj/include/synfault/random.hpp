#pragma once

#include <cstdint>
#include <random>

namespace synfault {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent sub-stream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Deterministic seed for sub-stream (stream, index) of a base seed. Results do
/// not depend on the order in which sub-streams are requested.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return mix64(mix64(mix64(base) ^ (stream * 0xd1b54a32d192ed03ULL)) ^ (index * 0x8cb92ba72f3d8dd7ULL));
}

inline Rng make_rng(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0) {
  return Rng(derive_seed(base, stream, index));
}

/// Beta(a, b) draw through two Gamma variates.
template <class R>
double sample_beta(R& rng, double a, double b) {
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  const double s = x + y;
  return s > 0.0 ? x / s : 0.5;
}

}  // namespace synfault
