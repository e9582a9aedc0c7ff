#pragma once

#include <cmath>
#include <cstdint>

namespace fbdsde {

// Counter-based Gaussian generator. Every draw is a pure function of
// (seed, motion id, stream index, step index), so ensembles are bit-identical
// no matter how the work is chunked across threads.
namespace rng {

inline std::uint64_t mix64(std::uint64_t x) {
  // SplitMix64 finalizer.
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t key(std::uint64_t seed, std::uint64_t motion,
                         std::uint64_t stream, std::uint64_t step,
                         std::uint64_t lane) {
  std::uint64_t h = mix64(seed);
  h = mix64(h ^ (motion + 0x632be59bd9b4e019ULL));
  h = mix64(h ^ (stream + 0xd6e8feb86659fd93ULL));
  h = mix64(h ^ (step + 0xa5cb3a1ed85c9f8bULL));
  h = mix64(h ^ (lane + 0x2545f4914f6cdd1dULL));
  return h;
}

// Uniform in (0, 1]: the +1 shift keeps log() finite below.
inline double uniform_from(std::uint64_t h) {
  return static_cast<double>((h >> 11) + 1) * 0x1.0p-53;
}

// Standard normal via Box-Muller on two independent counter lanes.
inline double standard_normal(std::uint64_t seed, std::uint64_t motion,
                              std::uint64_t stream, std::uint64_t step) {
  const double u1 = uniform_from(key(seed, motion, stream, step, 0));
  const double u2 = uniform_from(key(seed, motion, stream, step, 1));
  const double r = std::sqrt(-2.0 * std::log(u1));
  return r * std::cos(6.283185307179586476925286766559 * u2);
}

constexpr std::uint64_t kMotionW = 0;
constexpr std::uint64_t kMotionB = 1;

}  // namespace rng
}  // namespace fbdsde
