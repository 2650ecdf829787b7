#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <random>

namespace audsim {

// SplitMix64 finalizer, used only to derive seeds.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Every stochastic object in a run is seeded as (master, stream, index),
// so results depend only on the master seed and logical indices, never on
// scheduling or worker count.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index) {
  return mix64(mix64(mix64(master) ^ stream) ^ index);
}

namespace streams {
inline constexpr std::uint64_t kPilotBook = 0x31;
inline constexpr std::uint64_t kEvaluation = 0x32;
inline constexpr std::uint64_t kCalibration = 0x33;
}  // namespace streams

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(bits() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return uniform() < p; }

  // Circularly-symmetric CN(0,1): real/imag parts N(0, 1/2).
  // Box-Muller with a fixed two-uniform budget per sample.
  std::complex<double> complex_normal() {
    const double u1 = static_cast<double>((bits() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-std::log(u1));
    const double a = 2.0 * kPi * u2;
    return {r * std::cos(a), r * std::sin(a)};
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;
  std::mt19937_64 gen_;
};

}  // namespace audsim
