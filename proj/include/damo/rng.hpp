#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

namespace damo {

// Seeded generator with platform-independent draws. The std distributions are
// implementation-defined, so byte-reproducibility needs our own transforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int below(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  // Inverse-CDF draw from an (unnormalized is fine) probability vector.
  int categorical(std::span<const double> probs) {
    double total = 0.0;
    for (double p : probs) total += p;
    double u = uniform() * total;
    int last_positive = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      if (probs[i] <= 0.0) continue;
      last_positive = static_cast<int>(i);
      if (u < probs[i]) return static_cast<int>(i);
      u -= probs[i];
    }
    return last_positive;
  }

  // P(t) = (1 - q) q^t for t = 0, 1, ..., truncated at cap.
  int geometric(double q, int cap) {
    if (q <= 0.0) return 0;
    const double u = 1.0 - uniform();  // (0, 1]
    const double t = std::floor(std::log(u) / std::log(q));
    return t >= cap ? cap : static_cast<int>(t);
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

// Independent stream seed from (seed, stream, index) via splitmix64.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream,
                                 std::uint64_t index = 0) {
  std::uint64_t z = seed ^ (stream * 0x9E3779B97F4A7C15ULL) ^ (index * 0xD1B54A32D192ED03ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace damo
