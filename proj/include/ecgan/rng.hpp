#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace ecgan {

// Mixes a base seed with a stream id so that sub-generators (per identity,
// per parameter block, per augmentation pass) are decorrelated but fully
// reproducible. splitmix64 finalizer.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic RNG. All distribution transforms are written out explicitly
// (not taken from <random> distributions, whose sequences differ across
// standard library implementations), so a seed pins the stream everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // [0, n)
  int uniform_int(int n) {
    int v = static_cast<int>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  // Box-Muller, one fresh pair of draws per call.
  double normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
  }

  // Fisher-Yates with a pinned sequence.
  template <typename It>
  void shuffle(It first, It last) {
    auto n = static_cast<long>(last - first);
    for (long i = n - 1; i > 0; --i) {
      long j = uniform_int(static_cast<int>(i + 1));
      std::swap(first[i], first[j]);
    }
  }

  // Exact engine state, round-trippable through text.
  std::string state_string() const {
    std::ostringstream out;
    out << gen_;
    return out.str();
  }

  void set_state_string(const std::string& s) {
    std::istringstream in(s);
    in >> gen_;
    if (!in) throw std::invalid_argument("Rng: malformed state string");
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace ecgan
