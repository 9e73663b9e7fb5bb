// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cadb {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

inline void check(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

[[noreturn]] inline void fail(const std::string& msg) {
  throw std::runtime_error(msg);
}

// Deterministic RNG (splitmix64). Every stochastic choice in the project goes
// through this so results are pinned across platforms and stdlib versions.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // integer in [0, n)
  int64_t uniform_int(int64_t n) {
    return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
  }

  double normal() {
    // Box-Muller; consumes two uniforms per call.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  template <class It>
  void shuffle(It first, It last) {
    int64_t n = static_cast<int64_t>(last - first);
    for (int64_t i = n - 1; i > 0; --i) {
      int64_t j = uniform_int(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  uint64_t state_;
};

// Derives an independent stream from (seed, index); used for per-example
// determinism that is independent of worker scheduling.
inline uint64_t mix_seed(uint64_t seed, uint64_t index) {
  Rng r(seed ^ (0x9E3779B97F4A7C15ull * (index + 1)));
  return r.next_u64();
}

}  // namespace cadb
