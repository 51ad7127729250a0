#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace sennet {

// splitmix64, used to derive sub-stream seeds from (master seed, stream name).
inline std::uint64_t splitmix64(std::uint64_t& state) {
  state += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  return fnv1a64(s.data(), s.size(), h);
}

// Derives the seed of a named sub-stream. All randomness in a run flows from
// one master seed through these streams, so each component (mining, init,
// batching, pairs, ...) can be reproduced independently.
inline std::uint64_t stream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t s = master ^ fnv1a64(name);
  return splitmix64(s);
}

// Deterministic RNG. mt19937_64 gives a pinned bit stream; the distributions
// below are hand-rolled on top of it so sampled values do not depend on the
// standard library's unspecified distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t master, std::string_view stream) : engine_(stream_seed(master, stream)) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, n), unbiased via rejection.
  std::size_t uniform_index(std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % bound;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  // Uniform in [0, 1).
  double uniform_real() { return (engine_() >> 11) * 0x1.0p-53; }

  double uniform_real(double lo, double hi) { return lo + (hi - lo) * uniform_real(); }

  // Standard normal via polar Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform_real() - 1.0;
      v = 2.0 * uniform_real() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Fisher-Yates, deterministic given the stream state.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[uniform_index(i)]);
    }
  }

  std::vector<std::size_t> permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sennet
