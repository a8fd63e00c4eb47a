#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace xdm {

// Deterministic RNG (splitmix64). Distributions are derived by hand from the
// raw stream so output is identical across standard library implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed * 0x9E3779B97F4A7C15ULL + 1) {
    for (int i = 0; i < 8; ++i) next_u64();
  }

  uint64_t next_u64() {
    uint64_t x = state_;
    x ^= x >> 30; x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27; x *= 0x94D049BB133111EBULL;
    x ^= x >> 31;
    state_ += 0x9E3779B97F4A7C15ULL;
    return x;
  }

  // uniform in [0, 1)
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  uint64_t next_index(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

  bool next_bool(double p) { return next_double() < p; }

  // Knuth multiplication method; fine for the small lambdas used here.
  int next_poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    double limit = std::exp(-lambda);
    double prod = next_double();
    int n = 0;
    while (prod > limit) {
      ++n;
      prod *= next_double();
    }
    return n;
  }

 private:
  uint64_t state_;
};

// FNV-1a, used for catalog content hashes and cache keys.
class Fnv1a {
 public:
  void add_bytes(const void* data, size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < n; ++i) {
      h_ ^= p[i];
      h_ *= 0x100000001B3ULL;
    }
  }
  void add(const std::string& s) {
    uint64_t n = s.size();
    add_bytes(&n, sizeof n);
    add_bytes(s.data(), s.size());
  }
  void add(uint64_t v) { add_bytes(&v, sizeof v); }
  void add(int64_t v) { add_bytes(&v, sizeof v); }
  void add(int v) { int64_t w = v; add(w); }
  void add(double v) { add_bytes(&v, sizeof v); }
  uint64_t value() const { return h_; }

 private:
  uint64_t h_ = 0xCBF29CE484222325ULL;
};

template <typename... Args>
std::string strfmt(const char* fmt, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return std::string(buf);
}

// printf %.17g; round-trips doubles exactly through text.
inline std::string format_double(double v) { return strfmt("%.17g", v); }

inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Static block partition; results identical to a serial loop as long as the
// body only writes to its own indexes.
template <typename Fn>
void parallel_for(int n, int n_threads, Fn&& body) {
  if (n <= 0) return;
  n_threads = std::min(n_threads, n);
  if (n_threads <= 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> workers;
  workers.reserve(n_threads);
  int chunk = (n + n_threads - 1) / n_threads;
  for (int t = 0; t < n_threads; ++t) {
    int lo = t * chunk;
    int hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    workers.emplace_back([lo, hi, &body] {
      for (int i = lo; i < hi; ++i) body(i);
    });
  }
  for (auto& w : workers) w.join();
}

}  // namespace xdm
