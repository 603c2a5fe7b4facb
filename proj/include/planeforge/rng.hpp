#pragma once

#include <cmath>
#include <cstdint>

namespace pf {

// Counter-based random stream (Philox4x32-10). A stream is identified by
// (seed, stream id); substream() derives disjoint child streams, so parallel
// workers can draw independently without sharing state. Copyable value type;
// copies continue the sequence independently.
class RngStream {
 public:
  RngStream() = default;
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(seed), stream_(stream) {}

  // Child stream with an id derived from (this stream, index). Deterministic
  // and collision-resistant; the child starts at counter 0.
  RngStream substream(std::uint64_t index) const {
    RngStream child(key_, mix64(stream_ ^ mix64(index + 0x9e3779b97f4a7c15ull)));
    return child;
  }

  std::uint64_t next_u64() {
    if (cache_filled_) {
      cache_filled_ = false;
      return cache_;
    }
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = static_cast<std::uint32_t>(stream_);
    std::uint32_t c3 = static_cast<std::uint32_t>(stream_ >> 32);
    std::uint32_t k0 = static_cast<std::uint32_t>(key_);
    std::uint32_t k1 = static_cast<std::uint32_t>(key_ >> 32);
    for (int round = 0; round < 10; ++round) {
      std::uint64_t p0 = 0xD2511F53ull * c0;
      std::uint64_t p1 = 0xCD9E8D57ull * c2;
      std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      c0 = hi1 ^ c1 ^ k0;
      c1 = lo1;
      c2 = hi0 ^ c3 ^ k1;
      c3 = lo0;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    ++counter_;
    cache_ = (static_cast<std::uint64_t>(c3) << 32) | c2;
    cache_filled_ = true;
    return (static_cast<std::uint64_t>(c1) << 32) | c0;
  }

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; generates pairs and caches the spare.
  double normal() {
    if (normal_cached_) {
      normal_cached_ = false;
      return normal_spare_;
    }
    // u1 in (0, 1] so the log is finite.
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    normal_spare_ = r * std::sin(a);
    normal_cached_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, 1) via Marsaglia-Tsang, boosted for shape < 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = uniform();
      if (u <= 0.0) u = 0x1.0p-53;
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = uniform();
      if (u <= 0.0) u = 0x1.0p-53;
      double x2 = x * x;
      if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
      if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  std::uint64_t seed() const { return key_; }
  std::uint64_t stream_id() const { return stream_; }

 private:
  static std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t stream_ = 0;
  std::uint64_t counter_ = 0;
  std::uint64_t cache_ = 0;
  bool cache_filled_ = false;
  bool normal_cached_ = false;
  double normal_spare_ = 0.0;
};

}  // namespace pf
