#pragma once
// Counter-based RNG (Philox4x32-10) plus the handful of samplers the
// simulators need. Counter-based keys make replicate streams independent and
// reproducible across platforms: stream k of seed s always yields the same
// numbers regardless of how other streams were consumed.

#include <array>
#include <cmath>
#include <cstdint>

namespace fvpop {

class Rng {
 public:
  Rng(uint64_t seed, uint64_t stream) : pos_(4), have_spare_(false), spare_(0) {
    key_[0] = static_cast<uint32_t>(seed);
    key_[1] = static_cast<uint32_t>(seed >> 32);
    ctr_ = {0u, 0u, static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
  }

  uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buf_[pos_++];
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in (0,1): 53-bit mantissa, never exactly 0 or 1.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  double exponential(double rate) { return -std::log(uniform01()) / rate; }

  // Marsaglia polar method with spare caching.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    have_spare_ = true;
    return u * m;
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Beta(1, alpha) via inverse CDF; this is the stick-breaking increment for
  // Poisson-Dirichlet sampling.
  double beta1(double alpha) { return 1.0 - std::pow(uniform01(), 1.0 / alpha); }

  // Index i with probability w[i]/wsum; caller guarantees wsum = sum(w) > 0.
  // Walks the cumulative sum so ties in floating-point order are stable.
  int categorical(const double* w, int n, double wsum) {
    double u = uniform01() * wsum;
    double acc = 0.0;
    for (int i = 0; i < n; ++i) {
      acc += w[i];
      if (u <= acc) return i;
    }
    return n - 1;
  }

  uint64_t uniform_index(uint64_t n) {
    // Rejection to avoid modulo bias.
    uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

 private:
  static constexpr uint32_t kM0 = 0xD2511F53u;
  static constexpr uint32_t kM1 = 0xCD9E8D57u;
  static constexpr uint32_t kW0 = 0x9E3779B9u;
  static constexpr uint32_t kW1 = 0xBB67AE85u;

  static void round(std::array<uint32_t, 4>& x, uint32_t k0, uint32_t k1) {
    uint64_t p0 = static_cast<uint64_t>(kM0) * x[0];
    uint64_t p1 = static_cast<uint64_t>(kM1) * x[2];
    uint32_t hi0 = static_cast<uint32_t>(p0 >> 32), lo0 = static_cast<uint32_t>(p0);
    uint32_t hi1 = static_cast<uint32_t>(p1 >> 32), lo1 = static_cast<uint32_t>(p1);
    x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
  }

  void refill() {
    buf_ = ctr_;
    uint32_t k0 = key_[0], k1 = key_[1];
    for (int r = 0; r < 10; ++r) {
      round(buf_, k0, k1);
      k0 += kW0;
      k1 += kW1;
    }
    if (++ctr_[0] == 0) ++ctr_[1];
    pos_ = 0;
  }

  std::array<uint32_t, 2> key_;
  std::array<uint32_t, 4> ctr_;
  std::array<uint32_t, 4> buf_;
  int pos_;
  bool have_spare_;
  double spare_;
};

}  // namespace fvpop
