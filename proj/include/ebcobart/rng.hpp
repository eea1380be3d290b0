#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

// Philox4x32-10 counter-based generator plus the handful of distributions the
// samplers need. Counter-based streams keep every chain, fold and replicate on
// an independent, platform-stable sequence: outputs depend only on (key,
// counter), never on global state or libc, so identical seeds give identical
// bytes everywhere.

namespace ebcobart {

class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_lo_(static_cast<std::uint32_t>(key)),
                                    key_hi_(static_cast<std::uint32_t>(key >> 32)) {}

  std::uint32_t next_u32() {
    if (buf_pos_ == 4) refill();
    return buf_[buf_pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t lo = next_u32();
    const std::uint64_t hi = next_u32();
    return (hi << 32) | lo;
  }

  // uniform on [0,1), 53 random bits
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // uniform on (0,1)
  double uniform_pos() {
    double u;
    do { u = uniform(); } while (u == 0.0);
    return u;
  }

  // unbiased integer on [0, n), n >= 1 (Lemire's multiply-shift with rejection)
  std::uint32_t uniform_int(std::uint32_t n) {
    std::uint64_t m = static_cast<std::uint64_t>(next_u32()) * n;
    auto lo = static_cast<std::uint32_t>(m);
    if (lo < n) {
      const std::uint32_t threshold = (0u - n) % n;
      while (lo < threshold) {
        m = static_cast<std::uint64_t>(next_u32()) * n;
        lo = static_cast<std::uint32_t>(m);
      }
    }
    return static_cast<std::uint32_t>(m >> 32);
  }

  // standard normal, Box-Muller with the second deviate cached
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925286766559 * u2;
    cached_ = r * std::sin(a);
    have_cached_ = true;
    return r * std::cos(a);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  // rate-1 exponential
  double exponential() { return -std::log(uniform_pos()); }

  // Gamma(shape, 1) via Marsaglia-Tsang; shape < 1 handled by boosting
  double gamma(double shape) {
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  // InverseGamma(shape a, scale b): density ~ x^{-(a+1)} exp(-b/x)
  double inverse_gamma(double shape, double scale) {
    return scale / gamma(shape);
  }

  // standard normal conditioned on X > lower (Robert 1995 for far tails)
  double normal_lower_truncated(double lower) {
    if (lower <= 0.0) {
      double z;
      do { z = normal(); } while (z <= lower);
      return z;
    }
    const double lambda = 0.5 * (lower + std::sqrt(lower * lower + 4.0));
    for (;;) {
      const double z = lower + exponential() / lambda;
      const double d = z - lambda;
      if (std::log(uniform_pos()) <= -0.5 * d * d) return z;
    }
  }

  // N(mean, 1) truncated to (0, inf) when positive, else to (-inf, 0]
  double probit_latent(double mean, bool positive) {
    if (positive) return mean + normal_lower_truncated(-mean);
    return mean - normal_lower_truncated(mean);
  }

 private:
  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(counter_);
    std::uint32_t c1 = static_cast<std::uint32_t>(counter_ >> 32);
    std::uint32_t c2 = 0, c3 = 0;
    std::uint32_t k0 = key_lo_, k1 = key_hi_;
    for (int round = 0; round < 10; ++round) {
      const std::uint64_t p0 = 0xD2511F53ULL * c0;
      const std::uint64_t p1 = 0xCD9E8D57ULL * c2;
      const std::uint32_t hi0 = static_cast<std::uint32_t>(p0 >> 32);
      const std::uint32_t lo0 = static_cast<std::uint32_t>(p0);
      const std::uint32_t hi1 = static_cast<std::uint32_t>(p1 >> 32);
      const std::uint32_t lo1 = static_cast<std::uint32_t>(p1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0; c1 = n1; c2 = n2; c3 = n3;
      k0 += 0x9E3779B9u;
      k1 += 0xBB67AE85u;
    }
    buf_[0] = c0; buf_[1] = c1; buf_[2] = c2; buf_[3] = c3;
    buf_pos_ = 0;
    ++counter_;
  }

  std::uint32_t key_lo_, key_hi_;
  std::uint64_t counter_ = 0;
  std::uint32_t buf_[4] = {};
  int buf_pos_ = 4;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Categorical sampler over fixed probabilities (CDF + binary search).
class CategoricalSampler {
 public:
  explicit CategoricalSampler(std::span<const double> probs) {
    cdf_.reserve(probs.size());
    double acc = 0.0;
    for (double p : probs) {
      acc += p;
      cdf_.push_back(acc);
    }
    if (!cdf_.empty()) cdf_.back() = 1.0;
  }

  std::size_t draw(Rng& rng) const {
    const double u = rng.uniform();
    std::size_t lo = 0, hi = cdf_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (u < cdf_[mid]) hi = mid; else lo = mid + 1;
    }
    return lo;
  }

 private:
  std::vector<double> cdf_;
};

// Documented seed-splitting rule: every non-chain level (EB iteration, CV
// fold, simulation replicate, generator stream) derives its run seed through
// this splitmix64 chain; chains inside one run use run_seed + chain_index.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + (tag + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = base;
  for (std::uint64_t t : path) s = derive_seed(s, t);
  return s;
}

}  // namespace ebcobart
