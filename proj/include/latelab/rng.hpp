#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

#include "latelab/stats.hpp"

namespace latelab {

// Deterministic counter-style RNG built on the splitmix64 mixer.  Streams are
// keyed by (seed, tag...) so any unit of work — a simulation replication, a
// bootstrap draw, a single tree — owns an independent stream regardless of
// scheduling.  Two streams derived with different tag paths never share state,
// which is what makes multi-threaded runs byte-identical to serial ones.
//
// All variate generation is inverse-CDF based (no rejection loops with
// data-dependent iteration counts except where noted), so a stream consumed in
// the same order always yields the same values on any platform with IEEE
// doubles.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : state_(mix(seed ^ kGolden)) {}

  RngStream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) : RngStream(seed) {
    for (std::uint64_t t : tags) absorb(t);
  }

  // Fold another tag into the stream key (order-sensitive on purpose).
  void absorb(std::uint64_t tag) { state_ = mix(state_ ^ mix(tag + kGolden)); }

  RngStream derived(std::uint64_t tag) const {
    RngStream r = *this;
    r.absorb(tag);
    return r;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on the open interval (0,1): 53-bit mantissa shifted to the cell
  // centre, so inverse CDFs never see 0 or 1.
  double uniform01() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Uniform integer in [0, n).  Unbiased via rejection of the wrap-around
  // remainder; the expected number of draws is < 2 for any n.
  std::uint64_t uniform_int(std::uint64_t n) {
    const std::uint64_t threshold = (-n) % n;
    for (;;) {
      const std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  double normal() { return norm_ppf(uniform01()); }

  double normal(double mu, double sigma) { return mu + sigma * normal(); }

  // Standard normal truncated to [lo, hi], via the inverse-CDF construction.
  double normal_truncated(double lo, double hi) {
    const double plo = norm_cdf(lo);
    const double phi = norm_cdf(hi);
    const double p = plo + uniform01() * (phi - plo);
    return norm_ppf(p);
  }

  // Marsaglia–Tsang squeeze method for Gamma(shape, scale).  The acceptance
  // loop is data-dependent but consumes only this stream, so determinism per
  // stream is preserved.
  double gamma(double shape, double scale) {
    if (shape < 1.0) {
      const double u = uniform01();
      return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x;
      double v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform01();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v * scale;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v * scale;
    }
  }

 private:
  static constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace latelab
