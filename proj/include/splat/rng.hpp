#pragma once

#include <cmath>
#include <cstdint>

namespace splat {

// PCG32 generator. Self-contained so that streams are bit-identical across
// platforms and standard-library versions (std distributions are not).
class Rng {
 public:
  explicit Rng(uint64_t seed = 0x853c49e6748fea9bULL, uint64_t stream = 1) {
    reseed(seed, stream);
  }

  void reseed(uint64_t seed, uint64_t stream = 1) {
    state_ = 0;
    inc_ = (stream << 1u) | 1u;
    next_u32();
    state_ += seed;
    next_u32();
    have_cached_normal_ = false;
    cached_normal_ = 0.0;
  }

  uint32_t next_u32() {
    uint64_t old = state_;
    state_ = old * 6364136223846793005ULL + inc_;
    uint32_t xorshifted = static_cast<uint32_t>(((old >> 18u) ^ old) >> 27u);
    uint32_t rot = static_cast<uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
  }

  uint64_t next_u64() {
    uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  // Uniform in [0,1) with 53 random bits.
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // i in [0, n)
  uint64_t uniform_index(uint64_t n) {
    // modulo bias is irrelevant at the ranges used here
    return n ? next_u64() % n : 0;
  }

  double normal() {
    if (have_cached_normal_) {
      have_cached_normal_ = false;
      return cached_normal_;
    }
    // Box-Muller; u clamped away from 0
    double u1 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    cached_normal_ = r * std::sin(a);
    have_cached_normal_ = true;
    return r * std::cos(a);
  }

  // Derive an independent child stream, e.g. one per subsystem.
  Rng fork(uint64_t salt) {
    uint64_t s = splitmix(next_u64() ^ salt);
    uint64_t t = splitmix(s ^ 0x9e3779b97f4a7c15ULL);
    return Rng(s, t | 1);
  }

  // Serialization hooks for checkpointing.
  uint64_t state() const { return state_; }
  uint64_t inc() const { return inc_; }
  bool has_cached_normal() const { return have_cached_normal_; }
  double cached_normal_value() const { return cached_normal_; }
  void restore(uint64_t state, uint64_t inc, bool has_norm, double norm) {
    state_ = state;
    inc_ = inc;
    have_cached_normal_ = has_norm;
    cached_normal_ = norm;
  }

  static uint64_t splitmix(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

 private:
  uint64_t state_ = 0;
  uint64_t inc_ = 1;
  bool have_cached_normal_ = false;
  double cached_normal_ = 0.0;
};

}  // namespace splat
