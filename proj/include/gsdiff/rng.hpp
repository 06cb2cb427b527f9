#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace gsdiff {

// xoshiro256++ with splitmix64 seeding. We roll our own generator (and the
// Box-Muller transform below) instead of <random> because the standard
// distributions are implementation-defined; sampling here is specified to be
// reproducible from (seed, stream) alone, on any platform.
class Rng {
 public:
  explicit Rng(uint64_t seed, uint64_t stream = 0) {
    uint64_t x = seed ^ (stream * 0x9e3779b97f4a7c15ull + 0x6a09e667f3bcc909ull);
    for (auto& s : state_) s = splitmix64(x);
    // All-zero state is invalid for xoshiro; splitmix64 cannot produce four
    // zeros from any input, so no explicit fixup is needed.
  }

  uint64_t next_u64() {
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0. Rejection-free modulo with
  // 64-bit input; bias is negligible for the n used here but we debias anyway.
  uint64_t uniform_index(uint64_t n) {
    const uint64_t threshold = (0 - n) % n;
    for (;;) {
      const uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Integer in [lo, hi] inclusive.
  int64_t uniform_int(int64_t lo, int64_t hi) {
    return lo + static_cast<int64_t>(uniform_index(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller; the second value of each pair is cached.
  double normal() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    // u1 in (0, 1] so log() is finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

  // Serializable state: 4 words of xoshiro state plus the Box-Muller cache.
  struct State {
    std::array<uint64_t, 4> s;
    uint8_t has_cached;
    double cached;
  };

  State save() const { return State{state_, static_cast<uint8_t>(has_cached_ ? 1 : 0), cached_}; }

  void restore(const State& st) {
    state_ = st.s;
    has_cached_ = st.has_cached != 0;
    cached_ = st.cached;
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  static uint64_t splitmix64(uint64_t& x) {
    x += 0x9e3779b97f4a7c15ull;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  std::array<uint64_t, 4> state_{};
  bool has_cached_ = false;
  double cached_ = 0.0;
};

}  // namespace gsdiff
