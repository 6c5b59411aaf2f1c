#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string_view>

namespace driftlab {

inline std::uint64_t fnv1a(const void* data, std::size_t n,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Counter-based splittable generator. Every draw is a pure function of
// (key, counter), so a stream can be replayed exactly and child streams
// derived by split() never collide with the parent's draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix(seed ^ kKeySalt)) {}

  // Independent child stream identified by lane. Does not advance this stream.
  Rng split(std::uint64_t lane) const {
    return Rng(FromKey{}, mix(key_ ^ mix(lane ^ kSplitSalt)));
  }
  Rng split(std::string_view name) const {
    return split(fnv1a(name.data(), name.size()));
  }

  // Stream identity; equal keys replay identically from a fresh copy.
  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64() { return mix(key_ + ++counter_ * kGamma); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via the polar method; the second variate is cached.
  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    while (true) {
      const double u = 2.0 * uniform() - 1.0;
      const double v = 2.0 * uniform() - 1.0;
      const double s = u * u + v * v;
      if (s <= 0.0 || s >= 1.0) continue;
      const double r = std::sqrt(-2.0 * std::log(s) / s);
      spare_ = v * r;
      has_spare_ = true;
      return u * r;
    }
  }

  int uniform_int(int n) {  // {0, ..., n-1}
    return static_cast<int>(uniform() * n) % n;
  }

 private:
  struct FromKey {};
  Rng(FromKey, std::uint64_t key) : key_(key) {}

  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
  static constexpr std::uint64_t kKeySalt = 0xa0761d6478bd642fULL;
  static constexpr std::uint64_t kSplitSalt = 0xe7037ed1a0b428dbULL;

  static std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace driftlab
