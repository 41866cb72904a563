#pragma once

#include <cstdint>
#include <random>

namespace goose {

// Stateless 64-bit mixer (splitmix64 finalizer). Used for seeded tables and
// per-block stream derivation so results never depend on evaluation order.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) noexcept {
  return mix64(h ^ mix64(v));
}

template <typename... Ts>
constexpr std::uint64_t hash_values(std::uint64_t seed, Ts... vs) noexcept {
  std::uint64_t h = mix64(seed);
  ((h = hash_combine(h, static_cast<std::uint64_t>(vs))), ...);
  return h;
}

/// Top 53 bits of a 64-bit word as a double in [0, 1). Portable, unlike
/// std::uniform_real_distribution whose algorithm is implementation-defined.
constexpr double to_unit(std::uint64_t bits) noexcept {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// std::mt19937_64 with a portable unit-interval draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform() { return to_unit(engine_()); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Integer in [0, n), n > 0. Plain modulo; the bias is negligible for the
  /// small ranges drawn here.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace goose
