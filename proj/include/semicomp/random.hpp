#pragma once

#include <cstdint>
#include <random>

namespace semicomp {

using Engine = std::mt19937_64;

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

// Seed for an independent sub-stream identified by (seed, stream, index).
// Sub-streams let blocks of work run in any order or on any thread and still
// reproduce the same draws.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

Engine make_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

// SplitMix64 generator: cheap to construct, used for the many short
// per-subject streams where seeding a Mersenne twister would dominate.
class LightEngine {
 public:
  using result_type = std::uint64_t;
  explicit LightEngine(std::uint64_t state) : state_(state) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~result_type{0}; }
  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

inline LightEngine make_light_engine(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  return LightEngine(derive_seed(seed, stream, index));
}

// Stream tags used across the library.
namespace streams {
inline constexpr std::uint64_t frailty_common = 1;
inline constexpr std::uint64_t frailty_arm0 = 2;
inline constexpr std::uint64_t frailty_arm1 = 3;
inline constexpr std::uint64_t covariates = 4;
inline constexpr std::uint64_t paths = 5;
inline constexpr std::uint64_t assignment = 6;
inline constexpr std::uint64_t censoring = 7;
inline constexpr std::uint64_t bootstrap = 8;
inline constexpr std::uint64_t resample_x = 9;
inline constexpr std::uint64_t entry = 10;
inline constexpr std::uint64_t population = 11;
inline constexpr std::uint64_t pilot = 12;
}  // namespace streams

}  // namespace semicomp
