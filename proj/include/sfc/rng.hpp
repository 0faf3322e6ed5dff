#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace sfc {

// Mixes a master seed with tags into a child seed (splitmix64 finalizer).
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags);
std::uint64_t hash_tag(std::string_view tag);

// Seeded generator with platform-independent draws. The standard
// distributions are implementation-defined, so they are avoided here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n);

  bool bernoulli(double p) { return uniform() < p; }

  double normal();

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace sfc
