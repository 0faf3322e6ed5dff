#include "doctest.h"

#include "sfc/rng.hpp"

using sfc::Rng;

TEST_CASE("derive_seed is deterministic and tag sensitive") {
  CHECK(sfc::derive_seed(7, {1, 2}) == sfc::derive_seed(7, {1, 2}));
  CHECK(sfc::derive_seed(7, {1, 2}) != sfc::derive_seed(7, {2, 1}));
  CHECK(sfc::derive_seed(7, {1}) != sfc::derive_seed(8, {1}));
}

TEST_CASE("uniform stays in [0,1) and below respects bound") {
  Rng rng(42);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(rng.below(7) < 7u);
  }
}

TEST_CASE("bernoulli frequency is close to p") {
  Rng rng(3);
  int hits = 0;
  for (int i = 0; i < 100000; ++i) hits += rng.bernoulli(0.3);
  CHECK(hits / 100000.0 == doctest::Approx(0.3).epsilon(0.02));
}
