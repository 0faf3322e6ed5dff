#pragma once

#include <functional>
#include <vector>

#include "doctest.h"
#include "sfc/catalog.hpp"
#include "sfc/error.hpp"
#include "sfc/topology.hpp"

namespace testing {

inline void check_error(sfc::Errc code, const std::function<void()>& fn) {
  try {
    fn();
    FAIL("expected " << sfc::errc_name(code));
  } catch (const sfc::Error& e) {
    CHECK(e.code() == code);
  }
}

// Fiber length giving a propagation delay of exactly k/1024 s.
inline double dyadic_length(int k) { return 3e8 * k / 1024.0; }

inline sfc::Topology line(int n, double cpu = 10e9, double storage = 20.0, double length = 60000.0,
                          double bandwidth = 1000.0) {
  std::vector<sfc::DataCenterSpec> dcs;
  std::vector<sfc::LinkSpec> links;
  for (int i = 0; i < n; ++i) dcs.push_back({i, cpu, storage});
  for (int i = 0; i + 1 < n; ++i) links.push_back({i, i + 1, bandwidth, length});
  return sfc::Topology::build(dcs, links);
}

// Three VNFs with 1 ms execution; every service runs chain {0,1,2}.
inline sfc::Catalog small_catalog(double budget = 0.05, double probability = 0.0, double bandwidth = 1.0) {
  std::vector<sfc::VnfType> vnfs = {{0, "a", 2e9, 4.0, 0.001}, {1, "b", 2e9, 4.0, 0.001}, {2, "c", 2e9, 4.0, 0.001}};
  std::vector<sfc::ServiceType> services;
  for (sfc::ServiceClass s : sfc::kServiceClasses) services.push_back({s, {0, 1, 2}, bandwidth, budget, 1, probability});
  return sfc::Catalog(vnfs, services);
}

}  // namespace testing
