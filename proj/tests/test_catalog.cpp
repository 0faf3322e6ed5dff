#include <map>

#include "helpers.hpp"
#include "sfc/catalog.hpp"
#include "sfc/json_io.hpp"

using namespace sfc;

TEST_CASE("default catalog") {
  const auto c = load_catalog("config/catalog.json");
  CHECK(c.services().size() == 6);
  CHECK(c.vnfs().size() >= 5);
  for (std::size_t i = 0; i < kServiceClasses.size(); ++i) CHECK(c.services()[i].service == kServiceClasses[i]);
  // Stringent classes are 5-10x tighter than the relaxed ones.
  for (ServiceClass tight : {ServiceClass::AR, ServiceClass::MIoT, ServiceClass::In4})
    for (ServiceClass loose : {ServiceClass::CG, ServiceClass::VS, ServiceClass::VoIP}) {
      const double ratio = c.service(loose).delay_budget / c.service(tight).delay_budget;
      CHECK(ratio >= 5.0);
      CHECK(ratio <= 10.0);
    }
}

TEST_CASE("catalog validation") {
  auto j = read_json("config/catalog.json");
  SUBCASE("missing VoIP") {
    auto& s = j["services"];
    for (auto it = s.begin(); it != s.end(); ++it)
      if ((*it)["name"] == "VoIP") {
        s.erase(it);
        break;
      }
    testing::check_error(Errc::MissingServiceClass, [&] { catalog_from_json(j); });
  }
  SUBCASE("unknown vnf") {
    j["services"][0]["chain"] = {0, 99};
    testing::check_error(Errc::UnknownVnfReference, [&] { catalog_from_json(j); });
  }
  SUBCASE("round trip") {
    const auto c = catalog_from_json(j);
    CHECK(catalog_from_json(catalog_to_json(c)) == c);
  }
}

TEST_CASE("generate_requests") {
  const auto c = load_catalog("config/catalog.json");
  const std::vector<DcId> dcs = {0, 1, 2, 3};
  CHECK(generate_requests(c, dcs, 0, 1).empty());
  const auto a = generate_requests(c, dcs, 400, 1);
  CHECK(a == generate_requests(c, dcs, 400, 1));
  CHECK(a != generate_requests(c, dcs, 400, 2));

  std::map<ServiceClass, int> counts;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i > 0) CHECK(a[i - 1].arrival_time <= a[i].arrival_time);
    CHECK(a[i].src_dc != a[i].dst_dc);
    CHECK(a[i].remaining_budget == c.service(a[i].service).delay_budget);
    counts[a[i].service] += 1;
  }
  for (const auto& [s, n] : counts) CHECK(n % c.service(s).bundle_size == 0);
}
