#include "sfc/catalog.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"
#include "sfc/rng.hpp"

namespace sfc {

std::string_view service_name(ServiceClass s) {
  switch (s) {
    case ServiceClass::CG: return "CG";
    case ServiceClass::AR: return "AR";
    case ServiceClass::VS: return "VS";
    case ServiceClass::VoIP: return "VoIP";
    case ServiceClass::MIoT: return "MIoT";
    case ServiceClass::In4: return "In4";
  }
  return "?";
}

std::optional<ServiceClass> parse_service(std::string_view name) {
  for (auto s : kServiceClasses)
    if (service_name(s) == name) return s;
  return std::nullopt;
}

Catalog::Catalog(std::vector<VnfType> vnfs, std::vector<ServiceType> services) {
  std::set<VnfId> ids;
  for (const auto& v : vnfs) {
    if (!ids.insert(v.id).second)
      throw Error(Errc::DuplicateId, "VNF type id " + std::to_string(v.id) + " appears twice");
    if (!(v.cpu_demand > 0.0) || !(v.storage_demand > 0.0) || !(v.execution_time >= 0.0))
      throw Error(Errc::ParseError, "VNF type " + std::to_string(v.id) + " has invalid demands");
  }
  std::sort(vnfs.begin(), vnfs.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
  vnfs_ = std::move(vnfs);

  services_.resize(kServiceClasses.size());
  std::vector<bool> present(kServiceClasses.size(), false);
  for (auto& s : services) {
    const auto slot = static_cast<std::size_t>(s.service);
    const std::string name(service_name(s.service));
    if (present[slot]) throw Error(Errc::DuplicateId, "service " + name + " appears twice");
    if (s.chain.empty()) throw Error(Errc::ParseError, "service " + name + " has an empty chain");
    for (VnfId v : s.chain) {
      if (!ids.count(v))
        throw Error(Errc::UnknownVnfReference,
                    "service " + name + " references VNF id " + std::to_string(v));
    }
    if (!(s.bandwidth > 0.0) || !(s.delay_budget > 0.0) || s.bundle_size < 1 ||
        !(s.arrival_probability >= 0.0 && s.arrival_probability <= 1.0))
      throw Error(Errc::ParseError, "service " + name + " has invalid parameters");
    present[slot] = true;
    services_[slot] = std::move(s);
  }
  for (auto sc : kServiceClasses) {
    if (!present[static_cast<std::size_t>(sc)])
      throw Error(Errc::MissingServiceClass, "catalog lacks service " + std::string(service_name(sc)));
  }
}

std::size_t Catalog::vnf_index(VnfId id) const {
  auto it = std::lower_bound(vnfs_.begin(), vnfs_.end(), id,
                             [](const VnfType& v, VnfId x) { return v.id < x; });
  if (it == vnfs_.end() || it->id != id)
    throw Error(Errc::UnknownVnfReference, "unknown VNF id " + std::to_string(id));
  return static_cast<std::size_t>(it - vnfs_.begin());
}

const VnfType& Catalog::vnf(VnfId id) const { return vnfs_[vnf_index(id)]; }

Catalog catalog_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("vnfs") || !j.contains("services"))
    throw Error(Errc::ParseError, "catalog needs 'vnfs' and 'services'");
  std::vector<VnfType> vnfs;
  for (const auto& v : j.at("vnfs")) {
    vnfs.push_back({require<int>(v, "id"), v.value("name", std::string{}),
                    require<double>(v, "cpu_demand"), require<double>(v, "storage_demand"),
                    require<double>(v, "execution_time")});
  }
  std::vector<ServiceType> services;
  for (const auto& s : j.at("services")) {
    const auto name = require<std::string>(s, "name");
    const auto cls = parse_service(name);
    if (!cls) throw Error(Errc::ParseError, "unknown service class '" + name + "'");
    services.push_back({*cls, require<std::vector<int>>(s, "chain"), require<double>(s, "bandwidth"),
                        require<double>(s, "delay_budget"), require<int>(s, "bundle_size"),
                        require<double>(s, "arrival_probability")});
  }
  return Catalog(std::move(vnfs), std::move(services));
}

nlohmann::json catalog_to_json(const Catalog& c) {
  nlohmann::json j;
  j["vnfs"] = nlohmann::json::array();
  for (const auto& v : c.vnfs())
    j["vnfs"].push_back({{"id", v.id},
                         {"name", v.name},
                         {"cpu_demand", v.cpu_demand},
                         {"storage_demand", v.storage_demand},
                         {"execution_time", v.execution_time}});
  j["services"] = nlohmann::json::array();
  for (const auto& s : c.services())
    j["services"].push_back({{"name", std::string(service_name(s.service))},
                             {"chain", s.chain},
                             {"bandwidth", s.bandwidth},
                             {"delay_budget", s.delay_budget},
                             {"bundle_size", s.bundle_size},
                             {"arrival_probability", s.arrival_probability}});
  return j;
}

Catalog load_catalog(const std::filesystem::path& path) { return catalog_from_json(read_json(path)); }

std::vector<Request> generate_requests(const Catalog& catalog, const std::vector<DcId>& dcs,
                                       std::int64_t horizon, std::uint64_t seed) {
  std::vector<Request> out;
  if (horizon <= 0 || dcs.empty()) return out;
  Rng rng(derive_seed(seed, {hash_tag("requests")}));
  const std::uint64_t n = dcs.size();
  int next_id = 0;
  for (std::int64_t t = 0; t < horizon; ++t) {
    for (const auto& s : catalog.services()) {
      if (!rng.bernoulli(s.arrival_probability)) continue;
      for (int b = 0; b < s.bundle_size; ++b) {
        Request r;
        r.id = next_id++;
        r.service = s.service;
        r.arrival_time = t;
        r.remaining_budget = s.delay_budget;
        if (n == 1) {
          r.src_dc = r.dst_dc = dcs[0];
        } else {
          const std::uint64_t a = rng.below(n);
          std::uint64_t b2 = rng.below(n - 1);
          if (b2 >= a) ++b2;
          r.src_dc = dcs[a];
          r.dst_dc = dcs[b2];
        }
        out.push_back(r);
      }
    }
  }
  return out;
}

std::string requests_to_csv(const std::vector<Request>& requests) {
  std::ostringstream os;
  os << "request_id,service,arrival,src,dst\n";
  for (const auto& r : requests)
    os << r.id << ',' << service_name(r.service) << ',' << r.arrival_time << ',' << r.src_dc << ','
       << r.dst_dc << '\n';
  return os.str();
}

std::uint64_t trace_digest(const std::vector<Request>& requests) { return fnv1a(requests_to_csv(requests)); }

}  // namespace sfc
