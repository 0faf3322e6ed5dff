#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/topology.hpp"

namespace sfc {

enum class ServiceClass { CG, AR, VS, VoIP, MIoT, In4 };

inline constexpr std::array<ServiceClass, 6> kServiceClasses = {
    ServiceClass::CG, ServiceClass::AR, ServiceClass::VS,
    ServiceClass::VoIP, ServiceClass::MIoT, ServiceClass::In4};

std::string_view service_name(ServiceClass s);
std::optional<ServiceClass> parse_service(std::string_view name);

using VnfId = int;

struct VnfType {
  VnfId id = 0;
  std::string name;
  double cpu_demand = 0.0;      // kappa, cycles/s
  double storage_demand = 0.0;  // sigma, GB
  double execution_time = 0.0;  // rho, seconds per work item

  bool operator==(const VnfType&) const = default;
};

struct ServiceType {
  ServiceClass service = ServiceClass::CG;
  std::vector<VnfId> chain;
  double bandwidth = 0.0;     // Mbps between consecutive VNFs
  double delay_budget = 0.0;  // seconds
  int bundle_size = 1;        // requests per arrival event
  double arrival_probability = 0.0;  // per step

  bool operator==(const ServiceType&) const = default;
};

// Six services, always stored in kServiceClasses order.
class Catalog {
 public:
  Catalog(std::vector<VnfType> vnfs, std::vector<ServiceType> services);

  const std::vector<VnfType>& vnfs() const { return vnfs_; }
  const std::vector<ServiceType>& services() const { return services_; }

  const VnfType& vnf(VnfId id) const;
  std::size_t vnf_index(VnfId id) const;
  const ServiceType& service(ServiceClass s) const { return services_[static_cast<std::size_t>(s)]; }

  bool operator==(const Catalog&) const = default;

 private:
  std::vector<VnfType> vnfs_;
  std::vector<ServiceType> services_;
};

Catalog catalog_from_json(const nlohmann::json& j);
nlohmann::json catalog_to_json(const Catalog& c);
Catalog load_catalog(const std::filesystem::path& path);

struct Request {
  int id = 0;
  ServiceClass service = ServiceClass::CG;
  std::int64_t arrival_time = 0;  // step
  DcId src_dc = 0;
  DcId dst_dc = 0;
  double remaining_budget = 0.0;  // seconds

  bool operator==(const Request&) const = default;
};

// Bernoulli arrival events per service per step; each event yields
// bundle_size requests with independently drawn (src, dst) pairs.
std::vector<Request> generate_requests(const Catalog& catalog, const std::vector<DcId>& dcs,
                                       std::int64_t horizon, std::uint64_t seed);

std::string requests_to_csv(const std::vector<Request>& requests);
std::uint64_t trace_digest(const std::vector<Request>& requests);

}  // namespace sfc
