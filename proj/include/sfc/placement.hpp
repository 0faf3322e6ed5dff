#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "sfc/catalog.hpp"
#include "sfc/telemetry.hpp"
#include "sfc/topology.hpp"

namespace sfc {

enum class Tier { Waiting = 0, Predicted = 1, OnPath = 2, Fallback = 3 };
std::string_view tier_name(Tier t);

enum class PlacementPolicy { Baseline, Predictive };
std::string_view policy_name(PlacementPolicy p);
std::optional<PlacementPolicy> parse_policy(std::string_view name);

// Host-side view of one DC at decision time.
struct DcSnapshot {
  DcId id = 0;
  double cpu_capacity = 0.0;
  double storage_capacity = 0.0;
  double free_cpu = 0.0;
  double free_storage = 0.0;
  std::vector<int> installed;  // per catalog VNF index
  std::vector<int> idle;       // instances with no assigned work

  double free_fraction() const {
    return 0.5 * (free_cpu / cpu_capacity + free_storage / storage_capacity);
  }
};

struct CapacityForecast {
  std::vector<double> free_cpu;      // per DC, topology index order
  std::vector<double> free_storage;
};

// Anything that turns recent telemetry into next-step per-DC capacity.
class DcForecaster {
 public:
  virtual ~DcForecaster() = default;
  virtual std::size_t window() const = 0;
  // `history` holds exactly window() timestamps ending at the current one.
  virtual CapacityForecast forecast(const TelemetryLog& history) const = 0;
};

struct SelectionContext {
  const Topology* topology = nullptr;
  DcId current_dc = 0;
  DcId destination_dc = 0;
  std::vector<DcSnapshot> dcs;  // topology index order
  // DCs holding this request's queued work items with their accumulated waiting time.
  std::vector<std::pair<DcId, double>> waiting;
  const TelemetryLog* history = nullptr;  // may be shorter than the forecaster window
  const DcForecaster* forecaster = nullptr;
  std::array<double, 2> combiner = {0.5, 0.5};  // cpu, storage weights in tier (ii)
};

struct Candidate {
  DcId dc = 0;
  Tier tier = Tier::Fallback;
  double score = 0.0;
};

struct RankedCandidates {
  std::vector<Candidate> order;
};

RankedCandidates rank_candidates(const SelectionContext& ctx, const VnfType& vnf,
                                 const ServiceType& service);
// rank_candidates with the prediction tier unconditionally skipped.
RankedCandidates baseline_rank(const SelectionContext& ctx);

enum class HostMode { ReuseIdle, Install, JoinQueue };

struct HostChoice {
  DcId dc = 0;
  HostMode mode = HostMode::ReuseIdle;
  Tier tier = Tier::Fallback;
};

// First ranked DC with a usable instance (idle, newly installed when
// allow_install, or an existing busy one) whose link check passes.
std::optional<HostChoice> select_host(const RankedCandidates& ranked, std::size_t vnf_index,
                                      const VnfType& vnf, const std::vector<DcSnapshot>& dcs,
                                      const Topology& topology, bool allow_install,
                                      const std::function<bool(DcId)>& link_ok);

}  // namespace sfc
