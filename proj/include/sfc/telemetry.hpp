#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "sfc/topology.hpp"

namespace sfc {

class Environment;

// Column order of the telemetry CSV after (t, dc).
enum class Feature : std::size_t {
  AvailableStorage = 0,
  AvailableCpu = 1,
  LocalSfc = 2,
  GlobalSfc = 3,
  LocalVnf = 4,
  GlobalVnf = 5,
};
inline constexpr std::size_t kFeatureCount = 6;
inline constexpr std::array<const char*, kFeatureCount> kFeatureNames = {
    "avail_storage", "avail_cpu", "local_sfc", "global_sfc", "local_vnf", "global_vnf"};
inline constexpr const char* kTelemetryHeader =
    "t,dc,avail_storage,avail_cpu,local_sfc,global_sfc,local_vnf,global_vnf";

struct TelemetryRow {
  std::int64_t timestamp = 0;
  DcId dc_id = 0;
  double available_storage = 0.0;
  double available_cpu = 0.0;
  std::int64_t local_sfc_count = 0;
  std::int64_t global_sfc_count = 0;
  std::int64_t local_vnf_count = 0;
  std::int64_t global_vnf_count = 0;

  std::array<double, kFeatureCount> features() const;
};

// Dense (timestamp, dc, feature) cube with timestamps 0..steps()-1.
class TelemetryLog {
 public:
  TelemetryLog() = default;
  explicit TelemetryLog(std::vector<DcId> dcs) : dcs_(std::move(dcs)) {}

  const std::vector<DcId>& dcs() const { return dcs_; }
  std::size_t steps() const { return dcs_.empty() ? 0 : values_.size() / (dcs_.size() * kFeatureCount); }
  bool empty() const { return values_.empty(); }

  // Rows must cover every DC exactly once, in dcs() order, for timestamp steps().
  void append(const std::vector<TelemetryRow>& rows);

  double at(std::size_t t, std::size_t dc, std::size_t f) const {
    return values_[(t * dcs_.size() + dc) * kFeatureCount + f];
  }
  double& at(std::size_t t, std::size_t dc, std::size_t f) {
    return values_[(t * dcs_.size() + dc) * kFeatureCount + f];
  }

  // Timestamps [begin, end) re-based to start at 0.
  TelemetryLog slice(std::size_t begin, std::size_t end) const;
  TelemetryLog tail(std::size_t count) const;
  TelemetryLog downsample(std::size_t cadence) const;

  bool operator==(const TelemetryLog&) const = default;

 private:
  std::vector<DcId> dcs_;
  std::vector<double> values_;
};

// One row per DC describing the environment as of step t.
std::vector<TelemetryRow> record(const Environment& env, std::int64_t t);

std::string telemetry_to_csv(const TelemetryLog& log);
TelemetryLog telemetry_from_csv(const std::string& text);
// Paths ending in ".gz" are gzip-compressed.
void export_csv(const TelemetryLog& log, const std::filesystem::path& path);
TelemetryLog load_csv(const std::filesystem::path& path);

}  // namespace sfc
