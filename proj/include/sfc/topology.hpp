#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

namespace sfc {

using DcId = int;

inline constexpr double kSpeedOfLight = 3.0e8;  // m/s

struct DataCenterSpec {
  DcId id = 0;
  double cpu_capacity = 0.0;      // cycles/s
  double storage_capacity = 0.0;  // GB
};

// Undirected; bandwidth is shared by both directions.
struct LinkSpec {
  DcId a = 0;
  DcId b = 0;
  double bandwidth = 0.0;     // Mbps
  double fiber_length = 0.0;  // m
};

// Immutable DC graph. DC ids are arbitrary integers; index() maps them to
// dense positions in [0, size()).
class Topology {
 public:
  static Topology build(std::vector<DataCenterSpec> dcs, std::vector<LinkSpec> links);

  std::size_t size() const { return dcs_.size(); }
  const std::vector<DataCenterSpec>& data_centers() const { return dcs_; }
  const std::vector<LinkSpec>& links() const { return links_; }
  std::vector<DcId> ids() const;

  bool contains(DcId id) const;
  std::size_t index(DcId id) const;
  const DataCenterSpec& dc(DcId id) const { return dcs_[index(id)]; }

  // Link index for (i, j) in either orientation, or -1.
  int link_index(DcId i, DcId j) const;
  std::vector<DcId> neighbors(DcId id) const;

  // l_ij / c; zero when i == j. Throws NoSuchLink for non-adjacent pairs.
  double propagation_delay(DcId i, DcId j) const;

  // Minimum cumulative propagation delay; ties go to the lexicographically
  // smallest id sequence.
  const std::vector<DcId>& shortest_path(DcId src, DcId dst) const;
  double path_delay(std::span<const DcId> path) const;

 private:
  Topology() = default;
  void compute_paths();

  std::vector<DataCenterSpec> dcs_;
  std::vector<LinkSpec> links_;
  std::vector<int> link_matrix_;            // size()^2, -1 when absent
  std::vector<std::vector<DcId>> paths_;    // size()^2
};

Topology topology_from_json(const nlohmann::json& j);
nlohmann::json topology_to_json(const Topology& t);
Topology load_topology(const std::filesystem::path& path);

}  // namespace sfc
