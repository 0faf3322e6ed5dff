#include "sfc/topology.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"

namespace sfc {

namespace {

// Path delays are sums of l/c terms; sums taken in different orders may
// differ in the last bits, so equal-cost comparison carries a tolerance.
bool delay_less(double a, double b) { return a < b - 1e-12 * std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace

Topology Topology::build(std::vector<DataCenterSpec> dcs, std::vector<LinkSpec> links) {
  if (dcs.empty()) throw Error(Errc::ConfigError, "topology needs at least one data center");
  Topology t;
  std::set<DcId> seen;
  for (const auto& dc : dcs) {
    if (!seen.insert(dc.id).second)
      throw Error(Errc::DuplicateId, "data center id " + std::to_string(dc.id) + " appears twice");
    if (!(dc.cpu_capacity > 0.0) || !(dc.storage_capacity > 0.0))
      throw Error(Errc::ConfigError, "data center " + std::to_string(dc.id) + " needs positive capacities");
  }
  std::sort(dcs.begin(), dcs.end(), [](const auto& x, const auto& y) { return x.id < y.id; });
  t.dcs_ = std::move(dcs);

  const std::size_t n = t.dcs_.size();
  t.link_matrix_.assign(n * n, -1);
  for (const auto& l : links) {
    for (DcId end : {l.a, l.b}) {
      if (!seen.count(end))
        throw Error(Errc::DanglingLink, "link (" + std::to_string(l.a) + "," + std::to_string(l.b) +
                                            ") references unknown data center " + std::to_string(end));
    }
    const std::string name = "link (" + std::to_string(l.a) + "," + std::to_string(l.b) + ")";
    if (l.a == l.b) throw Error(Errc::ConfigError, name + " is a self loop");
    if (!(l.bandwidth > 0.0)) throw Error(Errc::ConfigError, name + " needs positive bandwidth");
    if (!(l.fiber_length >= 0.0)) throw Error(Errc::ConfigError, name + " has negative fiber length");
    const std::size_t ia = t.index(l.a), ib = t.index(l.b);
    if (t.link_matrix_[ia * n + ib] >= 0)
      throw Error(Errc::DuplicateId, name + " is declared twice");
    const int idx = static_cast<int>(t.links_.size());
    t.link_matrix_[ia * n + ib] = idx;
    t.link_matrix_[ib * n + ia] = idx;
    t.links_.push_back(l);
  }

  // Connectivity by BFS from the first DC.
  std::vector<bool> reached(n, false);
  std::queue<std::size_t> frontier;
  reached[0] = true;
  frontier.push(0);
  while (!frontier.empty()) {
    const std::size_t u = frontier.front();
    frontier.pop();
    for (std::size_t v = 0; v < n; ++v) {
      if (!reached[v] && t.link_matrix_[u * n + v] >= 0) {
        reached[v] = true;
        frontier.push(v);
      }
    }
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (!reached[v])
      throw Error(Errc::DisconnectedGraph,
                  "data center " + std::to_string(t.dcs_[v].id) + " is unreachable");
  }

  t.compute_paths();
  return t;
}

std::vector<DcId> Topology::ids() const {
  std::vector<DcId> out;
  out.reserve(dcs_.size());
  for (const auto& dc : dcs_) out.push_back(dc.id);
  return out;
}

bool Topology::contains(DcId id) const {
  auto it = std::lower_bound(dcs_.begin(), dcs_.end(), id,
                             [](const DataCenterSpec& dc, DcId v) { return dc.id < v; });
  return it != dcs_.end() && it->id == id;
}

std::size_t Topology::index(DcId id) const {
  auto it = std::lower_bound(dcs_.begin(), dcs_.end(), id,
                             [](const DataCenterSpec& dc, DcId v) { return dc.id < v; });
  if (it == dcs_.end() || it->id != id)
    throw Error(Errc::ConfigError, "unknown data center id " + std::to_string(id));
  return static_cast<std::size_t>(it - dcs_.begin());
}

int Topology::link_index(DcId i, DcId j) const {
  return link_matrix_[index(i) * size() + index(j)];
}

std::vector<DcId> Topology::neighbors(DcId id) const {
  std::vector<DcId> out;
  const std::size_t u = index(id);
  for (std::size_t v = 0; v < size(); ++v)
    if (link_matrix_[u * size() + v] >= 0) out.push_back(dcs_[v].id);
  return out;
}

double Topology::propagation_delay(DcId i, DcId j) const {
  if (i == j) {
    index(i);
    return 0.0;
  }
  const int l = link_index(i, j);
  if (l < 0)
    throw Error(Errc::NoSuchLink, "no link between " + std::to_string(i) + " and " + std::to_string(j));
  return links_[l].fiber_length / kSpeedOfLight;
}

double Topology::path_delay(std::span<const DcId> path) const {
  double total = 0.0;
  for (std::size_t k = 1; k < path.size(); ++k) total += propagation_delay(path[k - 1], path[k]);
  return total;
}

const std::vector<DcId>& Topology::shortest_path(DcId src, DcId dst) const {
  return paths_[index(src) * size() + index(dst)];
}

void Topology::compute_paths() {
  const std::size_t n = size();
  paths_.assign(n * n, {});
  for (std::size_t s = 0; s < n; ++s) {
    // Label-correcting search over (delay, id sequence) labels. Each update
    // strictly lowers a label in that order, so it terminates; graphs here
    // are small enough that the quadratic sweep is irrelevant.
    std::vector<double> dist(n, std::numeric_limits<double>::infinity());
    std::vector<std::vector<DcId>> best(n);
    dist[s] = 0.0;
    best[s] = {dcs_[s].id};
    bool changed = true;
    while (changed) {
      changed = false;
      for (std::size_t u = 0; u < n; ++u) {
        if (best[u].empty()) continue;
        for (std::size_t v = 0; v < n; ++v) {
          const int l = link_matrix_[u * n + v];
          if (l < 0) continue;
          if (std::find(best[u].begin(), best[u].end(), dcs_[v].id) != best[u].end()) continue;
          const double cand = dist[u] + links_[l].fiber_length / kSpeedOfLight;
          std::vector<DcId> path = best[u];
          path.push_back(dcs_[v].id);
          const bool better = best[v].empty() || delay_less(cand, dist[v]) ||
                              (!delay_less(dist[v], cand) && path < best[v]);
          if (better) {
            dist[v] = cand;
            best[v] = std::move(path);
            changed = true;
          }
        }
      }
    }
    for (std::size_t d = 0; d < n; ++d) paths_[s * n + d] = std::move(best[d]);
  }
}

Topology topology_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(Errc::ParseError, "topology must be an object");
  std::vector<DataCenterSpec> dcs;
  std::vector<LinkSpec> links;
  if (!j.contains("data_centers") || !j.at("data_centers").is_array())
    throw Error(Errc::ParseError, "topology needs a 'data_centers' array");
  for (const auto& d : j.at("data_centers")) {
    dcs.push_back({require<int>(d, "id"), require<double>(d, "cpu_capacity"),
                   require<double>(d, "storage_capacity")});
  }
  if (j.contains("links")) {
    for (const auto& l : j.at("links")) {
      links.push_back({require<int>(l, "a"), require<int>(l, "b"), require<double>(l, "bandwidth"),
                       require<double>(l, "fiber_length")});
    }
  }
  return Topology::build(std::move(dcs), std::move(links));
}

nlohmann::json topology_to_json(const Topology& t) {
  nlohmann::json j;
  j["data_centers"] = nlohmann::json::array();
  for (const auto& d : t.data_centers())
    j["data_centers"].push_back(
        {{"id", d.id}, {"cpu_capacity", d.cpu_capacity}, {"storage_capacity", d.storage_capacity}});
  j["links"] = nlohmann::json::array();
  for (const auto& l : t.links())
    j["links"].push_back(
        {{"a", l.a}, {"b", l.b}, {"bandwidth", l.bandwidth}, {"fiber_length", l.fiber_length}});
  return j;
}

Topology load_topology(const std::filesystem::path& path) { return topology_from_json(read_json(path)); }

}  // namespace sfc
