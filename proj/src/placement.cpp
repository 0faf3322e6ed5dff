#include "sfc/placement.hpp"

#include <algorithm>

namespace sfc {

std::string_view tier_name(Tier t) {
  switch (t) {
    case Tier::Waiting: return "waiting";
    case Tier::Predicted: return "predicted";
    case Tier::OnPath: return "on_path";
    case Tier::Fallback: return "fallback";
  }
  return "?";
}

std::string_view policy_name(PlacementPolicy p) {
  return p == PlacementPolicy::Baseline ? "baseline" : "predictive";
}

std::optional<PlacementPolicy> parse_policy(std::string_view name) {
  if (name == "baseline") return PlacementPolicy::Baseline;
  if (name == "predictive") return PlacementPolicy::Predictive;
  return std::nullopt;
}

namespace {

RankedCandidates rank(const SelectionContext& ctx, bool use_prediction) {
  const Topology& topo = *ctx.topology;
  const std::size_t n = topo.size();
  std::vector<bool> used(n, false);
  RankedCandidates out;
  out.order.reserve(n);

  auto take = [&](DcId dc, Tier tier, double score) {
    const std::size_t i = topo.index(dc);
    if (used[i]) return;
    used[i] = true;
    out.order.push_back({dc, tier, score});
  };
  auto by_score_desc = [](const Candidate& a, const Candidate& b) {
    return a.score != b.score ? a.score > b.score : a.dc < b.dc;
  };

  // (i) DCs where this request already has work queued, longest wait first.
  std::vector<Candidate> waiting;
  for (const auto& [dc, wait] : ctx.waiting) waiting.push_back({dc, Tier::Waiting, wait});
  std::sort(waiting.begin(), waiting.end(), by_score_desc);
  for (const auto& c : waiting) take(c.dc, Tier::Waiting, c.score);

  // (ii) Forecast capacity, only with a full history window.
  if (use_prediction && ctx.forecaster && ctx.history &&
      ctx.history->steps() >= ctx.forecaster->window()) {
    const TelemetryLog window = ctx.history->tail(ctx.forecaster->window());
    const CapacityForecast fc = ctx.forecaster->forecast(window);
    std::vector<Candidate> predicted;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const auto& dc = topo.data_centers()[i];
      // Shift by what changed since the last sample (placements made this step).
      double cpu = fc.free_cpu[i], storage = fc.free_storage[i];
      if (!ctx.dcs.empty()) {
        const std::size_t last = window.steps() - 1;
        cpu += ctx.dcs[i].free_cpu - window.at(last, i, static_cast<std::size_t>(Feature::AvailableCpu));
        storage += ctx.dcs[i].free_storage - window.at(last, i, static_cast<std::size_t>(Feature::AvailableStorage));
      }
      const double score = ctx.combiner[0] * cpu / dc.cpu_capacity + ctx.combiner[1] * storage / dc.storage_capacity;
      predicted.push_back({dc.id, Tier::Predicted, score});
    }
    std::sort(predicted.begin(), predicted.end(), by_score_desc);
    for (const auto& c : predicted) take(c.dc, Tier::Predicted, c.score);
  }

  // (iii) Shortest path from the current DC toward the destination.
  const auto& path = topo.shortest_path(ctx.current_dc, ctx.destination_dc);
  for (std::size_t k = 0; k < path.size(); ++k) take(path[k], Tier::OnPath, static_cast<double>(k));

  // (iv) Everything else by current free capacity.
  std::vector<Candidate> rest;
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    rest.push_back({ctx.dcs[i].id, Tier::Fallback, ctx.dcs[i].free_fraction()});
  }
  std::sort(rest.begin(), rest.end(), by_score_desc);
  for (const auto& c : rest) take(c.dc, Tier::Fallback, c.score);
  return out;
}

}  // namespace

RankedCandidates rank_candidates(const SelectionContext& ctx, const VnfType& /*vnf*/,
                                 const ServiceType& /*service*/) {
  return rank(ctx, true);
}

RankedCandidates baseline_rank(const SelectionContext& ctx) { return rank(ctx, false); }

std::optional<HostChoice> select_host(const RankedCandidates& ranked, std::size_t vnf_index,
                                      const VnfType& vnf, const std::vector<DcSnapshot>& dcs,
                                      const Topology& topology, bool allow_install,
                                      const std::function<bool(DcId)>& link_ok) {
  for (const auto& cand : ranked.order) {
    const DcSnapshot& s = dcs[topology.index(cand.dc)];
    std::optional<HostMode> mode;
    if (s.idle[vnf_index] > 0) {
      mode = HostMode::ReuseIdle;
    } else if (allow_install && s.free_cpu >= vnf.cpu_demand && s.free_storage >= vnf.storage_demand) {
      mode = HostMode::Install;
    } else if (s.installed[vnf_index] > 0) {
      mode = HostMode::JoinQueue;
    }
    if (!mode) continue;
    if (link_ok && !link_ok(cand.dc)) continue;
    return HostChoice{cand.dc, *mode, cand.tier};
  }
  return std::nullopt;
}

}  // namespace sfc
