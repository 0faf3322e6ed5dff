#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <unordered_map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/catalog.hpp"
#include "sfc/placement.hpp"
#include "sfc/telemetry.hpp"
#include "sfc/topology.hpp"

namespace sfc {

struct EnvConfig {
  double step_seconds = 1e-3;
  std::int64_t unnecessary_window = 10;  // U: recent-use window for uninstall penalty
  bool auto_install = true;              // placement may install instances itself
  std::int64_t idle_timeout = 2;         // steps before idle instances are removed; 0 keeps them
  std::int64_t horizon = 5000;           // arrival window; the episode drains afterwards
  std::int64_t telemetry_cadence = 1;
  PlacementPolicy policy = PlacementPolicy::Baseline;
  std::array<double, 2> combiner = {0.5, 0.5};
};

EnvConfig env_config_from_json(const nlohmann::json& j);
nlohmann::json env_config_to_json(const EnvConfig& c);

// Slack on delay-budget and capacity comparisons; the quantities are
// sums of floating-point terms that are exact only up to rounding.
inline constexpr double kDelayTolerance = 1e-9;
inline constexpr double kCapacityTolerance = 1e-9;

struct Instance {
  int uid = 0;
  VnfId vnf = 0;
  DcId dc = 0;
  bool alive = true;
  int refs = 0;  // work items assigned and not finished
  std::deque<std::pair<int, int>> queue;  // (request slot, position)
  std::optional<std::pair<int, int>> in_service;
  std::int64_t remaining_steps = 0;
  std::int64_t last_used = 0;
};

struct DcRuntimeState {
  DcId id = 0;
  std::vector<int> installed;  // x_i^v per catalog VNF index
  double free_cpu = 0.0;
  double free_storage = 0.0;
  std::vector<int> instances;  // uids of alive instances
};

enum class RequestStatus { NotArrived, Pending, InFlight, Served, Dropped };

enum class StageState { Unplaced, Assigned, Transit, Queued, InService, Done };

struct Stage {
  std::optional<DcId> dc;  // y_i^{f_k}
  int instance = -1;
  StageState state = StageState::Unplaced;
  std::int64_t deliver_step = 0;
  double waiting = 0.0;  // w, seconds
};

struct SfcProgress {
  Request request;
  std::vector<Stage> stages;
  std::size_t next_position = 0;  // first unplaced chain position
  double accrued_prop_delay = 0.0;
  double accrued_proc_delay = 0.0;
  RequestStatus status = RequestStatus::NotArrived;
  std::int64_t finish_step = -1;
  std::vector<int> committed_links;  // one entry per committed (link, b^s) unit
};

struct Action {
  enum class Kind { Wait, Allocate, Uninstall };
  Kind kind = Kind::Wait;
  VnfId vnf = 0;
  DcId dc = 0;

  static Action wait() { return {}; }
  static Action allocate(VnfId v, DcId d) { return {Kind::Allocate, v, d}; }
  static Action uninstall(VnfId v, DcId d) { return {Kind::Uninstall, v, d}; }
  bool operator==(const Action&) const = default;
};

using Observation = std::vector<double>;

struct StepInfo {
  std::int64_t served = 0;
  std::int64_t dropped = 0;
  std::int64_t invalid = 0;
  std::int64_t uninstalls = 0;
  std::int64_t installs = 0;
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

namespace reward {
inline constexpr double kServed = 2.0;
inline constexpr double kDropped = -1.5;
inline constexpr double kInvalid = -1.0;
inline constexpr double kUnnecessaryUninstall = -0.5;
}  // namespace reward

struct EventRecord {
  std::int64_t step = 0;
  std::string event;  // arrive, admit, serve, drop, install, uninstall, invalid
  int request_id = -1;
  std::optional<ServiceClass> service;
  std::optional<DcId> dc;
  double reward = 0.0;
};

struct DecisionRecord {
  std::int64_t step = 0;
  int request_id = 0;
  VnfId vnf = 0;
  DcId chosen_dc = 0;
  Tier tier = Tier::Fallback;
};

// Discrete-time SFC provisioning simulator. Not thread-safe; one instance
// per thread.
class Environment {
 public:
  Environment(Topology topology, Catalog catalog, EnvConfig config = {});

  Observation reset(std::vector<Request> requests, std::uint64_t seed);
  StepOutcome step(const Action& action);

  bool done() const { return done_; }
  std::int64_t now() const { return now_; }
  std::uint64_t seed() const { return seed_; }

  const Topology& topology() const { return topology_; }
  const Catalog& catalog() const { return catalog_; }
  const EnvConfig& config() const { return config_; }

  // Flattened action space: Wait, then Allocate(v, d), then Uninstall(v, d).
  std::size_t action_count() const;
  Action action_at(std::size_t index) const;
  std::size_t action_index(const Action& a) const;
  // Wait always; Allocate when capacity allows; Uninstall when an idle instance exists.
  std::vector<bool> feasible_mask() const;

  Observation observe() const;
  std::size_t observation_size() const;

  // Would committing b^s for hop (i, j) keep every routed link within B?
  bool check_bandwidth(const SfcProgress& progress, std::size_t k, DcId i, DcId j) const;
  // d_prop + d_proc of a served request.
  static double e2e_delay(const SfcProgress& progress);
  double e2e_delay(int request_id) const;

  const std::vector<DcRuntimeState>& dc_states() const { return dcs_; }
  const std::vector<Instance>& instances() const { return instances_; }
  const std::vector<SfcProgress>& progress() const { return progress_; }
  const SfcProgress& request_progress(int request_id) const;
  const std::vector<double>& link_loads() const { return link_load_; }
  const TelemetryLog& telemetry() const { return telemetry_; }
  const std::vector<EventRecord>& events() const { return events_; }
  const std::vector<DecisionRecord>& decisions() const { return decisions_; }
  const StepInfo& info() const { return info_; }

  void set_forecaster(std::shared_ptr<const DcForecaster> forecaster) { forecaster_ = std::move(forecaster); }

  // Capacity, assignment, link-load and delay-budget sweeps. Throws
  // InvariantViolation naming the first broken invariant.
  void check_invariants() const;

 private:
  double apply_action(const Action& a);
  int install(std::size_t dc_index, VnfId vnf);
  void remove_instance(int uid);
  std::vector<DcSnapshot> snapshots() const;
  bool try_place(int slot);
  void complete_stage(int slot, std::size_t k, double& reward);
  void finish(int slot, bool served, double& reward);
  double delay_lower_bound(const SfcProgress& p) const;
  bool link_ok(double bandwidth, DcId i, DcId j, const std::vector<double>& extra) const;
  void log_event(const std::string& event, int slot, std::optional<DcId> dc, double r);

  Topology topology_;
  Catalog catalog_;
  EnvConfig config_;
  std::vector<std::int64_t> service_steps_;  // per VNF index
  std::vector<double> vnf_exec_;              // rho per VNF index

  std::uint64_t seed_ = 0;
  std::int64_t now_ = 0;
  bool done_ = false;
  std::vector<DcRuntimeState> dcs_;
  std::vector<Instance> instances_;
  std::vector<SfcProgress> progress_;
  std::size_t next_arrival_ = 0;
  std::vector<int> active_;  // Pending/InFlight slots, ascending
  std::vector<double> link_load_;
  std::unordered_map<int, int> slot_of_;
  StepInfo info_;
  TelemetryLog telemetry_;
  std::vector<EventRecord> events_;
  std::vector<DecisionRecord> decisions_;
  std::shared_ptr<const DcForecaster> forecaster_;
};

std::string events_to_csv(const std::vector<EventRecord>& events);
std::string decisions_to_csv(const std::vector<DecisionRecord>& decisions);

}  // namespace sfc
