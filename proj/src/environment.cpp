#include "sfc/environment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sfc/error.hpp"

namespace sfc {

EnvConfig env_config_from_json(const nlohmann::json& j) {
  EnvConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw Error(Errc::ConfigError, "environment section must be an object");
  c.step_seconds = j.value("step_seconds", c.step_seconds);
  c.unnecessary_window = j.value("unnecessary_window", c.unnecessary_window);
  c.auto_install = j.value("auto_install", c.auto_install);
  c.idle_timeout = j.value("idle_timeout", c.idle_timeout);
  c.horizon = j.value("horizon", c.horizon);
  c.telemetry_cadence = j.value("telemetry_cadence", c.telemetry_cadence);
  if (j.contains("policy")) {
    const auto p = parse_policy(j.at("policy").get<std::string>());
    if (!p) throw Error(Errc::ConfigError, "unknown placement policy");
    c.policy = *p;
  }
  if (j.contains("combiner")) c.combiner = j.at("combiner").get<std::array<double, 2>>();
  if (!(c.step_seconds > 0.0) || c.horizon < 0 || c.telemetry_cadence < 1 || c.idle_timeout < 0 ||
      c.unnecessary_window < 0)
    throw Error(Errc::ConfigError, "invalid environment parameters");
  return c;
}

nlohmann::json env_config_to_json(const EnvConfig& c) {
  return {{"step_seconds", c.step_seconds},
          {"unnecessary_window", c.unnecessary_window},
          {"auto_install", c.auto_install},
          {"idle_timeout", c.idle_timeout},
          {"horizon", c.horizon},
          {"telemetry_cadence", c.telemetry_cadence},
          {"policy", std::string(policy_name(c.policy))},
          {"combiner", c.combiner}};
}

Environment::Environment(Topology topology, Catalog catalog, EnvConfig config)
    : topology_(std::move(topology)), catalog_(std::move(catalog)), config_(config) {
  for (const auto& v : catalog_.vnfs()) {
    service_steps_.push_back(
        std::max<std::int64_t>(1, std::llround(v.execution_time / config_.step_seconds)));
    vnf_exec_.push_back(v.execution_time);
  }
  reset({}, 0);
}

Observation Environment::reset(std::vector<Request> requests, std::uint64_t seed) {
  std::stable_sort(requests.begin(), requests.end(), [](const Request& a, const Request& b) {
    return a.arrival_time != b.arrival_time ? a.arrival_time < b.arrival_time : a.id < b.id;
  });
  seed_ = seed;
  now_ = 0;
  done_ = false;
  dcs_.clear();
  for (const auto& d : topology_.data_centers()) {
    DcRuntimeState s;
    s.id = d.id;
    s.installed.assign(catalog_.vnfs().size(), 0);
    s.free_cpu = d.cpu_capacity;
    s.free_storage = d.storage_capacity;
    dcs_.push_back(std::move(s));
  }
  instances_.clear();
  progress_.clear();
  slot_of_.clear();
  for (const auto& r : requests) {
    SfcProgress p;
    p.request = r;
    p.stages.resize(catalog_.service(r.service).chain.size());
    slot_of_[r.id] = static_cast<int>(progress_.size());
    progress_.push_back(std::move(p));
  }
  next_arrival_ = 0;
  active_.clear();
  link_load_.assign(topology_.links().size(), 0.0);
  info_ = {};
  telemetry_ = TelemetryLog(topology_.ids());
  events_.clear();
  decisions_.clear();
  return observe();
}

// ---------------------------------------------------------------- actions

std::size_t Environment::action_count() const {
  return 1 + 2 * catalog_.vnfs().size() * topology_.size();
}

Action Environment::action_at(std::size_t index) const {
  const std::size_t block = catalog_.vnfs().size() * topology_.size();
  if (index == 0) return Action::wait();
  if (index > 2 * block) throw Error(Errc::ShapeMismatch, "action index out of range");
  const std::size_t rel = (index - 1) % block;
  const VnfId v = catalog_.vnfs()[rel / topology_.size()].id;
  const DcId d = topology_.data_centers()[rel % topology_.size()].id;
  return index <= block ? Action::allocate(v, d) : Action::uninstall(v, d);
}

std::size_t Environment::action_index(const Action& a) const {
  if (a.kind == Action::Kind::Wait) return 0;
  const std::size_t block = catalog_.vnfs().size() * topology_.size();
  const std::size_t rel = catalog_.vnf_index(a.vnf) * topology_.size() + topology_.index(a.dc);
  return 1 + rel + (a.kind == Action::Kind::Uninstall ? block : 0);
}

std::vector<bool> Environment::feasible_mask() const {
  std::vector<bool> mask(action_count(), false);
  mask[0] = true;
  const std::size_t nd = topology_.size();
  const std::size_t block = catalog_.vnfs().size() * nd;
  for (std::size_t vi = 0; vi < catalog_.vnfs().size(); ++vi) {
    const auto& v = catalog_.vnfs()[vi];
    for (std::size_t di = 0; di < nd; ++di) {
      const auto& s = dcs_[di];
      mask[1 + vi * nd + di] = s.free_cpu + kCapacityTolerance >= v.cpu_demand &&
                               s.free_storage + kCapacityTolerance >= v.storage_demand;
      bool idle = false;
      for (int uid : s.instances) {
        const auto& inst = instances_[uid];
        if (inst.vnf == v.id && inst.refs == 0) idle = true;
      }
      mask[1 + block + vi * nd + di] = idle;
    }
  }
  return mask;
}

int Environment::install(std::size_t dc_index, VnfId vnf) {
  const auto& v = catalog_.vnf(vnf);
  auto& s = dcs_[dc_index];
  Instance inst;
  inst.uid = static_cast<int>(instances_.size());
  inst.vnf = vnf;
  inst.dc = s.id;
  inst.last_used = now_;
  instances_.push_back(inst);
  s.instances.push_back(inst.uid);
  s.installed[catalog_.vnf_index(vnf)] += 1;
  s.free_cpu -= v.cpu_demand;
  s.free_storage -= v.storage_demand;
  ++info_.installs;
  log_event("install", -1, s.id, 0.0);
  return inst.uid;
}

void Environment::remove_instance(int uid) {
  Instance& inst = instances_[uid];
  auto& s = dcs_[topology_.index(inst.dc)];
  inst.alive = false;
  s.instances.erase(std::find(s.instances.begin(), s.instances.end(), uid));
  s.installed[catalog_.vnf_index(inst.vnf)] -= 1;
  // Recompute from the ledger so repeated install/remove cycles cannot drift.
  double cpu = topology_.dc(s.id).cpu_capacity, storage = topology_.dc(s.id).storage_capacity;
  for (std::size_t vi = 0; vi < s.installed.size(); ++vi) {
    cpu -= s.installed[vi] * catalog_.vnfs()[vi].cpu_demand;
    storage -= s.installed[vi] * catalog_.vnfs()[vi].storage_demand;
  }
  s.free_cpu = cpu;
  s.free_storage = storage;
}

double Environment::apply_action(const Action& a) {
  if (a.kind == Action::Kind::Wait) return 0.0;
  const bool ids_ok = topology_.contains(a.dc) &&
                      std::any_of(catalog_.vnfs().begin(), catalog_.vnfs().end(),
                                  [&](const VnfType& v) { return v.id == a.vnf; });
  auto invalid = [&]() {
    ++info_.invalid;
    log_event("invalid", -1, ids_ok ? std::optional<DcId>(a.dc) : std::nullopt, reward::kInvalid);
    return reward::kInvalid;
  };
  if (!ids_ok) return invalid();
  const std::size_t di = topology_.index(a.dc);
  const auto& v = catalog_.vnf(a.vnf);

  if (a.kind == Action::Kind::Allocate) {
    const auto& s = dcs_[di];
    if (s.free_cpu + kCapacityTolerance < v.cpu_demand || s.free_storage + kCapacityTolerance < v.storage_demand)
      return invalid();
    install(di, a.vnf);
    return 0.0;
  }

  // Uninstall: prefer an idle instance outside the recent-use window.
  int stale = -1, recent = -1, any = -1;
  for (int uid : dcs_[di].instances) {
    const auto& inst = instances_[uid];
    if (inst.vnf != a.vnf) continue;
    if (any < 0) any = uid;
    if (inst.refs > 0) continue;
    if (now_ - inst.last_used >= config_.unnecessary_window) {
      if (stale < 0) stale = uid;
    } else if (recent < 0) {
      recent = uid;
    }
  }
  if (any < 0) return invalid();
  if (stale >= 0) {
    remove_instance(stale);
    ++info_.uninstalls;
    log_event("uninstall", -1, a.dc, 0.0);
    return 0.0;
  }
  if (recent >= 0) {
    remove_instance(recent);
    ++info_.uninstalls;
  }
  log_event("uninstall", -1, a.dc, reward::kUnnecessaryUninstall);
  return reward::kUnnecessaryUninstall;
}

// ------------------------------------------------------------- placement

std::vector<DcSnapshot> Environment::snapshots() const {
  std::vector<DcSnapshot> out;
  out.reserve(dcs_.size());
  for (std::size_t di = 0; di < dcs_.size(); ++di) {
    const auto& s = dcs_[di];
    const auto& spec = topology_.data_centers()[di];
    DcSnapshot snap;
    snap.id = s.id;
    snap.cpu_capacity = spec.cpu_capacity;
    snap.storage_capacity = spec.storage_capacity;
    snap.free_cpu = s.free_cpu + kCapacityTolerance;
    snap.free_storage = s.free_storage + kCapacityTolerance;
    snap.installed = s.installed;
    snap.idle.assign(s.installed.size(), 0);
    for (int uid : s.instances) {
      const auto& inst = instances_[uid];
      if (inst.refs == 0) snap.idle[catalog_.vnf_index(inst.vnf)] += 1;
    }
    out.push_back(std::move(snap));
  }
  return out;
}

bool Environment::link_ok(double bandwidth, DcId i, DcId j, const std::vector<double>& extra) const {
  if (i == j) return true;
  const auto& path = topology_.shortest_path(i, j);
  for (std::size_t k = 1; k < path.size(); ++k) {
    const int l = topology_.link_index(path[k - 1], path[k]);
    const double load = link_load_[l] + (extra.empty() ? 0.0 : extra[l]);
    if (load + bandwidth > topology_.links()[l].bandwidth + kCapacityTolerance) return false;
  }
  return true;
}

bool Environment::check_bandwidth(const SfcProgress& progress, std::size_t /*k*/, DcId i, DcId j) const {
  return link_ok(catalog_.service(progress.request.service).bandwidth, i, j, {});
}

bool Environment::try_place(int slot) {
  SfcProgress& p = progress_[slot];
  const ServiceType& svc = catalog_.service(p.request.service);
  const std::size_t k = p.next_position;
  const VnfId vnf_id = svc.chain[k];
  const VnfType& vnf = catalog_.vnf(vnf_id);
  const std::size_t vi = catalog_.vnf_index(vnf_id);

  SelectionContext ctx;
  ctx.topology = &topology_;
  ctx.current_dc = k == 0 ? p.request.src_dc : *p.stages[k - 1].dc;
  ctx.destination_dc = p.request.dst_dc;
  ctx.dcs = snapshots();
  if (k > 0 && p.stages[k - 1].state == StageState::Queued)
    ctx.waiting.push_back({*p.stages[k - 1].dc, p.stages[k - 1].waiting});
  ctx.combiner = config_.combiner;
  if (config_.policy == PlacementPolicy::Predictive) {
    ctx.history = &telemetry_;
    ctx.forecaster = forecaster_.get();
  }
  const RankedCandidates ranked = config_.policy == PlacementPolicy::Predictive
                                       ? rank_candidates(ctx, vnf, svc)
                                       : baseline_rank(ctx);
  const auto choice = select_host(ranked, vi, vnf, ctx.dcs, topology_, config_.auto_install,
                                  [&](DcId d) {
                                    return k == 0 || link_ok(svc.bandwidth, ctx.current_dc, d, {});
                                  });
  if (!choice) return false;

  const std::size_t di = topology_.index(choice->dc);
  int uid = -1;
  switch (choice->mode) {
    case HostMode::ReuseIdle:
      for (int u : dcs_[di].instances)
        if (instances_[u].vnf == vnf_id && instances_[u].refs == 0) {
          uid = u;
          break;
        }
      break;
    case HostMode::Install:
      uid = install(di, vnf_id);
      break;
    case HostMode::JoinQueue:
      for (int u : dcs_[di].instances) {
        if (instances_[u].vnf != vnf_id) continue;
        if (uid < 0 || instances_[u].refs < instances_[uid].refs) uid = u;
      }
      break;
  }
  Instance& inst = instances_[uid];
  inst.refs += 1;

  Stage& st = p.stages[k];
  st.dc = choice->dc;
  st.instance = uid;
  if (k > 0 && choice->dc != ctx.current_dc) {
    const auto& path = topology_.shortest_path(ctx.current_dc, choice->dc);
    for (std::size_t h = 1; h < path.size(); ++h) {
      const int l = topology_.link_index(path[h - 1], path[h]);
      link_load_[l] += svc.bandwidth;
      p.committed_links.push_back(l);
    }
  }
  const bool ready = k == 0 || p.stages[k - 1].state == StageState::Done;
  if (k == 0) {
    st.state = StageState::Queued;
    inst.queue.push_back({slot, 0});
    p.status = RequestStatus::InFlight;
    log_event("admit", slot, choice->dc, 0.0);
  } else if (ready) {
    const double tau = topology_.path_delay(topology_.shortest_path(ctx.current_dc, choice->dc));
    p.accrued_prop_delay += tau;
    st.state = StageState::Transit;
    st.deliver_step = now_ + std::max<std::int64_t>(1, static_cast<std::int64_t>(
                                                           std::ceil(tau / config_.step_seconds - 1e-9)));
  } else {
    st.state = StageState::Assigned;
  }
  p.next_position = k + 1;
  decisions_.push_back({now_, p.request.id, vnf_id, choice->dc, choice->tier});
  return true;
}

// --------------------------------------------------------------- stepping

void Environment::log_event(const std::string& event, int slot, std::optional<DcId> dc, double r) {
  EventRecord e;
  e.step = now_;
  e.event = event;
  if (slot >= 0) {
    e.request_id = progress_[slot].request.id;
    e.service = progress_[slot].request.service;
  }
  e.dc = dc;
  e.reward = r;
  events_.push_back(std::move(e));
}

double Environment::e2e_delay(const SfcProgress& progress) {
  if (progress.status != RequestStatus::Served)
    throw Error(Errc::IncompleteRequest,
                "request " + std::to_string(progress.request.id) + " was not served");
  return progress.accrued_prop_delay + progress.accrued_proc_delay;
}

double Environment::e2e_delay(int request_id) const {
  return e2e_delay(request_progress(request_id));
}

const SfcProgress& Environment::request_progress(int request_id) const {
  auto it = slot_of_.find(request_id);
  if (it == slot_of_.end())
    throw Error(Errc::IncompleteRequest, "unknown request " + std::to_string(request_id));
  return progress_[it->second];
}

double Environment::delay_lower_bound(const SfcProgress& p) const {
  const ServiceType& svc = catalog_.service(p.request.service);
  double bound = p.accrued_prop_delay + p.accrued_proc_delay;
  for (std::size_t k = 0; k < p.stages.size(); ++k) {
    const Stage& st = p.stages[k];
    if (st.state == StageState::Done) continue;
    bound += st.waiting + vnf_exec_[catalog_.vnf_index(svc.chain[k])];
    // Hops not yet travelled whose endpoints are both known.
    if (k > 0 && st.state == StageState::Assigned && p.stages[k - 1].dc && st.dc)
      bound += topology_.path_delay(topology_.shortest_path(*p.stages[k - 1].dc, *st.dc));
  }
  return bound;
}

void Environment::finish(int slot, bool served, double& r) {
  SfcProgress& p = progress_[slot];
  for (std::size_t k = 0; k < p.stages.size(); ++k) {
    Stage& st = p.stages[k];
    if (st.instance < 0 || st.state == StageState::Done) continue;
    Instance& inst = instances_[st.instance];
    if (st.state == StageState::Queued) {
      auto it = std::find(inst.queue.begin(), inst.queue.end(), std::pair<int, int>{slot, static_cast<int>(k)});
      if (it != inst.queue.end()) inst.queue.erase(it);
    } else if (st.state == StageState::InService) {
      inst.in_service.reset();
      inst.remaining_steps = 0;
    }
    inst.refs -= 1;
    inst.last_used = now_;
  }
  for (int l : p.committed_links) link_load_[l] -= catalog_.service(p.request.service).bandwidth;
  for (int l : p.committed_links) {
    if (std::abs(link_load_[l]) < 1e-9) link_load_[l] = 0.0;
  }
  p.committed_links.clear();
  p.finish_step = now_;
  if (served) {
    p.status = RequestStatus::Served;
    ++info_.served;
    r += reward::kServed;
    log_event("serve", slot, p.stages.back().dc, reward::kServed);
  } else {
    p.status = RequestStatus::Dropped;
    ++info_.dropped;
    r += reward::kDropped;
    log_event("drop", slot, std::nullopt, reward::kDropped);
  }
  active_.erase(std::find(active_.begin(), active_.end(), slot));
}

void Environment::complete_stage(int slot, std::size_t k, double& r) {
  SfcProgress& p = progress_[slot];
  const ServiceType& svc = catalog_.service(p.request.service);
  Stage& st = p.stages[k];
  Instance& inst = instances_[st.instance];
  inst.in_service.reset();
  inst.refs -= 1;
  inst.last_used = now_;
  st.state = StageState::Done;
  p.accrued_proc_delay += st.waiting + vnf_exec_[catalog_.vnf_index(svc.chain[k])];

  if (k + 1 == p.stages.size()) {
    const double delay = p.accrued_prop_delay + p.accrued_proc_delay;
    finish(slot, delay <= svc.delay_budget + kDelayTolerance, r);
    return;
  }
  Stage& next = p.stages[k + 1];
  if (next.state == StageState::Assigned) {
    const double tau = topology_.path_delay(topology_.shortest_path(*st.dc, *next.dc));
    p.accrued_prop_delay += tau;
    next.state = StageState::Transit;
    next.deliver_step = now_ + std::max<std::int64_t>(
                                   1, static_cast<std::int64_t>(std::ceil(tau / config_.step_seconds - 1e-9)));
  }
}

StepOutcome Environment::step(const Action& action) {
  if (done_) throw Error(Errc::EpisodeFinished, "step() called after the episode ended");
  double r = apply_action(action);
  const double dt = config_.step_seconds;

  // Arrivals.
  while (next_arrival_ < progress_.size() && progress_[next_arrival_].request.arrival_time <= now_) {
    progress_[next_arrival_].status = RequestStatus::Pending;
    active_.push_back(static_cast<int>(next_arrival_));
    log_event("arrive", static_cast<int>(next_arrival_), progress_[next_arrival_].request.src_dc, 0.0);
    ++next_arrival_;
  }

  // Deliveries of work items that finished crossing a link.
  for (int slot : active_) {
    SfcProgress& p = progress_[slot];
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
      Stage& st = p.stages[k];
      if (st.state == StageState::Transit && st.deliver_step <= now_) {
        st.state = StageState::Queued;
        instances_[st.instance].queue.push_back({slot, static_cast<int>(k)});
      }
    }
  }

  // Placement of every position whose predecessor has reached its instance.
  for (int slot : active_) {
    SfcProgress& p = progress_[slot];
    while (p.next_position < p.stages.size()) {
      const std::size_t k = p.next_position;
      if (k > 0) {
        const StageState prev = p.stages[k - 1].state;
        if (prev != StageState::Queued && prev != StageState::InService && prev != StageState::Done) break;
      }
      if (!try_place(slot)) break;
    }
  }

  // Idle instances pick up the head of their queue.
  for (auto& s : dcs_) {
    for (int uid : s.instances) {
      Instance& inst = instances_[uid];
      if (inst.in_service || inst.queue.empty()) continue;
      const auto item = inst.queue.front();
      inst.queue.pop_front();
      inst.in_service = item;
      inst.remaining_steps = service_steps_[catalog_.vnf_index(inst.vnf)];
      progress_[item.first].stages[item.second].state = StageState::InService;
    }
  }

  // Waiting accrues for queued items and for positions stuck without a host.
  for (int slot : active_) {
    SfcProgress& p = progress_[slot];
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
      Stage& st = p.stages[k];
      const bool blocked = st.state == StageState::Unplaced && k == p.next_position &&
                           (k == 0 || p.stages[k - 1].state == StageState::Done);
      if (st.state == StageState::Queued || blocked) st.waiting += dt;
    }
  }

  // Service progress; completions may finish requests.
  for (auto& s : dcs_) {
    for (int uid : s.instances) {
      Instance& inst = instances_[uid];
      if (!inst.in_service) continue;
      if (--inst.remaining_steps > 0) continue;
      const auto [slot, k] = *inst.in_service;
      complete_stage(slot, static_cast<std::size_t>(k), r);
    }
  }

  // Eager drop once the budget cannot be met even in the best case.
  for (std::size_t i = 0; i < active_.size();) {
    const int slot = active_[i];
    const SfcProgress& p = progress_[slot];
    if (delay_lower_bound(p) > catalog_.service(p.request.service).delay_budget + kDelayTolerance) {
      finish(slot, false, r);
    } else {
      ++i;
    }
  }
  for (int slot : active_) {
    SfcProgress& p = progress_[slot];
    p.request.remaining_budget =
        catalog_.service(p.request.service).delay_budget - (p.accrued_prop_delay + p.accrued_proc_delay);
  }

  if (config_.auto_install && config_.idle_timeout > 0) {
    for (auto& s : dcs_) {
      std::vector<int> stale;
      for (int uid : s.instances) {
        const Instance& inst = instances_[uid];
        if (inst.refs == 0 && now_ - inst.last_used >= config_.idle_timeout) stale.push_back(uid);
      }
      for (int uid : stale) {
        remove_instance(uid);
        log_event("uninstall", -1, s.id, 0.0);
      }
    }
  }

  if (now_ % config_.telemetry_cadence == 0)
    telemetry_.append(record(*this, static_cast<std::int64_t>(telemetry_.steps())));

  ++now_;
  done_ = now_ >= config_.horizon && next_arrival_ == progress_.size() && active_.empty();

  StepOutcome out;
  out.observation = observe();
  out.reward = r;
  out.done = done_;
  out.info = info_;
  return out;
}

// ------------------------------------------------------------ observation

std::size_t Environment::observation_size() const {
  const std::size_t nv = catalog_.vnfs().size();
  const std::size_t ns = kServiceClasses.size();
  return topology_.size() * (2 * nv + 2) + 2 * ns + 2 * ns + 1 + nv;
}

Observation Environment::observe() const {
  constexpr double kCountScale = 20.0;
  auto clip = [](double x) { return std::clamp(x, 0.0, 1.0); };
  Observation obs;
  obs.reserve(observation_size());
  const std::size_t nv = catalog_.vnfs().size();

  // DC block.
  for (std::size_t di = 0; di < dcs_.size(); ++di) {
    const auto& s = dcs_[di];
    const auto& spec = topology_.data_centers()[di];
    std::vector<int> idle(nv, 0);
    for (int uid : s.instances)
      if (instances_[uid].refs == 0) idle[catalog_.vnf_index(instances_[uid].vnf)] += 1;
    for (std::size_t vi = 0; vi < nv; ++vi) {
      const auto& v = catalog_.vnfs()[vi];
      const double cap = std::max(1.0, std::floor(std::min(spec.cpu_capacity / v.cpu_demand,
                                                           spec.storage_capacity / v.storage_demand)));
      obs.push_back(clip(s.installed[vi] / cap));
      obs.push_back(clip(idle[vi] / cap));
    }
    obs.push_back(clip(s.free_cpu / spec.cpu_capacity));
    obs.push_back(clip(s.free_storage / spec.storage_capacity));
  }

  // Local progress: placed vs pending VNFs per service.
  std::vector<double> allocated(kServiceClasses.size(), 0), pending_vnfs(kServiceClasses.size(), 0);
  std::vector<double> pending_reqs(kServiceClasses.size(), 0), budget(kServiceClasses.size(), 0);
  std::vector<double> unplaced(nv, 0);
  double bandwidth = 0.0;
  for (int slot : active_) {
    const SfcProgress& p = progress_[slot];
    const auto si = static_cast<std::size_t>(p.request.service);
    const ServiceType& svc = catalog_.service(p.request.service);
    allocated[si] += static_cast<double>(p.next_position);
    pending_vnfs[si] += static_cast<double>(p.stages.size() - p.next_position);
    if (p.status == RequestStatus::Pending) {
      pending_reqs[si] += 1;
      budget[si] += p.request.remaining_budget / svc.delay_budget;
      bandwidth += svc.bandwidth;
    }
    for (std::size_t k = p.next_position; k < p.stages.size(); ++k)
      unplaced[catalog_.vnf_index(svc.chain[k])] += 1;
  }
  for (std::size_t si = 0; si < kServiceClasses.size(); ++si) {
    obs.push_back(clip(allocated[si] / kCountScale));
    obs.push_back(clip(pending_vnfs[si] / kCountScale));
  }
  // Global demand view.
  double max_bw = 0.0;
  for (const auto& l : topology_.links()) max_bw = std::max(max_bw, l.bandwidth);
  for (std::size_t si = 0; si < kServiceClasses.size(); ++si) {
    obs.push_back(clip(pending_reqs[si] / kCountScale));
    obs.push_back(pending_reqs[si] > 0 ? clip(budget[si] / pending_reqs[si]) : 0.0);
  }
  obs.push_back(max_bw > 0 ? clip(bandwidth / max_bw) : 0.0);
  for (std::size_t vi = 0; vi < nv; ++vi) obs.push_back(clip(unplaced[vi] / kCountScale));
  return obs;
}

// ------------------------------------------------------------- invariants

void Environment::check_invariants() const {
  auto fail = [](const std::string& what) { throw Error(Errc::InvariantViolation, what); };
  for (std::size_t di = 0; di < dcs_.size(); ++di) {
    const auto& s = dcs_[di];
    const auto& spec = topology_.data_centers()[di];
    double cpu = 0.0, storage = 0.0;
    std::vector<int> counted(s.installed.size(), 0);
    for (int uid : s.instances) {
      const Instance& inst = instances_[uid];
      if (!inst.alive || inst.dc != s.id) fail("instance ledger mismatch at DC " + std::to_string(s.id));
      counted[catalog_.vnf_index(inst.vnf)] += 1;
    }
    for (std::size_t vi = 0; vi < s.installed.size(); ++vi) {
      if (s.installed[vi] < 0 || counted[vi] != s.installed[vi])
        fail("installed count mismatch at DC " + std::to_string(s.id));
      cpu += s.installed[vi] * catalog_.vnfs()[vi].cpu_demand;
      storage += s.installed[vi] * catalog_.vnfs()[vi].storage_demand;
    }
    const double tol = 1e-9 * std::max(1.0, spec.cpu_capacity);
    if (cpu > spec.cpu_capacity + tol) fail("CPU capacity exceeded at DC " + std::to_string(s.id));
    if (storage > spec.storage_capacity + 1e-9 * std::max(1.0, spec.storage_capacity))
      fail("storage capacity exceeded at DC " + std::to_string(s.id));
    if (std::abs(s.free_cpu + cpu - spec.cpu_capacity) > tol)
      fail("free CPU ledger broken at DC " + std::to_string(s.id));
  }

  std::vector<double> loads(link_load_.size(), 0.0);
  std::vector<int> refs(instances_.size(), 0);
  for (const auto& p : progress_) {
    const ServiceType& svc = catalog_.service(p.request.service);
    for (int l : p.committed_links) loads[l] += svc.bandwidth;
    if (p.status == RequestStatus::Served) {
      for (std::size_t k = 0; k < p.stages.size(); ++k) {
        if (!p.stages[k].dc || p.stages[k].state != StageState::Done)
          fail("served request " + std::to_string(p.request.id) + " has an unassigned position");
      }
      if (p.accrued_prop_delay + p.accrued_proc_delay > svc.delay_budget + kDelayTolerance)
        fail("served request " + std::to_string(p.request.id) + " exceeded its delay budget");
    }
    if (p.status != RequestStatus::InFlight && p.status != RequestStatus::Pending) continue;
    for (std::size_t k = 0; k < p.stages.size(); ++k) {
      const Stage& st = p.stages[k];
      if (k < p.next_position) {
        if (!st.dc || st.instance < 0) fail("placed position without a host");
        const Instance& inst = instances_[st.instance];
        if (inst.dc != *st.dc || inst.vnf != svc.chain[k])
          fail("position assigned to a DC without a matching instance");
        if (st.state != StageState::Done) {
          if (!inst.alive) fail("work item bound to a removed instance");
          refs[st.instance] += 1;
        }
      } else if (st.dc) {
        fail("unplaced position carries an assignment");
      }
    }
  }
  for (std::size_t l = 0; l < loads.size(); ++l) {
    if (std::abs(loads[l] - link_load_[l]) > 1e-6) fail("link load ledger mismatch on link " + std::to_string(l));
    if (link_load_[l] > topology_.links()[l].bandwidth + 1e-6) fail("link " + std::to_string(l) + " over capacity");
  }
  for (const auto& inst : instances_) {
    if (inst.alive && inst.refs != refs[inst.uid]) fail("instance reference count mismatch");
  }
}

std::string events_to_csv(const std::vector<EventRecord>& events) {
  std::ostringstream os;
  os.precision(17);
  os << "step,event,request_id,service,dc,reward\n";
  for (const auto& e : events) {
    os << e.step << ',' << e.event << ',' << e.request_id << ','
       << (e.service ? std::string(service_name(*e.service)) : std::string()) << ','
       << (e.dc ? std::to_string(*e.dc) : std::string()) << ',' << e.reward << '\n';
  }
  return os.str();
}

std::string decisions_to_csv(const std::vector<DecisionRecord>& decisions) {
  std::ostringstream os;
  os << "step,request,vnf,chosen_dc,tier\n";
  for (const auto& d : decisions)
    os << d.step << ',' << d.request_id << ',' << d.vnf << ',' << d.chosen_dc << ',' << tier_name(d.tier)
       << '\n';
  return os.str();
}

}  // namespace sfc
