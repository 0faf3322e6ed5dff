#include "sfc/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"
#include "sfc/parallel.hpp"

namespace sfc {

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::size_t si(ServiceClass s) { return static_cast<std::size_t>(s); }

}  // namespace

// -------------------------------------------------------------- metrics

RunReport make_run_report(const Environment& env, std::string policy, std::uint64_t seed, std::string config_digest,
                          std::string trace_digest) {
  RunReport r;
  r.policy = std::move(policy);
  r.seed = seed;
  r.config_digest = std::move(config_digest);
  r.trace_digest = std::move(trace_digest);
  for (const auto& p : env.progress()) {
    if (p.status == RequestStatus::NotArrived) continue;
    const std::size_t s = si(p.request.service);
    ++r.arrivals[s];
    if (p.status == RequestStatus::Served) {
      ++r.admitted[s];
      r.latencies[s].push_back(Environment::e2e_delay(p));
    }
  }
  return r;
}

Acceptance acceptance_ratio(const RunReport& report) {
  std::int64_t arrived = 0, admitted = 0;
  Acceptance a;
  for (std::size_t s = 0; s < kServiceCount; ++s) {
    arrived += report.arrivals[s];
    admitted += report.admitted[s];
    if (report.arrivals[s] > 0)
      a.per_service[s] = static_cast<double>(report.admitted[s]) / static_cast<double>(report.arrivals[s]);
  }
  if (arrived == 0) throw Error(Errc::NoArrivals, "acceptance ratio undefined without arrivals");
  a.overall = static_cast<double>(admitted) / static_cast<double>(arrived);
  return a;
}

double acceptance_from_events(const std::vector<EventRecord>& events) {
  std::int64_t arrived = 0, served = 0;
  for (const auto& e : events) {
    if (e.event == "arrive") ++arrived;
    if (e.event == "serve") ++served;
  }
  if (arrived == 0) throw Error(Errc::NoArrivals, "event log has no arrivals");
  return static_cast<double>(served) / static_cast<double>(arrived);
}

LatencyStats latency_stats(std::vector<double> samples) {
  LatencyStats s;
  s.count = samples.size();
  if (samples.empty()) return s;
  std::sort(samples.begin(), samples.end());
  double sum = 0.0;
  for (double x : samples) sum += x;
  s.mean = sum / static_cast<double>(samples.size());
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
  };
  s.p50 = quantile(0.5);
  s.p95 = quantile(0.95);
  return s;
}

std::map<ServiceClass, LatencyStats> latency_summary(const RunReport& report) {
  std::map<ServiceClass, LatencyStats> out;
  for (ServiceClass s : kServiceClasses)
    if (!report.latencies[si(s)].empty()) out[s] = latency_stats(report.latencies[si(s)]);
  return out;
}

nlohmann::json run_report_to_json(const RunReport& r) {
  nlohmann::json services = nlohmann::json::object();
  for (ServiceClass s : kServiceClasses)
    services[std::string(service_name(s))] = {{"arrivals", r.arrivals[si(s)]},
                                              {"admitted", r.admitted[si(s)]},
                                              {"latencies", r.latencies[si(s)]}};
  return {{"policy", r.policy},
          {"seed", r.seed},
          {"config_digest", r.config_digest},
          {"trace_digest", r.trace_digest},
          {"services", services}};
}

RunReport run_report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.policy = require<std::string>(j, "policy");
  r.seed = require<std::uint64_t>(j, "seed");
  r.config_digest = require<std::string>(j, "config_digest");
  r.trace_digest = require<std::string>(j, "trace_digest");
  const auto services = require<nlohmann::json>(j, "services");
  for (ServiceClass s : kServiceClasses) {
    const auto e = require<nlohmann::json>(services, std::string(service_name(s)).c_str());
    r.arrivals[si(s)] = require<std::int64_t>(e, "arrivals");
    r.admitted[si(s)] = require<std::int64_t>(e, "admitted");
    r.latencies[si(s)] = require<std::vector<double>>(e, "latencies");
  }
  return r;
}

ComparisonReport compare(std::vector<RunReport> baseline, std::vector<RunReport> predictive) {
  if (baseline.size() != predictive.size() || baseline.empty())
    throw Error(Errc::InvariantViolation, "comparison needs one baseline and one predictive run per seed");
  ComparisonReport c;
  c.config_digest = baseline.front().config_digest;
  for (std::size_t i = 0; i < baseline.size(); ++i) {
    if (baseline[i].seed != predictive[i].seed || baseline[i].trace_digest != predictive[i].trace_digest)
      throw Error(Errc::InvariantViolation, "arms did not share the request trace for seed " +
                                                std::to_string(baseline[i].seed));
    c.seeds.push_back(baseline[i].seed);
  }
  auto arm = [](const std::vector<RunReport>& runs, std::size_t s, std::optional<double>& acc,
                std::optional<double>& lat) {
    double sum = 0.0;
    int n = 0;
    std::vector<double> pooled;
    for (const auto& r : runs) {
      if (r.arrivals[s] > 0) {
        sum += static_cast<double>(r.admitted[s]) / static_cast<double>(r.arrivals[s]);
        ++n;
      }
      pooled.insert(pooled.end(), r.latencies[s].begin(), r.latencies[s].end());
    }
    if (n > 0) acc = sum / n;
    if (!pooled.empty()) lat = latency_stats(pooled).mean;
  };
  for (std::size_t s = 0; s < kServiceCount; ++s) {
    auto& d = c.services[s];
    arm(baseline, s, d.baseline_acceptance, d.baseline_latency);
    arm(predictive, s, d.predictive_acceptance, d.predictive_latency);
    if (d.baseline_acceptance && d.predictive_acceptance)
      d.acceptance_delta = *d.predictive_acceptance - *d.baseline_acceptance;
    if (d.baseline_latency && d.predictive_latency) d.latency_delta = *d.predictive_latency - *d.baseline_latency;
  }
  for (const auto& r : baseline) c.baseline_overall += acceptance_ratio(r).overall / static_cast<double>(baseline.size());
  for (const auto& r : predictive)
    c.predictive_overall += acceptance_ratio(r).overall / static_cast<double>(predictive.size());
  c.baseline = std::move(baseline);
  c.predictive = std::move(predictive);
  return c;
}

namespace {

nlohmann::json opt(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", *v);
  return buf;
}

nlohmann::json run_summary(const RunReport& r) {
  const Acceptance a = acceptance_ratio(r);
  const auto lat = latency_summary(r);
  nlohmann::json services = nlohmann::json::object();
  nlohmann::json unserved = nlohmann::json::array();
  for (ServiceClass s : kServiceClasses) {
    nlohmann::json e = {{"arrivals", r.arrivals[si(s)]},
                        {"admitted", r.admitted[si(s)]},
                        {"acceptance", opt(a.per_service[si(s)])}};
    if (auto it = lat.find(s); it != lat.end())
      e["latency"] = {{"mean", it->second.mean}, {"p50", it->second.p50}, {"p95", it->second.p95}};
    else
      unserved.push_back(std::string(service_name(s)));
    services[std::string(service_name(s))] = e;
  }
  return {{"policy", r.policy},     {"seed", r.seed},         {"trace_digest", r.trace_digest},
          {"acceptance", a.overall}, {"services", services}, {"services_without_admissions", unserved}};
}

}  // namespace

nlohmann::json comparison_to_json(const ComparisonReport& c) {
  nlohmann::json services = nlohmann::json::object();
  for (ServiceClass s : kServiceClasses) {
    const auto& d = c.services[si(s)];
    services[std::string(service_name(s))] = {{"baseline_acceptance", opt(d.baseline_acceptance)},
                                              {"predictive_acceptance", opt(d.predictive_acceptance)},
                                              {"acceptance_delta", opt(d.acceptance_delta)},
                                              {"baseline_latency", opt(d.baseline_latency)},
                                              {"predictive_latency", opt(d.predictive_latency)},
                                              {"latency_delta", opt(d.latency_delta)}};
  }
  nlohmann::json runs = nlohmann::json::array();
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    runs.push_back(run_summary(c.baseline[i]));
    runs.push_back(run_summary(c.predictive[i]));
  }
  return {{"config_digest", c.config_digest},
          {"seeds", c.seeds},
          {"overall", {{"baseline_acceptance", c.baseline_overall}, {"predictive_acceptance", c.predictive_overall}}},
          {"services", services},
          {"runs", runs}};
}

std::string comparison_to_csv(const ComparisonReport& c) {
  std::string out =
      "service,baseline_acceptance,predictive_acceptance,acceptance_delta,baseline_latency,predictive_latency,"
      "latency_delta\n";
  for (ServiceClass s : kServiceClasses) {
    const auto& d = c.services[si(s)];
    out += std::string(service_name(s)) + "," + fmt(d.baseline_acceptance) + "," + fmt(d.predictive_acceptance) +
           "," + fmt(d.acceptance_delta) + "," + fmt(d.baseline_latency) + "," + fmt(d.predictive_latency) + "," +
           fmt(d.latency_delta) + "\n";
  }
  return out;
}

std::string acceptance_csv(const ComparisonReport& c) {
  std::string out = "seed,policy,service,arrivals,admitted,acceptance\n";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (const RunReport* r : {&c.baseline[i], &c.predictive[i]}) {
      const Acceptance a = acceptance_ratio(*r);
      for (ServiceClass s : kServiceClasses)
        out += std::to_string(r->seed) + "," + r->policy + "," + std::string(service_name(s)) + "," +
               std::to_string(r->arrivals[si(s)]) + "," + std::to_string(r->admitted[si(s)]) + "," +
               fmt(a.per_service[si(s)]) + "\n";
    }
  }
  return out;
}

std::string latency_csv(const ComparisonReport& c) {
  std::string out = "seed,policy,service,count,mean,p50,p95\n";
  for (std::size_t i = 0; i < c.seeds.size(); ++i) {
    for (const RunReport* r : {&c.baseline[i], &c.predictive[i]}) {
      for (const auto& [s, st] : latency_summary(*r))
        out += std::to_string(r->seed) + "," + r->policy + "," + std::string(service_name(s)) + "," +
               std::to_string(st.count) + "," + fmt(st.mean) + "," + fmt(st.p50) + "," + fmt(st.p95) + "\n";
    }
  }
  return out;
}

// ------------------------------------------------------- configuration

namespace {

nlohmann::json section(const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) return nlohmann::json::object();
  const auto& s = j.at(key);
  if (!s.is_object()) throw Error(Errc::ConfigError, std::string("section '") + key + "' must be an object");
  return s;
}

nlohmann::json load_part(const nlohmann::json& j, const char* key, const std::filesystem::path& base_dir) {
  if (!j.contains(key)) throw Error(Errc::ConfigError, std::string("missing section '") + key + "'");
  const auto& v = j.at(key);
  if (v.is_string()) return read_json(base_dir / v.get<std::string>());
  return v;
}

ForecastSettings forecast_from_json(const nlohmann::json& j) {
  ForecastSettings f;
  f.window = j.value("window", f.window);
  f.folds = j.value("folds", f.folds);
  f.val_frac = j.value("val_frac", f.val_frac);
  f.test_frac = j.value("test_frac", f.test_frac);
  f.telemetry_steps = j.value("telemetry_steps", f.telemetry_steps);
  if (j.contains("regime")) f.regime = train_regime_from_json(j.at("regime"));
  if (f.window < 1 || f.folds < 1 || !(f.val_frac > 0 && f.val_frac < 1) || !(f.test_frac >= 0 && f.test_frac < 1) ||
      f.telemetry_steps < 1)
    throw Error(Errc::ConfigError, "invalid forecasting section");
  return f;
}

nlohmann::json forecast_to_json(const ForecastSettings& f) {
  return {{"window", f.window},       {"folds", f.folds},
          {"val_frac", f.val_frac},   {"test_frac", f.test_frac},
          {"telemetry_steps", f.telemetry_steps}, {"regime", train_regime_to_json(f.regime)}};
}

EnsembleSettings ensemble_from_json(const nlohmann::json& j, const TrainRegime& regime) {
  EnsembleSettings e;
  if (j.contains("members")) {
    for (const auto& m : j.at("members")) {
      MemberSpec spec;
      spec.model = model_config_from_json(m);
      spec.regime = m.contains("regime") ? train_regime_from_json(m.at("regime"), regime) : regime;
      e.members.push_back(spec);
    }
  } else {
    for (const auto& f : kDefaultTrio) e.members.push_back({ModelConfig{f}, regime});
  }
  const std::string sel = j.value("selection", std::string("default_trio"));
  if (sel == "default_trio")
    e.selection = MemberSelection::DefaultTrio;
  else if (sel == "top3")
    e.selection = MemberSelection::TopThree;
  else
    throw Error(Errc::ConfigError, "ensemble.selection must be default_trio or top3");
  if (e.members.size() < 2) throw Error(Errc::ConfigError, "an ensemble needs at least two members");
  return e;
}

nlohmann::json ensemble_to_json(const EnsembleSettings& e) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : e.members) {
    auto j = model_config_to_json(m.model);
    j["regime"] = train_regime_to_json(m.regime);
    members.push_back(j);
  }
  return {{"members", members},
          {"selection", e.selection == MemberSelection::DefaultTrio ? "default_trio" : "top3"}};
}

RunSettings run_from_json(const nlohmann::json& j) {
  RunSettings r;
  r.seeds = j.value("seeds", r.seeds);
  r.forecast_seed = j.value("forecast_seed", r.forecast_seed);
  r.train_agent = j.value("train_agent", r.train_agent);
  r.agent_episodes = j.value("agent_episodes", r.agent_episodes);
  r.write_events = j.value("write_events", r.write_events);
  r.threads = j.value("threads", r.threads);
  r.output = j.value("output", r.output);
  if (r.seeds.empty() || r.agent_episodes < 1 || r.threads < 0)
    throw Error(Errc::ConfigError, "invalid run section");
  return r;
}

nlohmann::json run_to_json(const RunSettings& r) {
  // threads and output are left out of the digest.
  return {{"seeds", r.seeds},
          {"forecast_seed", r.forecast_seed},
          {"train_agent", r.train_agent},
          {"agent_episodes", r.agent_episodes},
          {"write_events", r.write_events}};
}

}  // namespace

ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  try {
    if (!j.is_object()) throw Error(Errc::ConfigError, "experiment config must be an object");
    ExperimentConfig cfg(topology_from_json(load_part(j, "topology", base_dir)),
                         catalog_from_json(load_part(j, "catalog", base_dir)));
    cfg.environment = env_config_from_json(section(j, "environment"));
    const auto placement = section(j, "placement");
    if (placement.contains("combiner")) cfg.environment.combiner = placement.at("combiner").get<std::array<double, 2>>();
    cfg.agent = agent_config_from_json(section(j, "agent"));
    cfg.forecasting = forecast_from_json(section(j, "forecasting"));
    cfg.ensemble = ensemble_from_json(section(j, "ensemble"), cfg.forecasting.regime);
    const auto h = section(j, "hyperopt");
    cfg.hyperopt.enabled = h.value("enabled", false);
    cfg.hyperopt.families = h.value("families", cfg.hyperopt.families);
    cfg.hyperopt.space = search_space_from_json(h);
    for (const auto& f : cfg.hyperopt.families)
      if (std::find(kPredictorFamilies.begin(), kPredictorFamilies.end(), f) == kPredictorFamilies.end())
        throw Error(Errc::ConfigError, "unknown predictor family '" + f + "'");
    const auto run = section(j, "run");
    cfg.run = run_from_json(run);

    auto env_json = env_config_to_json(cfg.environment);
    env_json.erase("combiner");
    cfg.resolved = {{"topology", topology_to_json(cfg.topology)},
                    {"catalog", catalog_to_json(cfg.catalog)},
                    {"environment", env_json},
                    {"placement", {{"combiner", cfg.environment.combiner}}},
                    {"agent", agent_config_to_json(cfg.agent)},
                    {"forecasting", forecast_to_json(cfg.forecasting)},
                    {"ensemble", ensemble_to_json(cfg.ensemble)},
                    {"hyperopt",
                     [&] {
                       auto s = search_space_to_json(cfg.hyperopt.space);
                       s["enabled"] = cfg.hyperopt.enabled;
                       s["families"] = cfg.hyperopt.families;
                       return s;
                     }()},
                    {"run", run_to_json(cfg.run)}};
    cfg.digest = hex(fnv1a(cfg.resolved.dump()));
    return cfg;
  } catch (const Error& e) {
    if (e.code() == Errc::ConfigError) throw;
    throw Error(Errc::ConfigError, std::string(errc_name(e.code())) + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, e.what());
  }
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = read_json(path);
  } catch (const Error& e) {
    throw Error(Errc::ConfigError, e.what());
  }
  return experiment_from_json(j, path.parent_path());
}

std::filesystem::path output_dir(const ExperimentConfig& cfg) {
  const char* env = std::getenv("SFCSIM_OUT");
  const std::filesystem::path root = env && *env ? std::filesystem::path(env) : std::filesystem::path(cfg.run.output);
  return root / ("exp-" + cfg.digest);
}

// ------------------------------------------------------------ pipeline

std::vector<Request> evaluation_requests(const ExperimentConfig& cfg, std::uint64_t seed) {
  return generate_requests(cfg.catalog, cfg.topology.ids(), cfg.environment.horizon,
                           derive_seed(seed, {hash_tag("evaluation")}));
}

TelemetryLog simulate_telemetry(const ExperimentConfig& cfg, std::uint64_t seed) {
  EnvConfig ec = cfg.environment;
  ec.horizon = cfg.forecasting.telemetry_steps * ec.telemetry_cadence;
  ec.policy = PlacementPolicy::Baseline;
  Environment env(cfg.topology, cfg.catalog, ec);
  env.reset(generate_requests(cfg.catalog, cfg.topology.ids(), ec.horizon, derive_seed(seed, {hash_tag("telemetry")})),
            seed);
  while (!env.done() && env.now() < ec.horizon) env.step(Action::wait());
  return env.telemetry().slice(0, static_cast<std::size_t>(cfg.forecasting.telemetry_steps));
}

std::vector<Frame> training_frames(const ExperimentConfig&, const TelemetryLog& log) { return frames_from_log(log); }

RollingSplitPlan split_plan(const ExperimentConfig& cfg, std::size_t steps) {
  return rolling_splits(steps, cfg.forecasting.window, cfg.forecasting.folds, cfg.forecasting.val_frac,
                        cfg.forecasting.test_frac);
}

namespace {

SeriesShape shape_of(const ExperimentConfig& cfg) {
  return {cfg.forecasting.window, kFeatureCount, cfg.topology.size()};
}

}  // namespace

std::map<std::string, StudyResult> tune_forecasters(const ExperimentConfig& cfg, const TelemetryLog& log,
                                                    std::uint64_t seed) {
  const auto frames = training_frames(cfg, log);
  const auto plan = split_plan(cfg, frames.size());
  const auto mix = neighbor_mean_matrix(cfg.topology);
  std::vector<StudyResult> results(cfg.hyperopt.families.size());
  parallel_for(results.size(), cfg.run.threads, [&](std::size_t i) {
    results[i] = run_study(cfg.hyperopt.families[i], frames, plan, shape_of(cfg), mix, cfg.hyperopt.space,
                           cfg.forecasting.regime, seed);
  });
  std::map<std::string, StudyResult> out;
  for (auto& r : results) out[r.family] = std::move(r);
  return out;
}

BuiltEnsemble build_experiment_ensemble(const ExperimentConfig& cfg, const TelemetryLog& log,
                                        const std::vector<MemberSpec>& members, std::uint64_t seed) {
  const auto frames = training_frames(cfg, log);
  return build_ensemble(members, frames, split_plan(cfg, frames.size()), shape_of(cfg),
                        neighbor_mean_matrix(cfg.topology), seed, cfg.run.threads);
}

std::unique_ptr<Environment> simulate_policy(const ExperimentConfig& cfg, const std::vector<Request>& requests,
                                             PlacementPolicy policy, std::uint64_t seed,
                                             std::shared_ptr<const DcForecaster> forecaster) {
  EnvConfig ec = cfg.environment;
  ec.policy = policy;
  auto env = std::make_unique<Environment>(cfg.topology, cfg.catalog, ec);
  if (policy == PlacementPolicy::Predictive) env->set_forecaster(std::move(forecaster));
  env->reset(requests, seed);
  while (!env->done()) env->step(Action::wait());
  env->check_invariants();
  return env;
}

EnvFactory agent_env_factory(const ExperimentConfig& cfg) {
  EnvConfig ec = cfg.environment;
  ec.auto_install = false;
  ec.idle_timeout = 0;
  ec.horizon = std::min<std::int64_t>(ec.horizon, 500);
  Topology topo = cfg.topology;
  Catalog catalog = cfg.catalog;
  return [topo, catalog, ec](std::uint64_t seed) {
    auto env = std::make_unique<Environment>(topo, catalog, ec);
    env->reset(generate_requests(catalog, topo.ids(), ec.horizon, seed), seed);
    return env;
  };
}

ComparisonReport evaluate(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                          std::shared_ptr<const DcForecaster> forecaster, const std::filesystem::path& out) {
  if (seeds.empty()) throw Error(Errc::ConfigError, "no seeds to evaluate");
  std::vector<RunReport> base(seeds.size()), pred(seeds.size());
  parallel_for(seeds.size() * 2, cfg.run.threads, [&](std::size_t job) {
    const std::size_t i = job / 2;
    const bool predictive = job % 2 == 1;
    const auto requests = evaluation_requests(cfg, seeds[i]);
    const auto policy = predictive ? PlacementPolicy::Predictive : PlacementPolicy::Baseline;
    const auto env = simulate_policy(cfg, requests, policy, seeds[i], forecaster);
    RunReport r = make_run_report(*env, std::string(policy_name(policy)), seeds[i], cfg.digest,
                                  hex(trace_digest(requests)));
    if (acceptance_ratio(r).overall != acceptance_from_events(env->events()))
      throw Error(Errc::InvariantViolation, "event-log acceptance disagrees with the counters");
    if (!out.empty() && cfg.run.write_events) {
      const std::string tag = r.policy + "_" + std::to_string(seeds[i]);
      write_text(out / "events" / (tag + ".csv"), events_to_csv(env->events()));
      write_text(out / "events" / (tag + "_decisions.csv"), decisions_to_csv(env->decisions()));
    }
    (predictive ? pred : base)[i] = std::move(r);
  });
  return compare(std::move(base), std::move(pred));
}

ComparisonReport run_experiment(const std::filesystem::path& config_path, const std::vector<std::uint64_t>& seeds) {
  return run_experiment(load_experiment(config_path), seeds);
}

ComparisonReport run_experiment(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds_in) {
  const auto seeds = seeds_in.empty() ? cfg.run.seeds : seeds_in;
  const auto out = output_dir(cfg);
  std::filesystem::create_directories(out);
  write_text(out / "config.json", cfg.resolved.dump(2) + "\n");

  const TelemetryLog log = simulate_telemetry(cfg, cfg.run.forecast_seed);
  export_csv(log, out / "telemetry.csv.gz");

  std::vector<MemberSpec> members = cfg.ensemble.members;
  if (cfg.hyperopt.enabled) {
    const auto studies = tune_forecasters(cfg, log, cfg.run.forecast_seed);
    for (const auto& [family, study] : studies) {
      write_text(out / "studies" / (family + ".csv"), study_to_csv(study));
      write_text(out / "studies" / (family + "_best.json"), trial_config_to_json(study.best_config()).dump(2) + "\n");
    }
    members = select_ensemble_members(studies, cfg.ensemble.selection);
  }

  BuiltEnsemble built = build_experiment_ensemble(cfg, log, members, cfg.run.forecast_seed);
  check_weight_contract(built.spec);
  save_ensemble_spec(built.spec, out / "ensemble.txt");
  for (std::size_t m = 0; m < built.members.size(); ++m) {
    const std::string name = std::to_string(m) + "_" + built.spec.models[m];
    save_forecaster(built.members[m], out / "forecasters" / (name + ".json"));
    for (std::size_t k = 0; k < built.fits[m].size(); ++k)
      write_text(out / "training" / (name + "_fold" + std::to_string(k + 1) + ".csv"),
                 training_trace_csv(built.fits[m][k].trace));
  }

  if (cfg.run.train_agent) {
    const auto factory = agent_env_factory(cfg);
    std::vector<AgentTrainResult> agents(seeds.size());
    parallel_for(seeds.size(), cfg.run.threads,
                 [&](std::size_t i) { agents[i] = train_agent(factory, cfg.agent, cfg.run.agent_episodes, seeds[i]); });
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      write_text(out / "agent" / ("rewards_" + std::to_string(seeds[i]) + ".csv"), reward_trace_csv(agents[i].trace));
      save_network(agents[i].network, out / "agent" / ("network_" + std::to_string(seeds[i]) + ".txt"));
    }
  }

  auto forecaster = std::make_shared<EnsembleForecaster>(built.spec, built.members);
  ComparisonReport report = evaluate(cfg, seeds, forecaster, out);
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    for (const RunReport* r : {&report.baseline[i], &report.predictive[i]})
      write_text(out / "runs" / (r->policy + "_" + std::to_string(r->seed) + ".json"),
                 run_report_to_json(*r).dump() + "\n");
  }
  write_text(out / "report.json", comparison_to_json(report).dump(2) + "\n");
  write_text(out / "comparison.csv", comparison_to_csv(report));
  write_text(out / "acceptance.csv", acceptance_csv(report));
  write_text(out / "latency.csv", latency_csv(report));
  return report;
}

}  // namespace sfc
