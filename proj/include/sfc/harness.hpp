#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/agent.hpp"
#include "sfc/catalog.hpp"
#include "sfc/ensemble.hpp"
#include "sfc/environment.hpp"
#include "sfc/hyperopt.hpp"
#include "sfc/topology.hpp"

namespace sfc {

inline constexpr std::size_t kServiceCount = kServiceClasses.size();

struct RunReport {
  std::string policy;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string trace_digest;
  std::array<std::int64_t, kServiceCount> arrivals{};
  std::array<std::int64_t, kServiceCount> admitted{};
  std::array<std::vector<double>, kServiceCount> latencies;  // seconds, admitted requests only

  bool operator==(const RunReport&) const = default;
};

// Counters and latency samples of a finished episode.
RunReport make_run_report(const Environment& env, std::string policy, std::uint64_t seed, std::string config_digest,
                          std::string trace_digest);

struct Acceptance {
  double overall = 0.0;
  std::array<std::optional<double>, kServiceCount> per_service;  // empty when a service had no arrivals
};

// Throws NoArrivals when nothing arrived.
Acceptance acceptance_ratio(const RunReport& report);
// Admitted / arrived recomputed from the raw event log.
double acceptance_from_events(const std::vector<EventRecord>& events);

struct LatencyStats {
  double mean = 0.0, p50 = 0.0, p95 = 0.0;
  std::size_t count = 0;
};

// Percentiles interpolate linearly between order statistics.
LatencyStats latency_stats(std::vector<double> samples);
// Services without admitted requests are absent.
std::map<ServiceClass, LatencyStats> latency_summary(const RunReport& report);

nlohmann::json run_report_to_json(const RunReport& r);
RunReport run_report_from_json(const nlohmann::json& j);

struct ServiceDelta {
  std::optional<double> baseline_acceptance, predictive_acceptance, acceptance_delta;
  std::optional<double> baseline_latency, predictive_latency, latency_delta;  // mean seconds
};

struct ComparisonReport {
  std::string config_digest;
  std::vector<std::uint64_t> seeds;
  std::vector<RunReport> baseline, predictive;  // one per seed, same order
  std::array<ServiceDelta, kServiceCount> services;
  double baseline_overall = 0.0, predictive_overall = 0.0;
};

// Acceptance: mean over seeds of per-seed ratios. Latency: mean of the
// pooled admitted samples. Throws InvariantViolation if the arms' traces differ.
ComparisonReport compare(std::vector<RunReport> baseline, std::vector<RunReport> predictive);

// Summary without raw latency samples; deterministic key order.
nlohmann::json comparison_to_json(const ComparisonReport& c);
std::string comparison_to_csv(const ComparisonReport& c);
// seed,policy,service,arrivals,admitted,acceptance
std::string acceptance_csv(const ComparisonReport& c);
// seed,policy,service,count,mean,p50,p95
std::string latency_csv(const ComparisonReport& c);

// ------------------------------------------------------- configuration

struct ForecastSettings {
  std::size_t window = 20;
  std::size_t folds = 5;
  double val_frac = 0.1;
  double test_frac = 0.1;
  std::int64_t telemetry_steps = 2000;
  TrainRegime regime;
};

struct EnsembleSettings {
  std::vector<MemberSpec> members;  // used when hyperopt is disabled
  MemberSelection selection = MemberSelection::DefaultTrio;
};

struct HyperoptSettings {
  bool enabled = false;
  SearchSpace space;
  std::vector<std::string> families = {"lstm", "tcn", "tgnn", "stgnn"};
};

struct RunSettings {
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  std::uint64_t forecast_seed = 1000;
  bool train_agent = false;
  int agent_episodes = 50;
  bool write_events = false;
  int threads = 0;  // 0: hardware concurrency
  std::string output = "runs";
};

struct ExperimentConfig {
  ExperimentConfig(Topology t, Catalog c) : topology(std::move(t)), catalog(std::move(c)) {}

  Topology topology;
  Catalog catalog;
  EnvConfig environment;
  AgentConfig agent;
  ForecastSettings forecasting;
  EnsembleSettings ensemble;
  HyperoptSettings hyperopt;
  RunSettings run;
  nlohmann::json resolved;  // fully expanded config
  std::string digest;       // hex fnv1a of resolved.dump()
};

// topology/catalog may be inline objects or paths relative to base_dir.
// Every failure surfaces as ConfigError.
ExperimentConfig experiment_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
ExperimentConfig load_experiment(const std::filesystem::path& path);

// $SFCSIM_OUT if set, else run.output; always suffixed with the digest.
std::filesystem::path output_dir(const ExperimentConfig& cfg);

// ------------------------------------------------------------ pipeline

std::vector<Request> evaluation_requests(const ExperimentConfig& cfg, std::uint64_t seed);

// Baseline-policy episode on a dedicated trace; its telemetry trains the forecasters.
TelemetryLog simulate_telemetry(const ExperimentConfig& cfg, std::uint64_t seed);

std::vector<Frame> training_frames(const ExperimentConfig& cfg, const TelemetryLog& log);
RollingSplitPlan split_plan(const ExperimentConfig& cfg, std::size_t steps);

std::map<std::string, StudyResult> tune_forecasters(const ExperimentConfig& cfg, const TelemetryLog& log,
                                                    std::uint64_t seed);

BuiltEnsemble build_experiment_ensemble(const ExperimentConfig& cfg, const TelemetryLog& log,
                                        const std::vector<MemberSpec>& members, std::uint64_t seed);

// One full episode with Wait actions under the given policy.
std::unique_ptr<Environment> simulate_policy(const ExperimentConfig& cfg, const std::vector<Request>& requests,
                                             PlacementPolicy policy, std::uint64_t seed,
                                             std::shared_ptr<const DcForecaster> forecaster);

EnvFactory agent_env_factory(const ExperimentConfig& cfg);

// Baseline and predictive arms on identical traces for every seed.
ComparisonReport evaluate(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                          std::shared_ptr<const DcForecaster> forecaster, const std::filesystem::path& out = {});

// Full pipeline; writes every artifact under output_dir(cfg).
ComparisonReport run_experiment(const std::filesystem::path& config_path, const std::vector<std::uint64_t>& seeds);
ComparisonReport run_experiment(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds);

}  // namespace sfc
