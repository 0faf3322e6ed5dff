#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sfc/error.hpp"
#include "sfc/harness.hpp"
#include "sfc/json_io.hpp"

using namespace sfc;
namespace fs = std::filesystem;

namespace {

struct Options {
  std::string config = "config/experiment.json";
  std::optional<std::uint64_t> seed;
  std::vector<std::uint64_t> seeds;
  std::size_t downsample = 1;
};

std::vector<std::uint64_t> seeds_of(const Options& o, const ExperimentConfig& cfg) {
  if (!o.seeds.empty()) return o.seeds;
  if (o.seed) return {*o.seed};
  return cfg.run.seeds;
}

std::uint64_t forecast_seed_of(const Options& o, const ExperimentConfig& cfg) {
  return o.seed.value_or(cfg.run.forecast_seed);
}

TelemetryLog telemetry_for(const ExperimentConfig& cfg, const fs::path& out, std::uint64_t seed) {
  const auto path = out / "telemetry.csv.gz";
  if (fs::exists(path)) return load_csv(path);
  std::cerr << "no telemetry under " << out << ", simulating\n";
  auto log = simulate_telemetry(cfg, seed);
  export_csv(log, path);
  return log;
}

nlohmann::json matrix_json(const nn::Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> row(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) row[static_cast<std::size_t>(c)] = m(r, c);
    rows.push_back(row);
  }
  return rows;
}

nn::Matrix matrix_from(const nlohmann::json& j) {
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  nn::Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  return m;
}

nlohmann::json validation_json(const ValidationRecord& rec) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : rec.folds) {
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : f.preds) preds.push_back(matrix_json(p));
    folds.push_back({{"truth", matrix_json(f.truth)}, {"preds", preds}});
  }
  return {{"models", rec.models}, {"folds", folds}};
}

ValidationRecord validation_from(const nlohmann::json& j) {
  ValidationRecord rec;
  rec.models = j.at("models").get<std::vector<std::string>>();
  for (const auto& f : j.at("folds")) {
    ValidationRecord::FoldData fd;
    fd.truth = matrix_from(f.at("truth"));
    for (const auto& p : f.at("preds")) fd.preds.push_back(matrix_from(p));
    rec.folds.push_back(std::move(fd));
  }
  return rec;
}

std::string member_name(std::size_t m, const std::string& family) { return std::to_string(m) + "_" + family; }

std::vector<MemberSpec> members_for(const ExperimentConfig& cfg, const fs::path& out) {
  const auto path = out / "studies" / "members.json";
  if (!cfg.hyperopt.enabled || !fs::exists(path)) return cfg.ensemble.members;
  std::vector<MemberSpec> members;
  for (const auto& m : read_json(path)) {
    const auto c = trial_config_from_json(m);
    members.push_back({c.model, c.regime});
  }
  return members;
}

void print_comparison(const ComparisonReport& r) {
  std::printf("%-6s %10s %10s %9s %12s %12s\n", "class", "baseline", "predictive", "delta_pp", "lat_base_ms",
              "lat_pred_ms");
  for (std::size_t s = 0; s < kServiceCount; ++s) {
    const auto& d = r.services[s];
    auto pct = [](const std::optional<double>& x) { return x ? *x : std::nan(""); };
    std::printf("%-6s %10.4f %10.4f %+9.2f %12.3f %12.3f\n", std::string(service_name(kServiceClasses[s])).c_str(),
                pct(d.baseline_acceptance), pct(d.predictive_acceptance), 100.0 * pct(d.acceptance_delta),
                1e3 * pct(d.baseline_latency), 1e3 * pct(d.predictive_latency));
  }
  std::printf("overall %.4f -> %.4f\n", r.baseline_overall, r.predictive_overall);
}

void write_comparison(const ComparisonReport& r, const fs::path& out) {
  write_text(out / "report.json", comparison_to_json(r).dump(2) + "\n");
  write_text(out / "comparison.csv", comparison_to_csv(r));
  write_text(out / "acceptance.csv", acceptance_csv(r));
  write_text(out / "latency.csv", latency_csv(r));
}

int cmd_simulate(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  fs::create_directories(out);
  write_text(out / "config.json", cfg.resolved.dump(2) + "\n");
  auto log = simulate_telemetry(cfg, forecast_seed_of(o, cfg));
  if (o.downsample > 1) log = log.downsample(o.downsample);
  export_csv(log, out / "telemetry.csv.gz");
  std::cout << "telemetry: " << log.steps() << " steps x " << log.dcs().size() << " DCs -> "
            << (out / "telemetry.csv.gz").string() << "\n";
  return 0;
}

int cmd_train_agent(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  const auto factory = agent_env_factory(cfg);
  for (auto seed : seeds_of(o, cfg)) {
    const auto r = train_agent(factory, cfg.agent, cfg.run.agent_episodes, seed);
    write_text(out / "agent" / ("rewards_" + std::to_string(seed) + ".csv"), reward_trace_csv(r.trace));
    save_network(r.network, out / "agent" / ("network_" + std::to_string(seed) + ".txt"));
    std::cout << "seed " << seed << ": first episode reward " << r.trace.front().total_reward << ", last "
              << r.trace.back().total_reward << "\n";
  }
  return 0;
}

int cmd_tune(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  const auto seed = forecast_seed_of(o, cfg);
  const auto studies = tune_forecasters(cfg, telemetry_for(cfg, out, seed), seed);
  for (const auto& [family, study] : studies) {
    write_text(out / "studies" / (family + ".csv"), study_to_csv(study));
    write_text(out / "studies" / (family + "_best.json"), trial_config_to_json(study.best_config()).dump(2) + "\n");
    std::cout << family << ": best objective " << study.best_objective() << " (trial " << study.best + 1 << ")\n";
  }
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : select_ensemble_members(studies, cfg.ensemble.selection))
    members.push_back(trial_config_to_json({m.model, m.regime}));
  write_text(out / "studies" / "members.json", members.dump(2) + "\n");
  return 0;
}

int cmd_train_forecasters(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  const auto seed = forecast_seed_of(o, cfg);
  const auto built = build_experiment_ensemble(cfg, telemetry_for(cfg, out, seed), members_for(cfg, out), seed);
  for (std::size_t m = 0; m < built.members.size(); ++m) {
    const auto name = member_name(m, built.spec.models[m]);
    save_forecaster(built.members[m], out / "forecasters" / (name + ".json"));
    for (std::size_t k = 0; k < built.fits[m].size(); ++k)
      write_text(out / "training" / (name + "_fold" + std::to_string(k + 1) + ".csv"),
                 training_trace_csv(built.fits[m][k].trace));
    std::cout << name << ": best epochs";
    for (const auto& f : built.fits[m]) std::cout << ' ' << f.best_epoch;
    std::cout << "\n";
  }
  write_text(out / "validation.json", validation_json(built.validation).dump() + "\n");
  return 0;
}

int cmd_build_ensemble(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  if (!fs::exists(out / "validation.json"))
    throw Error(Errc::ConfigError, "no validation predictions under " + out.string() + "; run train-forecasters first");
  const auto spec = build_ensemble_spec(validation_from(read_json(out / "validation.json")),
                                        {kFeatureNames.begin(), kFeatureNames.end()});
  check_weight_contract(spec);
  save_ensemble_spec(spec, out / "ensemble.txt");
  std::cout << ensemble_spec_to_text(spec);
  return 0;
}

int cmd_evaluate(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  if (!fs::exists(out / "ensemble.txt"))
    throw Error(Errc::ConfigError, "no ensemble under " + out.string() + "; run build-ensemble first");
  const auto spec = load_ensemble_spec(out / "ensemble.txt");
  const auto mix = neighbor_mean_matrix(cfg.topology);
  std::vector<FittedForecaster> members;
  for (std::size_t m = 0; m < spec.models.size(); ++m)
    members.push_back(load_forecaster(out / "forecasters" / (member_name(m, spec.models[m]) + ".json"), mix));
  const auto forecaster = std::make_shared<EnsembleForecaster>(spec, std::move(members));
  const auto report = evaluate(cfg, seeds_of(o, cfg), forecaster, out);
  for (std::size_t i = 0; i < report.seeds.size(); ++i)
    for (const RunReport* r : {&report.baseline[i], &report.predictive[i]})
      write_text(out / "runs" / (r->policy + "_" + std::to_string(r->seed) + ".json"),
                 run_report_to_json(*r).dump() + "\n");
  write_comparison(report, out);
  print_comparison(report);
  return 0;
}

int cmd_report(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto out = output_dir(cfg);
  std::vector<RunReport> baseline, predictive;
  for (auto seed : seeds_of(o, cfg)) {
    const auto b = out / "runs" / ("baseline_" + std::to_string(seed) + ".json");
    const auto p = out / "runs" / ("predictive_" + std::to_string(seed) + ".json");
    if (!fs::exists(b) || !fs::exists(p)) throw Error(Errc::ConfigError, "missing run reports for seed " + std::to_string(seed));
    baseline.push_back(run_report_from_json(read_json(b)));
    predictive.push_back(run_report_from_json(read_json(p)));
  }
  const auto report = compare(std::move(baseline), std::move(predictive));
  write_comparison(report, out);
  print_comparison(report);
  return 0;
}

int cmd_run(const Options& o) {
  const auto cfg = load_experiment(o.config);
  const auto report = run_experiment(cfg, seeds_of(o, cfg));
  print_comparison(report);
  std::cout << "artifacts: " << output_dir(cfg).string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SFC provisioning simulator and experiment pipeline"};
  app.require_subcommand(1);
  Options opt;
  int (*action)(const Options&) = nullptr;

  auto add = [&](const char* name, const char* help, int (*fn)(const Options&)) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", opt.config, "experiment config file")->capture_default_str();
    auto* seed = sub->add_option("--seed", opt.seed, "single seed");
    sub->add_option("--seeds", opt.seeds, "seed list")->excludes(seed);
    sub->callback([&action, fn] { action = fn; });
    return sub;
  };
  add("simulate", "generate telemetry with the baseline policy", cmd_simulate)
      ->add_option("--downsample", opt.downsample, "keep every n-th telemetry step")
      ->check(CLI::PositiveNumber);
  add("train-agent", "train the DQN placement agent", cmd_train_agent);
  add("tune", "hyperparameter search per forecaster family", cmd_tune);
  add("train-forecasters", "train the ensemble members on every fold", cmd_train_forecasters);
  add("build-ensemble", "derive ensemble weights from validation errors", cmd_build_ensemble);
  add("evaluate", "run baseline and predictive arms on paired traces", cmd_evaluate);
  add("report", "aggregate stored run reports", cmd_report);
  add("run", "full pipeline", cmd_run);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  try {
    return action(opt);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.code()) {
      case Errc::ConfigError:
      case Errc::ParseError:
      case Errc::SchemaError:
        return 2;
      case Errc::InvariantViolation:
        return 3;
      default:
        return 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
