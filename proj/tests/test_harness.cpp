#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "sfc/harness.hpp"

using namespace sfc;

namespace {

nlohmann::json small_config(const std::filesystem::path& out) {
  return {{"topology", "topology.json"},
          {"catalog", "catalog.json"},
          {"environment", {{"horizon", 150}}},
          {"forecasting",
           {{"window", 5},
            {"folds", 2},
            {"telemetry_steps", 120},
            {"regime", {{"max_epochs", 2}, {"min_epochs", 1}, {"patience", 1}}}}},
          {"ensemble",
           {{"members", {{{"family", "persistence"}}, {{"family", "linear_ar"}}, {{"family", "lstm"}, {"hidden", 4}}}}}},
          {"run", {{"seeds", {1, 2}}, {"threads", 1}, {"output", out.string()}}}};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

RunReport report(std::array<std::int64_t, kServiceCount> arrivals, std::array<std::int64_t, kServiceCount> admitted) {
  RunReport r;
  r.policy = "baseline";
  r.seed = 1;
  r.trace_digest = "t";
  r.arrivals = arrivals;
  r.admitted = admitted;
  return r;
}

}  // namespace

TEST_CASE("acceptance ratio") {
  const auto r = report({10, 0, 0, 0, 0, 0}, {3, 0, 0, 0, 0, 0});
  const auto a = acceptance_ratio(r);
  CHECK(a.overall == doctest::Approx(0.3));
  CHECK(*a.per_service[0] == doctest::Approx(0.3));
  CHECK_FALSE(a.per_service[1]);
  testing::check_error(Errc::NoArrivals, [] { acceptance_ratio(report({}, {})); });

  std::vector<EventRecord> ev;
  for (int i = 0; i < 4; ++i) ev.push_back({0, "arrive", i, ServiceClass::CG, 0, 0});
  ev.push_back({1, "serve", 2, ServiceClass::CG, 0, 0});
  CHECK(acceptance_from_events(ev) == 0.25);
}

TEST_CASE("latency statistics") {
  const auto s = latency_stats({0.003, 0.001, 0.002});
  CHECK(s.mean == doctest::Approx(0.002));
  CHECK(s.p50 == doctest::Approx(0.002));
  CHECK(s.p95 == doctest::Approx(0.0029));
  CHECK(s.count == 3);
  const auto one = latency_stats({0.004});
  CHECK(one.mean == 0.004);
  CHECK(one.p50 == 0.004);
  CHECK(one.p95 == 0.004);
  CHECK(latency_stats({}).count == 0);

  auto r = report({2, 1, 0, 0, 0, 0}, {2, 0, 0, 0, 0, 0});
  r.latencies[0] = {0.001, 0.002};
  const auto summary = latency_summary(r);
  CHECK(summary.size() == 1);
  CHECK(summary.at(ServiceClass::CG).mean == doctest::Approx(0.0015));
}

TEST_CASE("run report json round trip") {
  auto r = report({5, 4, 3, 2, 1, 0}, {5, 3, 1, 2, 0, 0});
  r.latencies[1] = {0.0031, 0.0042, 0.0049};
  r.config_digest = "abc";
  CHECK(run_report_from_json(run_report_to_json(r)) == r);
}

TEST_CASE("comparison averages per-seed ratios") {
  auto b1 = report({10, 1, 1, 1, 1, 1}, {5, 1, 1, 1, 1, 1});
  auto b2 = report({2, 1, 1, 1, 1, 1}, {2, 1, 1, 1, 1, 1});
  b2.seed = 2;
  b1.latencies[0] = {0.001, 0.001, 0.001, 0.001, 0.001};
  b2.latencies[0] = {0.004, 0.004};
  auto p1 = b1, p2 = b2;
  p1.policy = p2.policy = "predictive";
  p1.admitted[0] = 10;
  const auto c = compare({b1, b2}, {p1, p2});
  CHECK(*c.services[0].baseline_acceptance == doctest::Approx(0.75));
  CHECK(*c.services[0].predictive_acceptance == doctest::Approx(1.0));
  CHECK(*c.services[0].acceptance_delta == doctest::Approx(0.25));
  CHECK(*c.services[0].baseline_latency == doctest::Approx(13.0 / 7 * 1e-3));
  CHECK(c.seeds == std::vector<std::uint64_t>{1, 2});
  CHECK(acceptance_csv(c).rfind("seed,policy,service,arrivals,admitted,acceptance\n", 0) == 0);
  CHECK(latency_csv(c).rfind("seed,policy,service,count,mean,p50,p95\n", 0) == 0);

  p2.trace_digest = "other";
  testing::check_error(Errc::InvariantViolation, [&] { compare({b1, b2}, {p1, p2}); });
}

TEST_CASE("config errors") {
  testing::check_error(Errc::ConfigError, [] { experiment_from_json({{"topology", "missing.json"}}, "config"); });
  auto j = small_config("out");
  j["ensemble"]["selection"] = "best";
  testing::check_error(Errc::ConfigError, [&] { experiment_from_json(j, "config"); });
  j = small_config("out");
  j["hyperopt"] = {{"families", {"rnn"}}};
  testing::check_error(Errc::ConfigError, [&] { experiment_from_json(j, "config"); });
  testing::check_error(Errc::ConfigError, [] { load_experiment("config/none.json"); });

  const auto a = experiment_from_json(small_config("x"), "config");
  auto k = small_config("y");
  k["run"]["threads"] = 4;
  CHECK(experiment_from_json(k, "config").digest == a.digest);
  k["environment"]["horizon"] = 151;
  CHECK(experiment_from_json(k, "config").digest != a.digest);
  CHECK(a.digest.size() == 16);
  CHECK(load_experiment("config/experiment.json").run.seeds.size() == 10);
}

TEST_CASE("forecaster without enough history leaves the policies identical") {
  const auto cfg = experiment_from_json(small_config("out"), "config");
  class Never : public DcForecaster {
   public:
    std::size_t window() const override { return 1000000; }
    CapacityForecast forecast(const TelemetryLog&) const override { throw Error(Errc::InvariantViolation, "called"); }
  };
  const auto c = evaluate(cfg, {3}, std::make_shared<Never>());
  for (std::size_t s = 0; s < kServiceCount; ++s) {
    if (c.services[s].acceptance_delta) CHECK(*c.services[s].acceptance_delta == 0.0);
    if (c.services[s].latency_delta) CHECK(*c.services[s].latency_delta == 0.0);
  }
  CHECK(c.baseline[0].admitted == c.predictive[0].admitted);
}

TEST_CASE("telemetry run is deterministic") {
  const auto cfg = experiment_from_json(small_config("out"), "config");
  const auto a = simulate_telemetry(cfg, 4);
  const auto b = simulate_telemetry(cfg, 4);
  CHECK(a.steps() == 120);
  CHECK(telemetry_to_csv(a) == telemetry_to_csv(b));
}

TEST_CASE("end-to-end runs are byte-identical") {
  const auto root = std::filesystem::temp_directory_path() / "sfc_harness_test";
  std::filesystem::remove_all(root);
  const auto cfg = experiment_from_json(small_config(root / "a"), "config");
  auto cfg_b = experiment_from_json(small_config(root / "b"), "config");
  const auto ra = run_experiment(cfg, cfg.run.seeds);
  const auto rb = run_experiment(cfg_b, cfg_b.run.seeds);
  const auto da = output_dir(cfg), db = output_dir(cfg_b);
  CHECK(da.filename() == db.filename());
  for (const char* f : {"report.json", "comparison.csv", "acceptance.csv", "latency.csv", "ensemble.txt",
                        "runs/baseline_1.json", "runs/predictive_2.json"}) {
    CAPTURE(f);
    REQUIRE(std::filesystem::exists(da / f));
    CHECK(slurp(da / f) == slurp(db / f));
  }
  CHECK(ra.baseline.size() == 2);
  CHECK(nlohmann::json::parse(slurp(da / "report.json")).at("config_digest") == cfg.digest);
  std::filesystem::remove_all(root);
}
