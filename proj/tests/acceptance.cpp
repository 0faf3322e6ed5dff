// Acceptance checks; one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>

#include "ensemble_oracle.hpp"
#include "sfc/agent.hpp"
#include "sfc/ensemble.hpp"
#include "sfc/error.hpp"
#include "sfc/forecasting.hpp"
#include "sfc/harness.hpp"

using namespace sfc;
namespace fs = std::filesystem;

namespace {

const fs::path kConfig = "config/experiment.json";

int failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("[%s] %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, double a, double b = 0, double c = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// Runs a check, turning an escaped exception into a failure line.
void guarded(const char* name, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

void equation_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240601);
  double worst = 0.0;
  int instances = 0, degenerate = 0, mismatched = 0;
  while (instances < 1000) {
    const auto rec = oracle::random_record(rng, 3, 1);
    std::vector<long double> errs;
    bool skip = false;
    for (std::size_t m = 0; m < 3 && !skip; ++m) {
      const auto want = oracle::nrmse(rec, m, 0);
      if (!want) {
        try {
          nrmse(rec, m, 0);
          ++mismatched;
        } catch (const Error& e) {
          if (e.code() != Errc::DegenerateRange) ++mismatched;
        }
        skip = true;
        break;
      }
      worst = std::max(worst, std::abs(nrmse(rec, m, 0) - static_cast<double>(*want)) / static_cast<double>(std::max(1.0L, *want)));
      errs.push_back(*want);
    }
    if (skip) {
      ++degenerate;
      continue;
    }
    ++instances;
    const std::vector<double> e(errs.begin(), errs.end());
    const auto s = scores(e);
    for (std::size_t m = 0; m < 3; ++m)
      worst = std::max(worst, std::abs(s[m] + static_cast<double>(errs[m] * errs[m])) /
                                  static_cast<double>(std::max(1.0L, errs[m] * errs[m])));
    const auto w = softmax_weights(s);
    const auto ow = oracle::weights(errs);
    for (std::size_t m = 0; m < 3; ++m) worst = std::max(worst, std::abs(w[m] - static_cast<double>(ow[m])));
    const std::vector<double> preds{rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)};
    const EnsembleSpec spec{rec.models, {"f"}, {e}, {w}};
    const double y = ensemble_predict(spec, {{preds[0]}, {preds[1]}, {preds[2]}})[0];
    worst = std::max(worst, std::abs(y - static_cast<double>(oracle::combine(ow, preds))));
  }
  const double dt = seconds_since(t0);
  report("equation oracle", worst <= 1e-12 && mismatched == 0 && dt < 10.0,
         fmt("1000 instances, max relative deviation %.3g, %.0f degenerate records rejected, %.2f s", worst, degenerate, dt) +
             (mismatched ? ", degenerate handling mismatch" : ""));
}

void winner_rate_contract() {
  Rng rng(77);
  double worst = 0.0;
  int ties = 0;
  for (int t = 0; t < 2000; ++t) {
    const std::size_t cases = 1 + rng.below(40), models = 1 + rng.below(6);
    std::vector<std::vector<double>> table(cases, std::vector<double>(models));
    const bool coarse = rng.bernoulli(0.5);
    for (auto& row : table) {
      for (auto& x : row) x = coarse ? static_cast<double>(rng.below(3)) : rng.uniform();
      const double best = *std::min_element(row.begin(), row.end());
      ties += std::count(row.begin(), row.end(), best) > 1;
    }
    const auto w = winner_rate(table);
    worst = std::max(worst, std::abs(std::accumulate(w.begin(), w.end(), 0.0) - 100.0));
  }
  report("winner-rate contract", worst <= 1e-9,
         fmt("2000 tables, %.0f tied cases, max |sum - 100| = %.3g", ties, worst));
}

void early_stopping() {
  const TrainRegime table;  // min 20, patience 15, max 200
  auto stop_epoch = [&](const std::function<double(int)>& loss) {
    EarlyStopper s(table);
    int e = 1;
    while (!s.update(e, loss(e))) ++e;
    return e;
  };
  const int flat = stop_epoch([](int) { return 0.5; });
  const int improving = stop_epoch([](int e) { return 1.0 / e; });
  report("early stopping", flat == 35 && improving == 200,
         fmt("flat trace stops at %.0f, improving trace stops at %.0f", flat, improving));
}

void validation_protocol() {
  Rng rng(31);
  int bad = 0, plans = 0;
  while (plans < 50) {
    const std::size_t T = 100 + rng.below(5000), W = 1 + rng.below(48);
    RollingSplitPlan p;
    try {
      p = rolling_splits(T, W);
    } catch (const Error&) {
      continue;
    }
    ++plans;
    bool ok = p.test.end == T && p.test.size() == static_cast<std::size_t>(std::floor(0.1 * static_cast<double>(T)));
    for (const auto& f : p.folds) {
      ok = ok && f.train.end <= f.val.begin && f.val.end <= p.test.begin && f.train.size() > W;
      const auto train = targets_in(f.train, W, f.train.begin);
      const auto val = targets_in(f.val, W);
      ok = ok && !train.empty() && !val.empty() && train.back() < val.front();
      for (auto t : val) ok = ok && t >= f.val.begin && t < f.val.end;
    }
    ok = ok && p.folds.back().val.end == p.test.begin;
    bad += !ok;
  }
  report("validation protocol", bad == 0, fmt("50 (T, W) plans, %.0f violating train < val < test", bad));
}

void forecasting_sanity() {
  // Sinusoids satisfy x_t = 2cos(w) x_{t-1} - x_{t-2} exactly.
  const std::size_t T = 1500, D = 3;
  std::vector<Frame> frames;
  for (std::size_t t = 0; t < T; ++t) {
    Frame f(kFeatureCount, D);
    for (Eigen::Index j = 0; j < f.rows(); ++j)
      for (Eigen::Index d = 0; d < f.cols(); ++d)
        f(j, d) = 50.0 + 10.0 * std::sin(0.07 * static_cast<double>((j + 1) * (d + 1)) * static_cast<double>(t) +
                                          static_cast<double>(d));
    frames.push_back(f);
  }
  const std::size_t W = 20;
  const auto plan = rolling_splits(T, W);
  const auto mix = nn::Matrix::Zero(D, D).eval();
  const SeriesShape shape{W, kFeatureCount, D};
  const Fold last{{0, plan.test.begin}, plan.test};
  const auto targets = targets_in(plan.test, W);
  ValidationRecord rec;
  rec.models = {"linear_ar", "persistence"};
  ValidationRecord::FoldData fd;
  fd.truth = truth_rows(frames, targets);
  for (const std::string family : {"linear_ar", "persistence"}) {
    const auto f = fit_on_fold({family}, shape, mix, frames, last, {}, 1);
    fd.preds.push_back(predict_rows(f, frames, targets));
  }
  rec.folds.push_back(fd);
  double lin = 0, per = 0;
  for (std::size_t j = 0; j < kFeatureCount; ++j) {
    lin = std::max(lin, nrmse(rec, 0, j));
    per = std::min(per == 0 ? INFINITY : per, nrmse(rec, 1, j));
  }
  report("forecasting sanity", lin < 0.01 && per > lin,
         fmt("test nRMSE: linear_ar worst feature %.3g, persistence best feature %.3g", lin, per));
}

double rel_error(double a, double b) { return std::abs(a - b) / std::max(std::abs(a) + std::abs(b), 1e-6); }

void gradient_suite(const Topology& topo) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(5);
  std::vector<std::string> lines;
  double worst = 0.0;

  {
    nn::Mlp net({12, 16, 16, 9}, rng);
    nn::Matrix x = nn::Matrix::Random(12, 8);
    std::vector<std::size_t> actions;
    std::vector<double> targets;
    for (int b = 0; b < 8; ++b) {
      actions.push_back(rng.below(9));
      targets.push_back(rng.uniform(-2, 2));
    }
    nn::Vector grad, scratch;
    net.td_loss_grad(x, actions, targets, grad);
    double w = 0;
    for (int probe = 0; probe < 100; ++probe) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grad.size())));
      const double h = 1e-6, p = net.params()[i];
      net.params()[i] = p + h;
      const double up = net.td_loss_grad(x, actions, targets, scratch);
      net.params()[i] = p - h;
      const double down = net.td_loss_grad(x, actions, targets, scratch);
      net.params()[i] = p;
      w = std::max(w, rel_error(grad[i], (up - down) / (2 * h)));
    }
    worst = std::max(worst, w);
    lines.push_back(fmt("mlp %.2g", w));
  }

  const auto D = topo.size();
  const auto mix = neighbor_mean_matrix(topo);
  const SeriesShape shape{6, kFeatureCount, D};
  std::vector<Frame> frames;
  for (int t = 0; t < 16; ++t) {
    Frame f(kFeatureCount, static_cast<Eigen::Index>(D));
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform();
    frames.push_back(f);
  }
  const std::vector<std::size_t> targets{6, 9, 12, 15};
  for (const std::string family : {"lstm", "tcn", "tgnn", "stgnn"}) {
    auto model = make_predictor({family, 8, 2, 4}, shape, mix, 11);
    nn::Vector grad;
    model->loss_grad(frames, targets, &grad, 0.0, nullptr);
    double w = 0;
    for (int probe = 0; probe < 100; ++probe) {
      const auto i = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(grad.size())));
      const double h = 1e-6, p = model->params()[i];
      model->params()[i] = p + h;
      const double up = model->loss_grad(frames, targets, nullptr, 0.0, nullptr);
      model->params()[i] = p - h;
      const double down = model->loss_grad(frames, targets, nullptr, 0.0, nullptr);
      model->params()[i] = p;
      w = std::max(w, rel_error(grad[i], (up - down) / (2 * h)));
    }
    worst = std::max(worst, w);
    lines.push_back(fmt("%.2g", w));
    lines.back() = family + " " + lines.back();
  }
  const double dt = seconds_since(t0);
  std::string detail = "max relative error:";
  for (const auto& l : lines) detail += " " + l;
  report("gradient suite", worst < 1e-4 && dt < 60.0, detail + fmt(", %.2f s", dt));
}

void learning_signal() {
  const auto t0 = std::chrono::steady_clock::now();
  AgentConfig c;
  c.epsilon_decay_steps = 3000;
  const int episodes = 100, decile = episodes / 10;
  int improved = 0;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = train_agent(smoke_env_factory(), c, episodes, seed);
    double first = 0, last = 0;
    for (int i = 0; i < decile; ++i) {
      first += r.trace[static_cast<std::size_t>(i)].total_reward;
      last += r.trace[static_cast<std::size_t>(episodes - decile + i)].total_reward;
    }
    improved += last > first;
    detail += fmt(" %.1f->%.1f", first / decile, last / decile);
  }
  const double dt = seconds_since(t0);
  report("learning signal", improved >= 8 && dt < 600.0,
         fmt("%.0f/10 seeds improve, %.1f s;", improved, dt) + detail);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::shared_ptr<EnsembleForecaster> load_deployed(const ExperimentConfig& cfg, const fs::path& dir) {
  const auto spec = load_ensemble_spec(dir / "ensemble.txt");
  const auto mix = neighbor_mean_matrix(cfg.topology);
  std::vector<FittedForecaster> members;
  for (std::size_t m = 0; m < spec.models.size(); ++m)
    members.push_back(load_forecaster(dir / "forecasters" / (std::to_string(m) + "_" + spec.models[m] + ".json"), mix));
  return std::make_shared<EnsembleForecaster>(spec, std::move(members));
}

void weight_contract(const fs::path& run_dir) {
  Rng rng(8);
  int specs = 0, broken = 0;
  auto check = [&](const EnsembleSpec& s) {
    ++specs;
    try {
      check_weight_contract(s);
    } catch (const Error&) {
      ++broken;
    }
  };
  for (int i = 0; i < 500; ++i) {
    const auto rec = oracle::random_record(rng, 2 + rng.below(4), 3);
    check(build_ensemble_spec(rec, {"a", "b", "c"}));
  }
  for (const auto& entry : fs::recursive_directory_iterator(run_dir.parent_path()))
    if (entry.path().filename() == "ensemble.txt") check(load_ensemble_spec(entry.path()));
  report("weight contract", broken == 0 && specs > 500,
         fmt("%.0f specs checked (random records and every stored run), %.0f violations", specs, broken));
}

void constraint_suite(const ExperimentConfig& cfg, std::shared_ptr<const DcForecaster> forecaster) {
  int sweeps = 0, violations = 0, over_budget = 0, served = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto requests = evaluation_requests(cfg, seed);
    for (const auto policy : {PlacementPolicy::Baseline, PlacementPolicy::Predictive}) {
      EnvConfig ec = cfg.environment;
      ec.policy = policy;
      Environment env(cfg.topology, cfg.catalog, ec);
      if (policy == PlacementPolicy::Predictive) env.set_forecaster(forecaster);
      env.reset(requests, seed);
      while (!env.done()) {
        env.step(Action::wait());
        ++sweeps;
        try {
          env.check_invariants();
        } catch (const Error& e) {
          if (!violations++) first = e.what();
        }
      }
      for (const auto& p : env.progress()) {
        if (p.status != RequestStatus::Served) continue;
        ++served;
        if (Environment::e2e_delay(p) > cfg.catalog.service(p.request.service).delay_budget + kDelayTolerance)
          ++over_budget;
      }
    }
  }
  report("constraint suite", violations == 0 && over_budget == 0,
         fmt("10 seeds x 2 policies, %.0f step sweeps, %.0f violations, ", sweeps, violations) +
             fmt("%.0f admitted requests, %.0f over budget", served, over_budget) +
             (first.empty() ? "" : "; first: " + first));
}

void fig3(const ComparisonReport& r, double seconds) {
  auto delta = [&](ServiceClass s) { return r.services[static_cast<std::size_t>(s)].acceptance_delta.value_or(NAN); };
  bool ok = r.seeds.size() >= 10 && seconds < 900.0;
  std::string detail = fmt("%.0f seeds, %.0f s; acceptance delta pp:", static_cast<double>(r.seeds.size()), seconds);
  for (auto s : {ServiceClass::AR, ServiceClass::In4, ServiceClass::MIoT}) {
    ok = ok && delta(s) >= 0.05;
    detail += " " + std::string(service_name(s)) + fmt(" %+.2f", 100 * delta(s));
  }
  for (auto s : {ServiceClass::CG, ServiceClass::VoIP, ServiceClass::VS}) {
    ok = ok && delta(s) > -0.02;
    detail += " " + std::string(service_name(s)) + fmt(" %+.2f", 100 * delta(s));
  }
  int faster = 0;
  detail += "; latency ms:";
  for (auto s : {ServiceClass::VoIP, ServiceClass::VS, ServiceClass::CG}) {
    const auto& d = r.services[static_cast<std::size_t>(s)];
    if (d.latency_delta && *d.latency_delta < 0) ++faster;
    detail += " " + std::string(service_name(s)) +
              fmt(" %.3f->%.3f", 1e3 * d.baseline_latency.value_or(NAN), 1e3 * d.predictive_latency.value_or(NAN));
  }
  ok = ok && faster >= 2;
  report("directional predictive gain", ok, detail);
}

void determinism(const fs::path& first_root, const fs::path& second_root, const std::vector<std::uint64_t>& seeds) {
  const auto t0 = std::chrono::steady_clock::now();
  setenv("SFCSIM_OUT", second_root.c_str(), 1);
  const auto cfg = load_experiment(kConfig);
  run_experiment(cfg, seeds);
  const auto a = first_root / ("exp-" + cfg.digest), b = second_root / ("exp-" + cfg.digest);
  int files = 0, differing = 0;
  std::string example;
  for (const auto& entry : fs::recursive_directory_iterator(a)) {
    if (!entry.is_regular_file()) continue;
    ++files;
    const auto rel = fs::relative(entry.path(), a);
    if (!fs::exists(b / rel) || slurp(entry.path()) != slurp(b / rel)) {
      if (!differing++) example = rel.string();
    }
  }
  report("end-to-end determinism", differing == 0 && files > 0,
         fmt("%.0f artifacts compared, %.0f differ, %.0f s", files, differing, seconds_since(t0)) +
             (example.empty() ? "" : "; e.g. " + example));
}

}  // namespace

int main() {
  const auto cfg = load_experiment(kConfig);
  const fs::path root = fs::absolute(fs::temp_directory_path() / "sfcsim_acceptance");
  fs::remove_all(root);

  guarded("equation oracle", equation_oracle);
  guarded("winner-rate contract", winner_rate_contract);
  guarded("early stopping", early_stopping);
  guarded("validation protocol", validation_protocol);
  guarded("forecasting sanity", forecasting_sanity);
  guarded("gradient suite", [&] { gradient_suite(cfg.topology); });
  guarded("learning signal", learning_signal);

  const auto first_root = root / "first";
  const auto run_dir = first_root / ("exp-" + cfg.digest);
  bool ran = false;
  guarded("directional predictive gain", [&] {
    setenv("SFCSIM_OUT", first_root.c_str(), 1);
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_experiment(cfg, cfg.run.seeds);
    ran = true;
    fig3(r, seconds_since(t0));
  });
  if (ran) {
    guarded("weight contract", [&] { weight_contract(run_dir); });
    guarded("constraint suite", [&] { constraint_suite(cfg, load_deployed(cfg, run_dir)); });
    guarded("end-to-end determinism", [&] { determinism(first_root, root / "second", cfg.run.seeds); });
  } else {
    for (const char* name : {"weight contract", "constraint suite", "end-to-end determinism"})
      report(name, false, "skipped: the full experiment did not complete");
  }
  fs::remove_all(root);
  std::printf("%d of 11 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
