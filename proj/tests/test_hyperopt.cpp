#include <algorithm>
#include <cmath>

#include "helpers.hpp"
#include "sfc/hyperopt.hpp"

using namespace sfc;

namespace {

class TraceSession : public TrialSession {
 public:
  explicit TraceSession(std::vector<double> values) : values_(std::move(values)) {}
  std::optional<double> next_epoch() override {
    if (i_ >= values_.size()) return std::nullopt;
    return values_[i_++];
  }
  double objective() const override { return values_.back(); }

 private:
  std::vector<double> values_;
  std::size_t i_ = 0;
};

// Objective decreases with the learning rate's distance from 1e-3.
SessionFactory quadratic_factory() {
  return [](const TrialConfig& c, std::uint64_t) {
    const double d = std::log10(c.regime.learning_rate) + 3.0;
    std::vector<double> v;
    for (int e = 1; e <= 25; ++e) v.push_back(d * d + 1.0 / e);
    return std::make_unique<TraceSession>(v);
  };
}

}  // namespace

TEST_CASE("sampled configurations stay inside the space") {
  SearchSpace space;
  Rng rng(1);
  std::vector<double> lrs, wds;
  for (int i = 0; i < 4000; ++i) {
    const auto c = sample_config(space, "lstm", {}, rng);
    CHECK(validate(space, c));
    CHECK(c.model.family == "lstm");
    lrs.push_back(c.regime.learning_rate);
    wds.push_back(c.regime.weight_decay);
  }
  std::sort(lrs.begin(), lrs.end());
  std::sort(wds.begin(), wds.end());
  const double lr_median = lrs[lrs.size() / 2], wd_median = wds[wds.size() / 2];
  CHECK(lr_median > 1e-3 / 1.2);
  CHECK(lr_median < 1e-3 * 1.2);
  CHECK(wd_median > 1e-4 / 1.2);
  CHECK(wd_median < 1e-4 * 1.2);

  TrialConfig bad;
  bad.regime.batch_size = 12;
  CHECK_FALSE(validate(space, bad));
}

TEST_CASE("sampling keeps fields the space does not cover") {
  TrainRegime base;
  base.max_epochs = 7;
  base.patience = 3;
  Rng rng(2);
  const auto c = sample_config({}, "tcn", base, rng);
  CHECK(c.regime.max_epochs == 7);
  CHECK(c.regime.patience == 3);
  CHECK(trial_config_from_json(trial_config_to_json(c)) == c);
}

TEST_CASE("search space json") {
  SearchSpace s;
  s.trials = 3;
  s.batch_sizes = {4};
  const auto back = search_space_from_json(search_space_to_json(s));
  CHECK(back.trials == 3);
  CHECK(back.batch_sizes == std::vector<std::size_t>{4});
  CHECK(back.lr_hi == s.lr_hi);
}

TEST_CASE("median pruner") {
  MedianPruner p(2);
  CHECK_FALSE(p.median_at(1));
  p.add_completed({1, 1, 1});
  p.add_completed({3, 3, 3});
  p.add_completed({2});
  CHECK(*p.median_at(3) == 2.0);
  CHECK_FALSE(p.should_prune(1, 100.0));
  CHECK(p.should_prune(2, 2.5));
  CHECK_FALSE(p.should_prune(2, 2.0));
  p.add_completed({10, 10, 10});
  CHECK(*p.median_at(2) == 2.5);
}

TEST_CASE("a one-trial study completes") {
  SearchSpace space;
  space.trials = 1;
  const auto r = run_study("lstm", space, {}, 5, quadratic_factory());
  REQUIRE(r.trials.size() == 1);
  CHECK(r.trials[0].status == TrialStatus::Completed);
  CHECK(r.trials[0].values.size() == 25);
  CHECK(r.best == 0);
}

TEST_CASE("a worse second trial is pruned at min_epochs") {
  TrainRegime base;
  base.min_epochs = 20;
  SearchSpace space;
  space.trials = 2;
  int calls = 0;
  SessionFactory f = [&](const TrialConfig&, std::uint64_t) {
    const double level = calls++ == 0 ? 1.0 : 2.0;
    return std::make_unique<TraceSession>(std::vector<double>(40, level));
  };
  const auto r = run_study("lstm", space, base, 5, f);
  REQUIRE(r.trials.size() == 2);
  CHECK(r.trials[1].status == TrialStatus::Pruned);
  CHECK(r.trials[1].values.size() == 20);
  CHECK(r.trials[1].objective == 2.0);
  CHECK(r.best == 0);

  calls = 0;
  SessionFactory always_worse = [&](const TrialConfig&, std::uint64_t) {
    return std::make_unique<TraceSession>(std::vector<double>(5, 1.0));
  };
  CHECK(run_study("lstm", space, base, 5, always_worse).trials[1].status == TrialStatus::Completed);
}

TEST_CASE("studies are deterministic and pick the best completed trial") {
  SearchSpace space;
  space.trials = 30;
  const auto a = run_study("tgnn", space, {}, 9, quadratic_factory());
  const auto b = run_study("tgnn", space, {}, 9, quadratic_factory());
  const auto c = run_study("tgnn", space, {}, 10, quadratic_factory());
  CHECK(study_to_csv(a) == study_to_csv(b));
  CHECK(study_to_csv(a) != study_to_csv(c));
  CHECK(a.trials[a.best].status == TrialStatus::Completed);
  for (const auto& t : a.trials) CHECK(validate(space, t.config));
  for (const auto& t : a.trials)
    if (t.status == TrialStatus::Completed) CHECK(a.best_objective() <= t.objective);
  CHECK(study_to_csv(a).rfind("trial,status,objective,learning_rate,weight_decay,batch_size,hidden,layers,dropout,channels\n", 0) == 0);
}

TEST_CASE("study on real folds") {
  std::vector<Frame> frames;
  for (std::size_t t = 0; t < 100; ++t)
    frames.push_back(Frame::Constant(kFeatureCount, 2, std::cos(0.25 * static_cast<double>(t))));
  const auto plan = rolling_splits(100, 4, 2);
  SearchSpace space;
  space.trials = 2;
  space.hidden_units = {4};
  TrainRegime base;
  base.max_epochs = 3;
  base.min_epochs = 1;
  const auto mix = nn::Matrix::Zero(2, 2).eval();
  const auto r = run_study("lstm", frames, plan, {4, kFeatureCount, 2}, mix, space, base, 1);
  CHECK(r.trials.size() == 2);
  for (const auto& t : r.trials)
    for (std::size_t e = 1; e < t.values.size(); ++e) CHECK(t.values[e] <= t.values[e - 1]);
  const auto p = run_study("persistence", frames, plan, {4, kFeatureCount, 2}, mix, space, base, 1);
  CHECK(p.trials[0].values.size() == 1);
}

TEST_CASE("member selection") {
  SearchSpace space;
  space.trials = 3;
  std::map<std::string, StudyResult> studies;
  for (const std::string fam : {"lstm", "tcn", "tgnn"}) studies[fam] = run_study(fam, space, {}, 1, quadratic_factory());
  try {
    select_ensemble_members(studies);
    FAIL("expected MissingFamily");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingFamily);
    CHECK(std::string(e.what()).find("stgnn") != std::string::npos);
  }
  studies["stgnn"] = run_study("stgnn", space, {}, 1, quadratic_factory());
  const auto trio = select_ensemble_members(studies);
  REQUIRE(trio.size() == 3);
  CHECK(trio[0].model.family == "lstm");
  CHECK(trio[1].model.family == "tgnn");
  CHECK(trio[2].model.family == "stgnn");
  CHECK(select_ensemble_members(studies, MemberSelection::TopThree).size() == 3);
}
