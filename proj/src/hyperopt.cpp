#include "sfc/hyperopt.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"

namespace sfc {

SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace s) {
  if (!j.is_object()) throw Error(Errc::ConfigError, "hyperopt section must be an object");
  try {
    if (j.contains("learning_rate")) {
      s.lr_lo = j.at("learning_rate").at(0).get<double>();
      s.lr_hi = j.at("learning_rate").at(1).get<double>();
    }
    if (j.contains("weight_decay")) {
      s.wd_lo = j.at("weight_decay").at(0).get<double>();
      s.wd_hi = j.at("weight_decay").at(1).get<double>();
    }
    if (j.contains("batch_sizes")) s.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
    if (j.contains("hidden_units")) s.hidden_units = j.at("hidden_units").get<std::vector<int>>();
    if (j.contains("layers")) s.layers = j.at("layers").get<std::vector<int>>();
    if (j.contains("dropouts")) s.dropouts = j.at("dropouts").get<std::vector<double>>();
    if (j.contains("channels")) s.channels = j.at("channels").get<std::vector<int>>();
    if (j.contains("trials")) s.trials = j.at("trials").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::ConfigError, std::string("bad hyperopt section: ") + e.what());
  }
  if (!(s.lr_lo > 0 && s.lr_lo <= s.lr_hi && s.wd_lo > 0 && s.wd_lo <= s.wd_hi) || s.trials < 1 ||
      s.batch_sizes.empty() || s.hidden_units.empty() || s.layers.empty() || s.dropouts.empty() ||
      s.channels.empty())
    throw Error(Errc::ConfigError, "invalid search space");
  return s;
}

nlohmann::json search_space_to_json(const SearchSpace& s) {
  return {{"learning_rate", {s.lr_lo, s.lr_hi}}, {"weight_decay", {s.wd_lo, s.wd_hi}},
          {"batch_sizes", s.batch_sizes},        {"hidden_units", s.hidden_units},
          {"layers", s.layers},                  {"dropouts", s.dropouts},
          {"channels", s.channels},              {"trials", s.trials}};
}

bool TrialConfig::operator==(const TrialConfig& o) const {
  return model == o.model && train_regime_to_json(regime) == train_regime_to_json(o.regime);
}

namespace {

template <typename T>
const T& pick(const std::vector<T>& v, Rng& rng) {
  return v[rng.below(v.size())];
}

double log_uniform(double lo, double hi, Rng& rng) { return std::exp(rng.uniform(std::log(lo), std::log(hi))); }

template <typename T>
bool member(const std::vector<T>& v, const T& x) {
  return std::find(v.begin(), v.end(), x) != v.end();
}

}  // namespace

TrialConfig sample_config(const SearchSpace& space, const std::string& family, const TrainRegime& base, Rng& rng) {
  TrialConfig c;
  c.model.family = family;
  c.regime = base;
  c.regime.learning_rate = log_uniform(space.lr_lo, space.lr_hi, rng);
  c.regime.weight_decay = log_uniform(space.wd_lo, space.wd_hi, rng);
  c.regime.batch_size = pick(space.batch_sizes, rng);
  c.model.hidden = pick(space.hidden_units, rng);
  c.model.layers = pick(space.layers, rng);
  c.regime.dropout = pick(space.dropouts, rng);
  c.model.channels = pick(space.channels, rng);
  return c;
}

bool validate(const SearchSpace& space, const TrialConfig& c) {
  const auto& r = c.regime;
  return r.learning_rate >= space.lr_lo && r.learning_rate <= space.lr_hi && r.weight_decay >= space.wd_lo &&
         r.weight_decay <= space.wd_hi && member(space.batch_sizes, r.batch_size) &&
         member(space.hidden_units, c.model.hidden) && member(space.layers, c.model.layers) &&
         member(space.dropouts, r.dropout) && member(space.channels, c.model.channels);
}

nlohmann::json trial_config_to_json(const TrialConfig& c) {
  return {{"model", model_config_to_json(c.model)}, {"regime", train_regime_to_json(c.regime)}};
}

TrialConfig trial_config_from_json(const nlohmann::json& j) {
  TrialConfig c;
  c.model = model_config_from_json(require<nlohmann::json>(j, "model"));
  c.regime = train_regime_from_json(require<nlohmann::json>(j, "regime"));
  return c;
}

std::string_view trial_status_name(TrialStatus s) { return s == TrialStatus::Completed ? "completed" : "pruned"; }

// -------------------------------------------------------------- pruning

std::optional<double> MedianPruner::median_at(int epoch) const {
  std::vector<double> v;
  for (const auto& c : completed_) {
    if (c.empty()) continue;
    v.push_back(c[std::min(static_cast<std::size_t>(epoch), c.size()) - 1]);
  }
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

bool MedianPruner::should_prune(int epoch, double value) const {
  if (epoch < min_epochs_) return false;
  const auto m = median_at(epoch);
  return m && value > *m;
}

// ---------------------------------------------------------------- study

StudyResult run_study(const std::string& family, const SearchSpace& space, const TrainRegime& base,
                      std::uint64_t seed, const SessionFactory& factory) {
  StudyResult study;
  study.family = family;
  Rng sampler(derive_seed(seed, {hash_tag("sample"), hash_tag(family)}));
  MedianPruner pruner(base.min_epochs);
  std::optional<std::size_t> best;
  for (int t = 1; t <= space.trials; ++t) {
    TrialRecord rec;
    rec.id = t;
    rec.config = sample_config(space, family, base, sampler);
    auto session = factory(rec.config, derive_seed(seed, {hash_tag("trial"), hash_tag(family),
                                                          static_cast<std::uint64_t>(t)}));
    while (auto v = session->next_epoch()) {
      rec.values.push_back(*v);
      if (pruner.should_prune(static_cast<int>(rec.values.size()), *v)) {
        rec.status = TrialStatus::Pruned;
        break;
      }
    }
    if (rec.status == TrialStatus::Completed) {
      rec.objective = session->objective();
      if (!std::isfinite(rec.objective)) throw Error(Errc::InvariantViolation, "completed trial has non-finite objective");
      pruner.add_completed(rec.values);
      if (!best || rec.objective < study.trials[*best].objective) best = study.trials.size();
    } else {
      rec.objective = rec.values.back();
    }
    study.trials.push_back(std::move(rec));
  }
  if (!best) throw Error(Errc::AllTrialsPruned, "every trial of the " + family + " study was pruned");
  study.best = *best;
  return study;
}

namespace {

class FoldSession final : public TrialSession {
 public:
  FoldSession(const TrialConfig& config, const SeriesShape& shape, const nn::Matrix& mix,
              const std::vector<Frame>& raw_frames, const RollingSplitPlan& plan, std::uint64_t seed) {
    if (plan.folds.empty()) throw Error(Errc::ConfigError, "split plan has no folds");
    for (std::size_t k = 0; k < plan.folds.size(); ++k) {
      const Fold& fold = plan.folds[k];
      if (fold.val.end > raw_frames.size()) throw Error(Errc::SeriesTooShort, "fold extends past the series");
      auto f = std::make_unique<FoldState>(config.regime);
      const MinMaxScaler scaler =
          MinMaxScaler::fit(std::span<const Frame>(raw_frames.data() + fold.train.begin, fold.train.size()));
      f->frames = scaler.transform(std::span<const Frame>(raw_frames.data(), fold.val.end));
      const std::uint64_t s = derive_seed(seed, {k});
      f->model = make_predictor(config.model, shape, mix, derive_seed(s, {hash_tag("init")}));
      if (f->model->trainable()) {
        f->trainer = std::make_unique<EpochTrainer>(*f->model, f->frames, fold, config.regime, s);
      } else {
        const auto train = targets_in(fold.train, shape.window, fold.train.begin);
        if (train.empty()) throw Error(Errc::SeriesTooShort, "fold has no training windows");
        f->model->fit_direct(f->frames, train);
        f->stopper.update(1, mean_squared_error(*f->model, f->frames, targets_in(fold.val, shape.window)));
        f->done = true;
        direct_ = true;
      }
      folds_.push_back(std::move(f));
    }
  }

  std::optional<double> next_epoch() override {
    if (direct_) {
      if (reported_) return std::nullopt;
      reported_ = true;
      return objective();
    }
    bool any = false;
    for (auto& f : folds_) {
      if (f->done) continue;
      any = true;
      const EpochStat s = f->trainer->run_epoch();
      f->done = f->stopper.update(s.epoch, s.val_loss);
    }
    if (!any) return std::nullopt;
    return objective();
  }

  double objective() const override {
    double sum = 0.0;
    for (const auto& f : folds_) sum += f->stopper.best();
    return sum / static_cast<double>(folds_.size());
  }

 private:
  struct FoldState {
    explicit FoldState(const TrainRegime& r) : stopper(r) {}
    std::vector<Frame> frames;
    std::unique_ptr<Predictor> model;
    std::unique_ptr<EpochTrainer> trainer;
    EarlyStopper stopper;
    bool done = false;
  };
  std::vector<std::unique_ptr<FoldState>> folds_;
  bool direct_ = false, reported_ = false;
};

}  // namespace

std::unique_ptr<TrialSession> make_fold_session(const TrialConfig& config, const SeriesShape& shape,
                                                const nn::Matrix& mix, const std::vector<Frame>& raw_frames,
                                                const RollingSplitPlan& plan, std::uint64_t seed) {
  return std::make_unique<FoldSession>(config, shape, mix, raw_frames, plan, seed);
}

StudyResult run_study(const std::string& family, const std::vector<Frame>& raw_frames, const RollingSplitPlan& plan,
                      const SeriesShape& shape, const nn::Matrix& mix, const SearchSpace& space,
                      const TrainRegime& base, std::uint64_t seed) {
  return run_study(family, space, base, seed, [&](const TrialConfig& c, std::uint64_t s) {
    return make_fold_session(c, shape, mix, raw_frames, plan, s);
  });
}

std::string study_to_csv(const StudyResult& study) {
  std::string out = "trial,status,objective,learning_rate,weight_decay,batch_size,hidden,layers,dropout,channels\n";
  char buf[256];
  for (const auto& t : study.trials) {
    const auto& c = t.config;
    std::snprintf(buf, sizeof buf, "%d,%s,%.17g,%.17g,%.17g,%zu,%d,%d,%.17g,%d\n", t.id,
                  std::string(trial_status_name(t.status)).c_str(), t.objective, c.regime.learning_rate,
                  c.regime.weight_decay, c.regime.batch_size, c.model.hidden, c.model.layers, c.regime.dropout,
                  c.model.channels);
    out += buf;
  }
  return out;
}

std::vector<MemberSpec> select_ensemble_members(const std::map<std::string, StudyResult>& studies,
                                                MemberSelection mode) {
  std::vector<std::string> chosen;
  if (mode == MemberSelection::DefaultTrio) {
    std::string missing;
    for (const auto& f : kDefaultTrio)
      if (!studies.count(f)) missing += (missing.empty() ? "" : ", ") + f;
    if (!missing.empty()) throw Error(Errc::MissingFamily, "missing studies for: " + missing);
    chosen = kDefaultTrio;
  } else {
    if (studies.size() < 3) {
      std::string missing;
      for (const auto& f : kPredictorFamilies)
        if (!studies.count(f)) missing += (missing.empty() ? "" : ", ") + f;
      throw Error(Errc::MissingFamily, "top-3 selection needs three studied families; missing: " + missing);
    }
    std::vector<std::pair<double, std::string>> ranked;
    for (const auto& [name, s] : studies) ranked.emplace_back(s.best_objective(), name);
    std::sort(ranked.begin(), ranked.end());
    for (std::size_t i = 0; i < 3; ++i) chosen.push_back(ranked[i].second);
  }
  std::vector<MemberSpec> out;
  for (const auto& f : chosen) {
    const auto& c = studies.at(f).best_config();
    out.push_back({c.model, c.regime});
  }
  return out;
}

}  // namespace sfc
