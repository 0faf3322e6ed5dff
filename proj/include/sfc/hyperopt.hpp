#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/ensemble.hpp"
#include "sfc/forecasting.hpp"
#include "sfc/rng.hpp"

namespace sfc {

struct SearchSpace {
  double lr_lo = 1e-4, lr_hi = 1e-2;
  double wd_lo = 1e-6, wd_hi = 1e-2;
  std::vector<std::size_t> batch_sizes = {8, 16, 32, 64};
  std::vector<int> hidden_units = {16, 32, 64, 128};
  std::vector<int> layers = {1, 2, 3};
  std::vector<double> dropouts = {0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<int> channels = {16, 32, 64};
  int trials = 50;
};

SearchSpace search_space_from_json(const nlohmann::json& j, SearchSpace base = {});
nlohmann::json search_space_to_json(const SearchSpace& s);

struct TrialConfig {
  ModelConfig model;
  TrainRegime regime;
  bool operator==(const TrialConfig& o) const;
};

// Draws every field in a fixed order; log-uniform fields use exp(U(ln lo, ln hi)).
// Fields the space does not cover (epochs, patience, ...) come from `base`.
TrialConfig sample_config(const SearchSpace& space, const std::string& family, const TrainRegime& base, Rng& rng);
bool validate(const SearchSpace& space, const TrialConfig& config);

nlohmann::json trial_config_to_json(const TrialConfig& c);
TrialConfig trial_config_from_json(const nlohmann::json& j);

enum class TrialStatus { Completed, Pruned };
std::string_view trial_status_name(TrialStatus s);

struct TrialRecord {
  int id = 0;  // 1-based
  TrialConfig config;
  std::vector<double> values;  // intermediate objective per epoch
  double objective = 0.0;      // final value for completed trials, last value when pruned
  TrialStatus status = TrialStatus::Completed;
};

// Prunes at epoch e >= min_epochs when the value exceeds the median of
// completed trials at e. A completed trial that stopped earlier contributes
// its final value.
class MedianPruner {
 public:
  explicit MedianPruner(int min_epochs) : min_epochs_(min_epochs) {}
  void add_completed(const std::vector<double>& values) { completed_.push_back(values); }
  std::optional<double> median_at(int epoch) const;
  bool should_prune(int epoch, double value) const;

 private:
  int min_epochs_;
  std::vector<std::vector<double>> completed_;
};

// One trial in progress. next_epoch returns the intermediate objective or
// nullopt once training has finished.
class TrialSession {
 public:
  virtual ~TrialSession() = default;
  virtual std::optional<double> next_epoch() = 0;
  virtual double objective() const = 0;
};

using SessionFactory = std::function<std::unique_ptr<TrialSession>(const TrialConfig&, std::uint64_t seed)>;

struct StudyResult {
  std::string family;
  std::vector<TrialRecord> trials;
  std::size_t best = 0;  // index into trials
  const TrialConfig& best_config() const { return trials.at(best).config; }
  double best_objective() const { return trials.at(best).objective; }
};

// Serial random search with median pruning. Throws AllTrialsPruned if no
// trial completes.
StudyResult run_study(const std::string& family, const SearchSpace& space, const TrainRegime& base,
                      std::uint64_t seed, const SessionFactory& factory);

// Trains every fold of the plan in lockstep; the intermediate objective is
// the mean over folds of each fold's best validation loss so far.
std::unique_ptr<TrialSession> make_fold_session(const TrialConfig& config, const SeriesShape& shape,
                                                const nn::Matrix& mix, const std::vector<Frame>& raw_frames,
                                                const RollingSplitPlan& plan, std::uint64_t seed);

StudyResult run_study(const std::string& family, const std::vector<Frame>& raw_frames, const RollingSplitPlan& plan,
                      const SeriesShape& shape, const nn::Matrix& mix, const SearchSpace& space,
                      const TrainRegime& base, std::uint64_t seed);

// trial,status,objective,learning_rate,weight_decay,batch_size,hidden,layers,dropout,channels
std::string study_to_csv(const StudyResult& study);

enum class MemberSelection { DefaultTrio, TopThree };
inline const std::vector<std::string> kDefaultTrio = {"lstm", "tgnn", "stgnn"};

// MissingFamily names the absent families.
std::vector<MemberSpec> select_ensemble_members(const std::map<std::string, StudyResult>& studies,
                                                MemberSelection mode = MemberSelection::DefaultTrio);

}  // namespace sfc
