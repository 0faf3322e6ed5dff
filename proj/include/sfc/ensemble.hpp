#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "sfc/forecasting.hpp"
#include "sfc/placement.hpp"

namespace sfc {

// Validation predictions of several models over several folds. Rows of
// truth/preds are samples (timestamp, DC pairs), columns are features.
struct ValidationRecord {
  struct FoldData {
    nn::Matrix truth;               // samples x features
    std::vector<nn::Matrix> preds;  // per model, samples x features
  };
  std::vector<std::string> models;
  std::vector<FoldData> folds;

  std::size_t features() const;
};

// Fold-pooled range-normalised RMSE. Throws DegenerateRange when any fold
// with samples has a zero truth range for the feature.
double nrmse(const ValidationRecord& rec, std::size_t model, std::size_t feature);

// Same, but folds with zero range are left out; nullopt when none remain.
std::optional<double> nrmse_excluding_degenerate(const ValidationRecord& rec, std::size_t model,
                                                 std::size_t feature);

std::vector<double> scores(const std::vector<double>& nrmse_values);
std::vector<double> softmax_weights(const std::vector<double>& score_values);

struct EnsembleSpec {
  std::vector<std::string> models;
  std::vector<std::string> features;
  std::vector<std::vector<double>> nrmse;    // feature x model; NaN when every fold is degenerate
  std::vector<std::vector<double>> weights;  // feature x model

  bool operator==(const EnsembleSpec&) const;
};

// Weights from validation errors. Degenerate features fall back to uniform weights.
EnsembleSpec build_ensemble_spec(const ValidationRecord& rec, const std::vector<std::string>& feature_names);

// Throws InvariantViolation if any feature's weights are negative or do not sum to 1 within 1e-9.
void check_weight_contract(const EnsembleSpec& spec);

// preds: per model, one value per feature.
std::vector<double> ensemble_predict(const EnsembleSpec& spec, const std::vector<std::vector<double>>& preds);
Frame ensemble_predict(const EnsembleSpec& spec, const std::vector<Frame>& preds);

// cases x models error table -> percentage of cases each model wins; ties split.
std::vector<double> winner_rate(const std::vector<std::vector<double>>& errors);

std::string ensemble_spec_to_text(const EnsembleSpec& spec);
EnsembleSpec ensemble_spec_from_text(const std::string& text);
void save_ensemble_spec(const EnsembleSpec& spec, const std::filesystem::path& path);
EnsembleSpec load_ensemble_spec(const std::filesystem::path& path);

// ---------------------------------------------------------- construction

struct MemberSpec {
  ModelConfig model;
  TrainRegime regime;
};

struct BuiltEnsemble {
  EnsembleSpec spec;
  std::vector<FittedForecaster> members;  // fitted on the last fold
  ValidationRecord validation;
  std::vector<std::vector<FitResult>> fits;  // member x fold
};

// Trains every member on every fold, records validation predictions in raw
// units, derives the weights and keeps each member's last-fold model.
// Member/fold fits run on up to `threads` workers (0: all cores).
BuiltEnsemble build_ensemble(const std::vector<MemberSpec>& members, const std::vector<Frame>& raw_frames,
                             const RollingSplitPlan& plan, const SeriesShape& shape, const nn::Matrix& mix,
                             std::uint64_t seed, int threads = 0);

// Predictions of a fitted forecaster for every target in `targets`, raw units,
// one row per (target, DC) pair.
nn::Matrix predict_rows(const FittedForecaster& f, const std::vector<Frame>& raw_frames,
                        const std::vector<std::size_t>& targets);
nn::Matrix truth_rows(const std::vector<Frame>& raw_frames, const std::vector<std::size_t>& targets);

// Capacity forecaster backed by an ensemble; memoises the last window.
class EnsembleForecaster final : public DcForecaster {
 public:
  EnsembleForecaster(EnsembleSpec spec, std::vector<FittedForecaster> members);
  std::size_t window() const override { return window_; }
  CapacityForecast forecast(const TelemetryLog& history) const override;
  Frame predict_frame(std::span<const Frame> window) const;

 private:
  EnsembleSpec spec_;
  std::vector<FittedForecaster> members_;
  std::size_t window_ = 0;
  mutable std::mutex mutex_;
  mutable std::uint64_t cached_key_ = 0;
  mutable bool has_cache_ = false;
  mutable CapacityForecast cached_;
};

}  // namespace sfc
