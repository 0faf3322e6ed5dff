#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "sfc/nn.hpp"
#include "sfc/telemetry.hpp"
#include "sfc/topology.hpp"

namespace sfc {

// One timestamp of telemetry: features x DCs.
using Frame = nn::Matrix;

std::vector<Frame> frames_from_log(const TelemetryLog& log);

struct WindowSample {
  std::size_t target_time = 0;
  std::vector<Frame> input;  // W frames ending at target_time - 1
  Frame target;
};

// Stride-1 windows; T - W samples. SeriesTooShort when T <= W.
std::vector<WindowSample> make_windows(const TelemetryLog& log, std::size_t window);

// ----------------------------------------------------------- splitting

// Half-open timestamp ranges. A sample belongs to a range when its target does.
struct Range {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool operator==(const Range&) const = default;
};

struct Fold {
  Range train;
  Range val;
};

struct RollingSplitPlan {
  std::vector<Fold> folds;
  Range test;
};

// Last floor(test_frac*T) steps are held out; of the remaining N', fold k
// (1-based) validates on [N' - (folds+1-k)v, N' - (folds-k)v) with
// v = floor(val_frac*N') and trains on everything before its validation slice.
RollingSplitPlan rolling_splits(std::size_t T, std::size_t window, std::size_t folds = 5,
                                double val_frac = 0.1, double test_frac = 0.1);

// ------------------------------------------------------------- scaling

// Per-feature min-max over every DC.
class MinMaxScaler {
 public:
  MinMaxScaler() = default;
  static MinMaxScaler fit(std::span<const Frame> frames);
  Frame transform(const Frame& raw) const;
  Frame inverse(const Frame& scaled) const;
  std::vector<Frame> transform(std::span<const Frame> raw) const;
  const std::vector<double>& lo() const { return lo_; }
  const std::vector<double>& hi() const { return hi_; }
  nlohmann::json to_json() const;
  static MinMaxScaler from_json(const nlohmann::json& j);
  bool operator==(const MinMaxScaler&) const = default;

 private:
  std::vector<double> lo_, hi_;
};

// ---------------------------------------------------------- predictors

struct TrainRegime {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  double dropout = 0.1;
  int max_epochs = 200;
  int patience = 15;
  double min_delta = 1e-6;
  int min_epochs = 20;
};

TrainRegime train_regime_from_json(const nlohmann::json& j, TrainRegime base = {});
nlohmann::json train_regime_to_json(const TrainRegime& r);

struct ModelConfig {
  std::string family = "lstm";
  int hidden = 16;
  int layers = 1;
  int channels = 16;
  bool operator==(const ModelConfig&) const = default;
};

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig base = {});
nlohmann::json model_config_to_json(const ModelConfig& c);

struct SeriesShape {
  std::size_t window = 20;
  std::size_t features = kFeatureCount;
  std::size_t dcs = 1;
};

// Row-normalised topology adjacency in index order; rows of isolated DCs are zero.
nn::Matrix neighbor_mean_matrix(const Topology& topology);

// Shared one-step-ahead model over all DCs, working in scaled units.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual std::string family() const = 0;
  virtual const ModelConfig& config() const = 0;
  virtual const SeriesShape& shape() const = 0;
  virtual std::unique_ptr<Predictor> clone() const = 0;

  // window: exactly shape().window frames. Deterministic.
  virtual Frame predict(std::span<const Frame> window) const = 0;

  virtual bool trainable() const { return false; }
  // Non-gradient models fit directly on the windows ending before each target.
  virtual void fit_direct(const std::vector<Frame>& frames, std::span<const std::size_t> targets);

  virtual nn::Vector& params();
  const nn::Vector& params() const { return const_cast<Predictor*>(this)->params(); }
  // Mean squared error over the batch (and all DCs and features). Dropout
  // is applied when rng is given. grad may be null.
  virtual double loss_grad(const std::vector<Frame>& frames, std::span<const std::size_t> targets,
                           nn::Vector* grad, double dropout, Rng* rng) const;
};

inline const std::vector<std::string> kPredictorFamilies = {"persistence", "linear_ar", "lstm",
                                                            "tcn",         "tgnn",      "stgnn"};

// mix: neighbor_mean_matrix of the topology (used by the graph families).
std::unique_ptr<Predictor> make_predictor(const ModelConfig& config, const SeriesShape& shape,
                                          const nn::Matrix& mix, std::uint64_t seed);

// Mean squared error of predictions over the given targets.
double mean_squared_error(const Predictor& p, const std::vector<Frame>& frames,
                          std::span<const std::size_t> targets);

// Targets in `range` whose whole input window lies at or after `earliest`.
std::vector<std::size_t> targets_in(const Range& range, std::size_t window, std::size_t earliest = 0);

// ------------------------------------------------------- early stopping

class EarlyStopper {
 public:
  explicit EarlyStopper(const TrainRegime& r)
      : min_epochs_(r.min_epochs), patience_(r.patience), max_epochs_(r.max_epochs), min_delta_(r.min_delta) {}

  // Feed the validation loss of `epoch` (1-based). Returns true to stop.
  bool update(int epoch, double val_loss);
  bool improved() const { return improved_; }
  int best_epoch() const { return best_epoch_; }
  double best() const { return best_; }
  bool stopped() const { return stopped_; }

 private:
  int min_epochs_, patience_, max_epochs_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  int best_epoch_ = 0;
  int counter_ = 0;
  bool improved_ = false;
  bool stopped_ = false;
};

struct EpochStat {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

std::string training_trace_csv(const std::vector<EpochStat>& trace);

// One fold's optimisation state. Frames must already be scaled.
class EpochTrainer {
 public:
  EpochTrainer(Predictor& model, const std::vector<Frame>& frames, const Fold& fold, const TrainRegime& regime,
               std::uint64_t seed);
  EpochStat run_epoch();
  // Keeps the parameters of the best epoch seen so far.
  void snapshot_if_best(const EarlyStopper& stopper);
  void restore_best();
  int epoch() const { return epoch_; }

 private:
  Predictor& model_;
  const std::vector<Frame>& frames_;
  std::vector<std::size_t> train_, val_;
  TrainRegime regime_;
  Rng rng_;
  nn::Adam adam_;
  nn::Vector best_params_;
  int epoch_ = 0;
};

struct FitResult {
  std::vector<EpochStat> trace;
  int best_epoch = 0;
  double best_val_loss = 0.0;
};

// Frames must be scaled. Non-trainable models fit once and report a one-epoch trace.
FitResult fit_with_early_stopping(Predictor& model, const std::vector<Frame>& frames, const Fold& fold,
                                  const TrainRegime& regime, std::uint64_t seed);

// ------------------------------------------------------ deployable model

// A fitted predictor together with the scaler fit on its training range.
struct FittedForecaster {
  std::unique_ptr<Predictor> model;
  MinMaxScaler scaler;

  FittedForecaster() = default;
  FittedForecaster(std::unique_ptr<Predictor> m, MinMaxScaler s) : model(std::move(m)), scaler(std::move(s)) {}
  FittedForecaster(const FittedForecaster& o) : model(o.model ? o.model->clone() : nullptr), scaler(o.scaler) {}
  FittedForecaster& operator=(const FittedForecaster& o) {
    model = o.model ? o.model->clone() : nullptr;
    scaler = o.scaler;
    return *this;
  }
  FittedForecaster(FittedForecaster&&) = default;
  FittedForecaster& operator=(FittedForecaster&&) = default;
};

// Raw-unit window of W frames in, raw next frame out. ShapeMismatch on bad window.
Frame predict_next(const FittedForecaster& f, std::span<const Frame> window);

// Fits the scaler on the fold's training range and the model on the fold.
FittedForecaster fit_on_fold(const ModelConfig& config, const SeriesShape& shape, const nn::Matrix& mix,
                             const std::vector<Frame>& raw_frames, const Fold& fold, const TrainRegime& regime,
                             std::uint64_t seed, FitResult* result = nullptr);

nlohmann::json forecaster_to_json(const FittedForecaster& f);
FittedForecaster forecaster_from_json(const nlohmann::json& j, const nn::Matrix& mix);
void save_forecaster(const FittedForecaster& f, const std::filesystem::path& path);
FittedForecaster load_forecaster(const std::filesystem::path& path, const nn::Matrix& mix);

}  // namespace sfc
