#include "sfc/forecasting.hpp"

#include <algorithm>
#include <any>
#include <cmath>
#include <cstdio>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"

namespace sfc {

std::vector<Frame> frames_from_log(const TelemetryLog& log) {
  const std::size_t nd = log.dcs().size();
  std::vector<Frame> frames(log.steps(), Frame(kFeatureCount, nd));
  for (std::size_t t = 0; t < log.steps(); ++t)
    for (std::size_t d = 0; d < nd; ++d)
      for (std::size_t f = 0; f < kFeatureCount; ++f) frames[t](f, d) = log.at(t, d, f);
  return frames;
}

std::vector<WindowSample> make_windows(const TelemetryLog& log, std::size_t window) {
  const std::size_t T = log.steps();
  if (window == 0 || T <= window)
    throw Error(Errc::SeriesTooShort, "need more than " + std::to_string(window) + " timestamps, have " +
                                          std::to_string(T));
  const auto frames = frames_from_log(log);
  std::vector<WindowSample> out;
  out.reserve(T - window);
  for (std::size_t t = window; t < T; ++t) {
    WindowSample s;
    s.target_time = t;
    s.input.assign(frames.begin() + static_cast<std::ptrdiff_t>(t - window),
                   frames.begin() + static_cast<std::ptrdiff_t>(t));
    s.target = frames[t];
    out.push_back(std::move(s));
  }
  return out;
}

RollingSplitPlan rolling_splits(std::size_t T, std::size_t window, std::size_t folds, double val_frac,
                                double test_frac) {
  if (folds == 0 || !(val_frac > 0.0) || test_frac < 0.0 || test_frac >= 1.0)
    throw Error(Errc::ConfigError, "invalid split parameters");
  const auto test = static_cast<std::size_t>(std::floor(test_frac * static_cast<double>(T)));
  const std::size_t n = T - test;
  const auto v = static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n)));
  if (v == 0 || folds * v >= n || n - folds * v < window + 1)
    throw Error(Errc::SeriesTooShort, "series of length " + std::to_string(T) + " cannot hold " +
                                          std::to_string(folds) + " folds with window " + std::to_string(window));
  RollingSplitPlan plan;
  plan.test = {n, T};
  for (std::size_t k = 1; k <= folds; ++k) {
    const std::size_t val_begin = n - (folds + 1 - k) * v;
    plan.folds.push_back({{0, val_begin}, {val_begin, val_begin + v}});
  }
  return plan;
}

// ------------------------------------------------------------- scaling

MinMaxScaler MinMaxScaler::fit(std::span<const Frame> frames) {
  if (frames.empty()) throw Error(Errc::SeriesTooShort, "cannot fit a scaler on no data");
  MinMaxScaler s;
  const auto nf = static_cast<std::size_t>(frames.front().rows());
  s.lo_.assign(nf, std::numeric_limits<double>::infinity());
  s.hi_.assign(nf, -std::numeric_limits<double>::infinity());
  for (const auto& fr : frames)
    for (std::size_t f = 0; f < nf; ++f) {
      s.lo_[f] = std::min(s.lo_[f], fr.row(static_cast<Eigen::Index>(f)).minCoeff());
      s.hi_[f] = std::max(s.hi_[f], fr.row(static_cast<Eigen::Index>(f)).maxCoeff());
    }
  return s;
}

Frame MinMaxScaler::transform(const Frame& raw) const {
  Frame out = raw;
  for (std::size_t f = 0; f < lo_.size(); ++f) {
    const double span = hi_[f] - lo_[f];
    auto row = out.row(static_cast<Eigen::Index>(f));
    row.array() -= lo_[f];
    if (span > 0.0) row /= span;
  }
  return out;
}

Frame MinMaxScaler::inverse(const Frame& scaled) const {
  Frame out = scaled;
  for (std::size_t f = 0; f < lo_.size(); ++f) {
    const double span = hi_[f] - lo_[f];
    auto row = out.row(static_cast<Eigen::Index>(f));
    if (span > 0.0) row *= span;
    row.array() += lo_[f];
  }
  return out;
}

std::vector<Frame> MinMaxScaler::transform(std::span<const Frame> raw) const {
  std::vector<Frame> out;
  out.reserve(raw.size());
  for (const auto& f : raw) out.push_back(transform(f));
  return out;
}

nlohmann::json MinMaxScaler::to_json() const { return {{"lo", lo_}, {"hi", hi_}}; }

MinMaxScaler MinMaxScaler::from_json(const nlohmann::json& j) {
  MinMaxScaler s;
  s.lo_ = require<std::vector<double>>(j, "lo");
  s.hi_ = require<std::vector<double>>(j, "hi");
  if (s.lo_.size() != s.hi_.size()) throw Error(Errc::ParseError, "scaler bounds differ in length");
  return s;
}

// -------------------------------------------------------------- configs

TrainRegime train_regime_from_json(const nlohmann::json& j, TrainRegime r) {
  if (j.is_null()) return r;
  r.learning_rate = j.value("learning_rate", r.learning_rate);
  r.weight_decay = j.value("weight_decay", r.weight_decay);
  r.batch_size = j.value("batch_size", r.batch_size);
  r.dropout = j.value("dropout", r.dropout);
  r.max_epochs = j.value("max_epochs", r.max_epochs);
  r.patience = j.value("patience", r.patience);
  r.min_delta = j.value("min_delta", r.min_delta);
  r.min_epochs = j.value("min_epochs", r.min_epochs);
  if (!(r.learning_rate > 0.0) || r.weight_decay < 0.0 || r.batch_size == 0 || r.dropout < 0.0 ||
      r.dropout >= 1.0 || r.max_epochs < 1 || r.patience < 1 || r.min_epochs < 0 || r.min_delta < 0.0)
    throw Error(Errc::ConfigError, "invalid training regime");
  return r;
}

nlohmann::json train_regime_to_json(const TrainRegime& r) {
  return {{"learning_rate", r.learning_rate}, {"weight_decay", r.weight_decay}, {"batch_size", r.batch_size},
          {"dropout", r.dropout},             {"max_epochs", r.max_epochs},     {"patience", r.patience},
          {"min_delta", r.min_delta},         {"min_epochs", r.min_epochs}};
}

ModelConfig model_config_from_json(const nlohmann::json& j, ModelConfig c) {
  if (j.is_null()) return c;
  c.family = j.value("family", c.family);
  c.hidden = j.value("hidden", c.hidden);
  c.layers = j.value("layers", c.layers);
  c.channels = j.value("channels", c.channels);
  if (std::find(kPredictorFamilies.begin(), kPredictorFamilies.end(), c.family) == kPredictorFamilies.end())
    throw Error(Errc::ConfigError, "unknown model family '" + c.family + "'");
  if (c.hidden < 1 || c.layers < 1 || c.channels < 1) throw Error(Errc::ConfigError, "model sizes must be positive");
  return c;
}

nlohmann::json model_config_to_json(const ModelConfig& c) {
  return {{"family", c.family}, {"hidden", c.hidden}, {"layers", c.layers}, {"channels", c.channels}};
}

nn::Matrix neighbor_mean_matrix(const Topology& topology) {
  const std::size_t n = topology.size();
  nn::Matrix mix = nn::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto nb = topology.neighbors(topology.data_centers()[i].id);
    for (DcId d : nb)
      mix(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(topology.index(d))) = 1.0 / nb.size();
  }
  return mix;
}

// ----------------------------------------------------------- predictors

void Predictor::fit_direct(const std::vector<Frame>&, std::span<const std::size_t>) {
  throw Error(Errc::ConfigError, family() + " is trained by gradient descent");
}

nn::Vector& Predictor::params() {
  static nn::Vector empty;
  return empty;
}

double Predictor::loss_grad(const std::vector<Frame>&, std::span<const std::size_t>, nn::Vector*, double,
                            Rng*) const {
  throw Error(Errc::ConfigError, family() + " has no gradient");
}

namespace {

void check_window(const SeriesShape& shape, std::span<const Frame> window) {
  if (window.size() != shape.window)
    throw Error(Errc::ShapeMismatch, "window has " + std::to_string(window.size()) + " frames, expected " +
                                         std::to_string(shape.window));
  for (const auto& f : window)
    if (static_cast<std::size_t>(f.rows()) != shape.features || static_cast<std::size_t>(f.cols()) != shape.dcs)
      throw Error(Errc::ShapeMismatch, "frame shape does not match the model");
}

std::span<const Frame> window_before(const std::vector<Frame>& frames, std::size_t target, std::size_t w) {
  return {frames.data() + (target - w), w};
}

class PersistencePredictor final : public Predictor {
 public:
  PersistencePredictor(ModelConfig c, SeriesShape s) : config_(std::move(c)), shape_(s) {}
  std::string family() const override { return "persistence"; }
  const ModelConfig& config() const override { return config_; }
  const SeriesShape& shape() const override { return shape_; }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<PersistencePredictor>(*this); }
  Frame predict(std::span<const Frame> window) const override {
    check_window(shape_, window);
    return window.back();
  }
  void fit_direct(const std::vector<Frame>&, std::span<const std::size_t>) override {}

 private:
  ModelConfig config_;
  SeriesShape shape_;
};

// y(f, d) = b_f + sum_w a(f, w) x_w(f, d), least squares pooled over DCs.
class LinearArPredictor final : public Predictor {
 public:
  LinearArPredictor(ModelConfig c, SeriesShape s) : config_(std::move(c)), shape_(s) {
    params_ = nn::Vector::Zero(static_cast<Eigen::Index>(shape_.features * (shape_.window + 1)));
  }
  std::string family() const override { return "linear_ar"; }
  const ModelConfig& config() const override { return config_; }
  const SeriesShape& shape() const override { return shape_; }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<LinearArPredictor>(*this); }
  nn::Vector& params() override { return params_; }

  Frame predict(std::span<const Frame> window) const override {
    check_window(shape_, window);
    const auto W = shape_.window;
    Frame y(shape_.features, shape_.dcs);
    for (std::size_t f = 0; f < shape_.features; ++f) {
      const double* a = params_.data() + f * (W + 1);
      for (std::size_t d = 0; d < shape_.dcs; ++d) {
        double acc = a[W];
        for (std::size_t w = 0; w < W; ++w) acc += a[w] * window[w](f, d);
        y(f, d) = acc;
      }
    }
    return y;
  }

  void fit_direct(const std::vector<Frame>& frames, std::span<const std::size_t> targets) override {
    const auto W = shape_.window;
    const auto rows = static_cast<Eigen::Index>(targets.size() * shape_.dcs);
    if (rows == 0) throw Error(Errc::SeriesTooShort, "no training windows");
    for (std::size_t f = 0; f < shape_.features; ++f) {
      nn::Matrix A(rows, static_cast<Eigen::Index>(W + 1));
      nn::Vector y(rows);
      Eigen::Index r = 0;
      for (std::size_t t : targets)
        for (std::size_t d = 0; d < shape_.dcs; ++d, ++r) {
          for (std::size_t w = 0; w < W; ++w) A(r, static_cast<Eigen::Index>(w)) = frames[t - W + w](f, d);
          A(r, static_cast<Eigen::Index>(W)) = 1.0;
          y(r) = frames[t](f, d);
        }
      const nn::Vector sol = A.completeOrthogonalDecomposition().solve(y);
      params_.segment(static_cast<Eigen::Index>(f * (W + 1)), static_cast<Eigen::Index>(W + 1)) = sol;
    }
  }

 private:
  ModelConfig config_;
  SeriesShape shape_;
  nn::Vector params_;
};

// Shared pieces of the gradient-trained models: encoder -> dropout -> linear head.
class NeuralPredictor : public Predictor {
 public:
  bool trainable() const override { return true; }
  const ModelConfig& config() const override { return config_; }
  const SeriesShape& shape() const override { return shape_; }
  nn::Vector& params() override { return params_; }

  Frame predict(std::span<const Frame> window) const override {
    check_window(shape_, window);
    std::any cache;
    const nn::Matrix h = encode(std::vector<nn::Matrix>(window.begin(), window.end()), cache);
    Frame y = head_w_.view(params_) * h;
    y.colwise() += head_b_.view(params_).col(0);
    return y;
  }

  double loss_grad(const std::vector<Frame>& frames, std::span<const std::size_t> targets, nn::Vector* grad,
                   double dropout, Rng* rng) const override {
    if (targets.empty()) return 0.0;
    if (grad) *grad = nn::Vector::Zero(params_.size());
    const auto W = shape_.window;
    const auto F = static_cast<Eigen::Index>(shape_.features);
    const auto D = static_cast<Eigen::Index>(shape_.dcs);
    const auto B = static_cast<Eigen::Index>(targets.size());
    // Samples side by side: columns [b*D, (b+1)*D) belong to targets[b].
    std::vector<nn::Matrix> xs(W, nn::Matrix(F, B * D));
    nn::Matrix truth(F, B * D);
    for (Eigen::Index b = 0; b < B; ++b) {
      const std::size_t t = targets[static_cast<std::size_t>(b)];
      if (t < W || t >= frames.size()) throw Error(Errc::ShapeMismatch, "target outside the series");
      for (std::size_t w = 0; w < W; ++w) xs[w].middleCols(b * D, D) = frames[t - W + w];
      truth.middleCols(b * D, D) = frames[t];
    }
    std::any cache;
    nn::Matrix h = encode(xs, cache);
    nn::Matrix mask;
    if (rng && dropout > 0.0) {
      mask.resize(h.rows(), h.cols());
      const double keep = 1.0 - dropout;
      for (Eigen::Index c = 0; c < mask.cols(); ++c)
        for (Eigen::Index r = 0; r < mask.rows(); ++r) mask(r, c) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
      h = h.cwiseProduct(mask);
    }
    auto wo = head_w_.view(params_);
    nn::Matrix y = wo * h;
    y.colwise() += head_b_.view(params_).col(0);
    const nn::Matrix diff = y - truth;
    const double norm = static_cast<double>(diff.size());
    if (grad) {
      const nn::Matrix dy = (2.0 / norm) * diff;
      head_w_.view(*grad) += dy * h.transpose();
      head_b_.view(*grad) += dy.rowwise().sum();
      nn::Matrix dh = wo.transpose() * dy;
      if (mask.size() != 0) dh = dh.cwiseProduct(mask);
      encode_backward(cache, dh, *grad);
    }
    return diff.squaredNorm() / norm;
  }

 protected:
  NeuralPredictor(ModelConfig c, SeriesShape s) : config_(std::move(c)), shape_(s) {}

  void add_head(nn::Layout& layout, int hidden) {
    head_w_ = layout.add(static_cast<Eigen::Index>(shape_.features), hidden);
    head_b_ = layout.add(static_cast<Eigen::Index>(shape_.features), 1);
  }
  void init_head(int hidden, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    nn::init_uniform(params_, head_w_, bound, rng);
    nn::init_uniform(params_, head_b_, bound, rng);
  }

  // xs[t]: features x (samples*DCs). Returns the top representation at the last step.
  virtual nn::Matrix encode(const std::vector<nn::Matrix>& xs, std::any& cache) const = 0;
  virtual void encode_backward(const std::any& cache, const nn::Matrix& dh, nn::Vector& grad) const = 0;

  ModelConfig config_;
  SeriesShape shape_;
  nn::Vector params_;
  nn::Block head_w_, head_b_;
};

// LSTM stack. graph_input appends the neighbour mean of the features to the
// input; spatial adds the neighbours' previous hidden state to every layer.
class RecurrentPredictor final : public NeuralPredictor {
 public:
  RecurrentPredictor(ModelConfig c, SeriesShape s, nn::Matrix mix, bool graph_input, bool spatial,
                     std::uint64_t seed)
      : NeuralPredictor(std::move(c), s), mix_(std::move(mix)), graph_input_(graph_input), spatial_(spatial) {
    if (graph_input_ && (static_cast<std::size_t>(mix_.rows()) != shape_.dcs || mix_.rows() != mix_.cols()))
      throw Error(Errc::ShapeMismatch, "neighbour matrix does not match the DC count");
    nn::Layout layout;
    int in = static_cast<int>(shape_.features) * (graph_input_ ? 2 : 1);
    for (int l = 0; l < config_.layers; ++l) {
      layers_.emplace_back(layout, in, config_.hidden, spatial_);
      in = config_.hidden;
    }
    add_head(layout, config_.hidden);
    params_ = nn::Vector::Zero(layout.size());
    Rng rng(seed);
    for (const auto& l : layers_) l.init(params_, rng);
    init_head(config_.hidden, rng);
  }

  std::string family() const override { return config_.family; }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<RecurrentPredictor>(*this); }

 protected:
  using Caches = std::vector<nn::LstmLayer::Cache>;

  nn::Matrix encode(const std::vector<nn::Matrix>& raw, std::any& cache) const override {
    std::vector<nn::Matrix> xs;
    if (graph_input_) {
      xs.reserve(raw.size());
      for (const auto& f : raw) {
        nn::Matrix x(2 * f.rows(), f.cols());
        x.topRows(f.rows()) = f;
        x.bottomRows(f.rows()) = nn::mix_blocks(f, mix_);
        xs.push_back(std::move(x));
      }
    }
    Caches caches(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& in = l > 0 ? caches[l - 1].h : graph_input_ ? xs : raw;
      layers_[l].forward(params_, in, spatial_ ? &mix_ : nullptr, caches[l]);
    }
    nn::Matrix top = caches.back().h.back();
    cache = std::move(caches);
    return top;
  }

  void encode_backward(const std::any& cache, const nn::Matrix& dh, nn::Vector& grad) const override {
    const auto& caches = std::any_cast<const Caches&>(cache);
    std::vector<nn::Matrix> d(shape_.window);
    d.back() = dh;
    for (std::size_t l = layers_.size(); l-- > 0;)
      d = layers_[l].backward(params_, caches[l], d, spatial_ ? &mix_ : nullptr, grad);
  }

 private:
  nn::Matrix mix_;
  bool graph_input_, spatial_;
  std::vector<nn::LstmLayer> layers_;
};

// Causal dilated convolutions with dilation 2^l.
class ConvPredictor final : public NeuralPredictor {
 public:
  ConvPredictor(ModelConfig c, SeriesShape s, std::uint64_t seed) : NeuralPredictor(std::move(c), s) {
    nn::Layout layout;
    int in = static_cast<int>(shape_.features);
    for (int l = 0; l < config_.layers; ++l) {
      layers_.emplace_back(layout, in, config_.channels, 1 << l);
      in = config_.channels;
    }
    add_head(layout, config_.channels);
    params_ = nn::Vector::Zero(layout.size());
    Rng rng(seed);
    for (const auto& l : layers_) l.init(params_, rng);
    init_head(config_.channels, rng);
  }

  std::string family() const override { return "tcn"; }
  std::unique_ptr<Predictor> clone() const override { return std::make_unique<ConvPredictor>(*this); }

 protected:
  using Caches = std::vector<nn::CausalConvLayer::Cache>;

  nn::Matrix encode(const std::vector<nn::Matrix>& xs, std::any& cache) const override {
    Caches caches(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l)
      layers_[l].forward(params_, l == 0 ? xs : caches[l - 1].out, caches[l]);
    nn::Matrix top = caches.back().out.back();
    cache = std::move(caches);
    return top;
  }

  void encode_backward(const std::any& cache, const nn::Matrix& dh, nn::Vector& grad) const override {
    const auto& caches = std::any_cast<const Caches&>(cache);
    std::vector<nn::Matrix> d(shape_.window);
    d.back() = dh;
    for (std::size_t l = layers_.size(); l-- > 0;) d = layers_[l].backward(params_, caches[l], d, grad);
  }

 private:
  std::vector<nn::CausalConvLayer> layers_;
};

}  // namespace

std::unique_ptr<Predictor> make_predictor(const ModelConfig& config, const SeriesShape& shape, const nn::Matrix& mix,
                                          std::uint64_t seed) {
  if (shape.window == 0 || shape.features == 0 || shape.dcs == 0)
    throw Error(Errc::ShapeMismatch, "series shape must be nonempty");
  const auto& f = config.family;
  if (f == "persistence") return std::make_unique<PersistencePredictor>(config, shape);
  if (f == "linear_ar") return std::make_unique<LinearArPredictor>(config, shape);
  if (f == "lstm") return std::make_unique<RecurrentPredictor>(config, shape, mix, false, false, seed);
  if (f == "tgnn") return std::make_unique<RecurrentPredictor>(config, shape, mix, true, false, seed);
  if (f == "stgnn") return std::make_unique<RecurrentPredictor>(config, shape, mix, true, true, seed);
  if (f == "tcn") return std::make_unique<ConvPredictor>(config, shape, seed);
  throw Error(Errc::ConfigError, "unknown model family '" + f + "'");
}

double mean_squared_error(const Predictor& p, const std::vector<Frame>& frames, std::span<const std::size_t> targets) {
  if (targets.empty()) return 0.0;
  const auto W = p.shape().window;
  double sum = 0.0;
  for (std::size_t t : targets) sum += (p.predict(window_before(frames, t, W)) - frames[t]).squaredNorm();
  return sum / static_cast<double>(targets.size() * p.shape().features * p.shape().dcs);
}

std::vector<std::size_t> targets_in(const Range& range, std::size_t window, std::size_t earliest) {
  std::vector<std::size_t> out;
  for (std::size_t t = std::max(range.begin, earliest + window); t < range.end; ++t) out.push_back(t);
  return out;
}

// ------------------------------------------------------- early stopping

bool EarlyStopper::update(int epoch, double val_loss) {
  improved_ = val_loss < best_ - min_delta_;
  if (improved_) {
    best_ = val_loss;
    best_epoch_ = epoch;
    counter_ = 0;
  } else if (epoch > min_epochs_) {
    ++counter_;
  }
  stopped_ = counter_ >= patience_ || epoch >= max_epochs_;
  return stopped_;
}

std::string training_trace_csv(const std::vector<EpochStat>& trace) {
  std::string out = "epoch,train_loss,val_loss\n";
  char buf[96];
  for (const auto& e : trace) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", e.epoch, e.train_loss, e.val_loss);
    out += buf;
  }
  return out;
}

EpochTrainer::EpochTrainer(Predictor& model, const std::vector<Frame>& frames, const Fold& fold,
                           const TrainRegime& regime, std::uint64_t seed)
    : model_(model),
      frames_(frames),
      train_(targets_in(fold.train, model.shape().window, fold.train.begin)),
      val_(targets_in(fold.val, model.shape().window)),
      regime_(regime),
      rng_(derive_seed(seed, {hash_tag("epochs")})),
      adam_(model.params().size(), regime.learning_rate, regime.weight_decay),
      best_params_(model.params()) {
  if (train_.empty()) throw Error(Errc::SeriesTooShort, "fold has no training windows");
  if (val_.empty()) throw Error(Errc::SeriesTooShort, "fold has no validation windows");
}

EpochStat EpochTrainer::run_epoch() {
  ++epoch_;
  for (std::size_t i = train_.size(); i > 1; --i) std::swap(train_[i - 1], train_[rng_.below(i)]);
  double total = 0.0;
  nn::Vector grad;
  for (std::size_t b = 0; b < train_.size(); b += regime_.batch_size) {
    const std::size_t n = std::min(regime_.batch_size, train_.size() - b);
    const std::span<const std::size_t> batch(train_.data() + b, n);
    total += model_.loss_grad(frames_, batch, &grad, regime_.dropout, &rng_) * static_cast<double>(n);
    adam_.step(model_.params(), grad);
  }
  EpochStat s;
  s.epoch = epoch_;
  s.train_loss = total / static_cast<double>(train_.size());
  s.val_loss = mean_squared_error(model_, frames_, val_);
  return s;
}

void EpochTrainer::snapshot_if_best(const EarlyStopper& stopper) {
  if (stopper.improved()) best_params_ = model_.params();
}

void EpochTrainer::restore_best() { model_.params() = best_params_; }

FitResult fit_with_early_stopping(Predictor& model, const std::vector<Frame>& frames, const Fold& fold,
                                  const TrainRegime& regime, std::uint64_t seed) {
  FitResult r;
  if (!model.trainable()) {
    const auto train = targets_in(fold.train, model.shape().window, fold.train.begin);
    const auto val = targets_in(fold.val, model.shape().window);
    if (train.empty()) throw Error(Errc::SeriesTooShort, "fold has no training windows");
    model.fit_direct(frames, train);
    r.trace.push_back({1, mean_squared_error(model, frames, train), mean_squared_error(model, frames, val)});
    r.best_epoch = 1;
    r.best_val_loss = r.trace.back().val_loss;
    return r;
  }
  EpochTrainer trainer(model, frames, fold, regime, seed);
  EarlyStopper stopper(regime);
  for (;;) {
    const EpochStat s = trainer.run_epoch();
    r.trace.push_back(s);
    const bool stop = stopper.update(s.epoch, s.val_loss);
    trainer.snapshot_if_best(stopper);
    if (stop) break;
  }
  trainer.restore_best();
  r.best_epoch = stopper.best_epoch();
  r.best_val_loss = stopper.best();
  return r;
}

// ------------------------------------------------------ deployable model

Frame predict_next(const FittedForecaster& f, std::span<const Frame> window) {
  if (!f.model) throw Error(Errc::ShapeMismatch, "forecaster has no model");
  check_window(f.model->shape(), window);
  std::vector<Frame> scaled;
  scaled.reserve(window.size());
  for (const auto& fr : window) scaled.push_back(f.scaler.transform(fr));
  return f.scaler.inverse(f.model->predict(scaled));
}

FittedForecaster fit_on_fold(const ModelConfig& config, const SeriesShape& shape, const nn::Matrix& mix,
                             const std::vector<Frame>& raw_frames, const Fold& fold, const TrainRegime& regime,
                             std::uint64_t seed, FitResult* result) {
  if (fold.train.end > raw_frames.size() || fold.val.end > raw_frames.size())
    throw Error(Errc::SeriesTooShort, "fold extends past the series");
  MinMaxScaler scaler = MinMaxScaler::fit(
      std::span<const Frame>(raw_frames.data() + fold.train.begin, fold.train.size()));
  const std::vector<Frame> scaled = scaler.transform(std::span<const Frame>(raw_frames.data(), fold.val.end));
  auto model = make_predictor(config, shape, mix, derive_seed(seed, {hash_tag("init")}));
  FitResult r = fit_with_early_stopping(*model, scaled, fold, regime, seed);
  if (result) *result = std::move(r);
  return {std::move(model), std::move(scaler)};
}

nlohmann::json forecaster_to_json(const FittedForecaster& f) {
  const auto& s = f.model->shape();
  const auto& p = f.model->params();
  return {{"family", f.model->family()},
          {"window", s.window},
          {"features", s.features},
          {"dcs", s.dcs},
          {"config", model_config_to_json(f.model->config())},
          {"scaler", f.scaler.to_json()},
          {"params", std::vector<double>(p.data(), p.data() + p.size())}};
}

FittedForecaster forecaster_from_json(const nlohmann::json& j, const nn::Matrix& mix) {
  SeriesShape shape;
  shape.window = require<std::size_t>(j, "window");
  shape.features = require<std::size_t>(j, "features");
  shape.dcs = require<std::size_t>(j, "dcs");
  const ModelConfig config = model_config_from_json(require<nlohmann::json>(j, "config"));
  if (config.family != require<std::string>(j, "family"))
    throw Error(Errc::ParseError, "model family does not match its config");
  auto model = make_predictor(config, shape, mix, 0);
  const auto params = require<std::vector<double>>(j, "params");
  if (static_cast<Eigen::Index>(params.size()) != model->params().size())
    throw Error(Errc::ShapeMismatch, "parameter count does not match the model");
  for (std::size_t i = 0; i < params.size(); ++i) model->params()(static_cast<Eigen::Index>(i)) = params[i];
  return {std::move(model), MinMaxScaler::from_json(require<nlohmann::json>(j, "scaler"))};
}

void save_forecaster(const FittedForecaster& f, const std::filesystem::path& path) {
  write_text(path, forecaster_to_json(f).dump(1) + "\n");
}

FittedForecaster load_forecaster(const std::filesystem::path& path, const nn::Matrix& mix) {
  return forecaster_from_json(read_json(path), mix);
}

}  // namespace sfc
