#include "sfc/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string_view>

#include "sfc/error.hpp"
#include "sfc/json_io.hpp"
#include "sfc/parallel.hpp"

namespace sfc {

std::size_t ValidationRecord::features() const {
  for (const auto& f : folds)
    if (f.truth.rows() > 0) return static_cast<std::size_t>(f.truth.cols());
  return folds.empty() ? 0 : static_cast<std::size_t>(folds.front().truth.cols());
}

namespace {

void check_model(const ValidationRecord& rec, std::size_t model, std::size_t feature) {
  if (model >= rec.models.size()) throw Error(Errc::ShapeMismatch, "model index out of range");
  if (feature >= rec.features()) throw Error(Errc::ShapeMismatch, "feature index out of range");
  for (const auto& f : rec.folds) {
    if (f.preds.size() != rec.models.size()) throw Error(Errc::ShapeMismatch, "fold lacks predictions for a model");
    if (f.preds[model].rows() != f.truth.rows() || f.preds[model].cols() != f.truth.cols())
      throw Error(Errc::ShapeMismatch, "prediction and truth shapes differ");
  }
}

// Returns (sum of squared normalised errors, sample count) over usable folds.
std::pair<double, std::size_t> pooled(const ValidationRecord& rec, std::size_t model, std::size_t feature,
                                      bool skip_degenerate) {
  double sum = 0.0;
  std::size_t count = 0;
  const auto j = static_cast<Eigen::Index>(feature);
  for (std::size_t k = 0; k < rec.folds.size(); ++k) {
    const auto& f = rec.folds[k];
    if (f.truth.rows() == 0) continue;
    const auto col = f.truth.col(j);
    const double range = col.maxCoeff() - col.minCoeff();
    if (range == 0.0) {
      if (skip_degenerate) continue;
      throw Error(Errc::DegenerateRange, "fold " + std::to_string(k + 1) + " has zero range for feature " +
                                             std::to_string(feature));
    }
    const auto err = (col - f.preds[model].col(j)) / range;
    sum += err.squaredNorm();
    count += static_cast<std::size_t>(col.size());
  }
  return {sum, count};
}

}  // namespace

double nrmse(const ValidationRecord& rec, std::size_t model, std::size_t feature) {
  check_model(rec, model, feature);
  const auto [sum, count] = pooled(rec, model, feature, false);
  if (count == 0) throw Error(Errc::ShapeMismatch, "validation record has no samples");
  return std::sqrt(sum / static_cast<double>(count));
}

std::optional<double> nrmse_excluding_degenerate(const ValidationRecord& rec, std::size_t model,
                                                 std::size_t feature) {
  check_model(rec, model, feature);
  const auto [sum, count] = pooled(rec, model, feature, true);
  if (count == 0) return std::nullopt;
  return std::sqrt(sum / static_cast<double>(count));
}

std::vector<double> scores(const std::vector<double>& nrmse_values) {
  std::vector<double> s;
  s.reserve(nrmse_values.size());
  for (double e : nrmse_values) s.push_back(-e * e);
  return s;
}

std::vector<double> softmax_weights(const std::vector<double>& score_values) {
  if (score_values.empty()) return {};
  const double top = *std::max_element(score_values.begin(), score_values.end());
  std::vector<double> w;
  w.reserve(score_values.size());
  double total = 0.0;
  for (double s : score_values) {
    w.push_back(std::exp(s - top));
    total += w.back();
  }
  for (double& x : w) x /= total;
  return w;
}

bool EnsembleSpec::operator==(const EnsembleSpec& o) const {
  auto same = [](const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (a[i].size() != b[i].size()) return false;
      for (std::size_t k = 0; k < a[i].size(); ++k)
        if (!(a[i][k] == b[i][k] || (std::isnan(a[i][k]) && std::isnan(b[i][k])))) return false;
    }
    return true;
  };
  return models == o.models && features == o.features && same(nrmse, o.nrmse) && same(weights, o.weights);
}

EnsembleSpec build_ensemble_spec(const ValidationRecord& rec, const std::vector<std::string>& feature_names) {
  if (rec.models.size() < 2) throw Error(Errc::ConfigError, "an ensemble needs at least two models");
  const std::size_t nf = rec.features();
  if (feature_names.size() != nf) throw Error(Errc::ShapeMismatch, "feature names do not match the record");
  EnsembleSpec spec;
  spec.models = rec.models;
  spec.features = feature_names;
  for (std::size_t j = 0; j < nf; ++j) {
    std::vector<double> errs;
    bool degenerate = false;
    for (std::size_t m = 0; m < rec.models.size(); ++m) {
      const auto e = nrmse_excluding_degenerate(rec, m, j);
      if (!e) degenerate = true;
      errs.push_back(e ? *e : std::numeric_limits<double>::quiet_NaN());
    }
    spec.nrmse.push_back(errs);
    if (degenerate)
      spec.weights.emplace_back(rec.models.size(), 1.0 / static_cast<double>(rec.models.size()));
    else
      spec.weights.push_back(softmax_weights(scores(errs)));
  }
  return spec;
}

void check_weight_contract(const EnsembleSpec& spec) {
  for (std::size_t j = 0; j < spec.weights.size(); ++j) {
    double sum = 0.0;
    for (double w : spec.weights[j]) {
      if (!(w >= 0.0)) throw Error(Errc::InvariantViolation, "negative weight for feature " + spec.features[j]);
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-9)
      throw Error(Errc::InvariantViolation, "weights for feature " + spec.features[j] + " do not sum to 1");
  }
}

std::vector<double> ensemble_predict(const EnsembleSpec& spec, const std::vector<std::vector<double>>& preds) {
  if (preds.size() != spec.models.size()) throw Error(Errc::ShapeMismatch, "one prediction per model is required");
  const std::size_t nf = spec.weights.size();
  std::vector<double> out(nf, 0.0);
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (preds[m].size() != nf) throw Error(Errc::ShapeMismatch, "prediction has the wrong feature count");
    for (std::size_t j = 0; j < nf; ++j) out[j] += spec.weights[j][m] * preds[m][j];
  }
  return out;
}

Frame ensemble_predict(const EnsembleSpec& spec, const std::vector<Frame>& preds) {
  if (preds.size() != spec.models.size() || preds.empty())
    throw Error(Errc::ShapeMismatch, "one prediction per model is required");
  const auto nf = static_cast<Eigen::Index>(spec.weights.size());
  Frame out = Frame::Zero(nf, preds.front().cols());
  for (std::size_t m = 0; m < preds.size(); ++m) {
    if (preds[m].rows() != nf || preds[m].cols() != out.cols())
      throw Error(Errc::ShapeMismatch, "prediction frames differ in shape");
    for (Eigen::Index j = 0; j < nf; ++j)
      out.row(j) += spec.weights[static_cast<std::size_t>(j)][m] * preds[m].row(j);
  }
  return out;
}

std::vector<double> winner_rate(const std::vector<std::vector<double>>& errors) {
  if (errors.empty()) throw Error(Errc::ShapeMismatch, "winner rate needs at least one case");
  const std::size_t nm = errors.front().size();
  if (nm == 0) throw Error(Errc::ShapeMismatch, "winner rate needs at least one model");
  std::vector<double> wins(nm, 0.0);
  for (const auto& row : errors) {
    if (row.size() != nm) throw Error(Errc::ShapeMismatch, "every model must be scored on every case");
    const double best = *std::min_element(row.begin(), row.end());
    const auto tied = static_cast<double>(std::count(row.begin(), row.end(), best));
    for (std::size_t m = 0; m < nm; ++m)
      if (row[m] == best) wins[m] += 1.0 / tied;
  }
  for (double& w : wins) w *= 100.0 / static_cast<double>(errors.size());
  return wins;
}

// ---------------------------------------------------------- text format

namespace {

std::string num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

double parse_num(const std::string& tok) {
  char* end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0') throw Error(Errc::ParseError, "bad number '" + tok + "'");
  return v;
}

}  // namespace

std::string ensemble_spec_to_text(const EnsembleSpec& spec) {
  std::string out = "models";
  for (const auto& m : spec.models) out += " " + m;
  out += "\n";
  for (std::size_t j = 0; j < spec.features.size(); ++j) {
    out += "feature " + spec.features[j] + " nrmse";
    for (double e : spec.nrmse[j]) out += " " + num(e);
    out += " weights";
    for (double w : spec.weights[j]) out += " " + num(w);
    out += "\n";
  }
  return out;
}

EnsembleSpec ensemble_spec_from_text(const std::string& text) {
  EnsembleSpec spec;
  std::istringstream in(text);
  std::string line;
  bool have_models = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string head;
    ls >> head;
    if (head == "models") {
      std::string m;
      while (ls >> m) spec.models.push_back(m);
      have_models = true;
    } else if (head == "feature") {
      if (!have_models) throw Error(Errc::ParseError, "feature line before models line");
      std::string name, tok;
      ls >> name >> tok;
      if (tok != "nrmse") throw Error(Errc::ParseError, "expected 'nrmse' after feature name");
      std::vector<double> errs, weights;
      for (std::size_t m = 0; m < spec.models.size() && ls >> tok; ++m) errs.push_back(parse_num(tok));
      ls >> tok;
      if (tok != "weights") throw Error(Errc::ParseError, "expected 'weights'");
      for (std::size_t m = 0; m < spec.models.size() && ls >> tok; ++m) weights.push_back(parse_num(tok));
      if (errs.size() != spec.models.size() || weights.size() != spec.models.size() || (ls >> tok))
        throw Error(Errc::ParseError, "feature " + name + " needs one value per model");
      spec.features.push_back(name);
      spec.nrmse.push_back(errs);
      spec.weights.push_back(weights);
    } else {
      throw Error(Errc::ParseError, "unexpected line '" + line + "'");
    }
  }
  if (!have_models) throw Error(Errc::ParseError, "missing models line");
  return spec;
}

void save_ensemble_spec(const EnsembleSpec& spec, const std::filesystem::path& path) {
  write_text(path, ensemble_spec_to_text(spec));
}

EnsembleSpec load_ensemble_spec(const std::filesystem::path& path) { return ensemble_spec_from_text(read_text(path)); }

// ---------------------------------------------------------- construction

nn::Matrix predict_rows(const FittedForecaster& f, const std::vector<Frame>& raw_frames,
                        const std::vector<std::size_t>& targets) {
  const std::size_t W = f.model->shape().window;
  const auto D = static_cast<Eigen::Index>(f.model->shape().dcs);
  const auto F = static_cast<Eigen::Index>(f.model->shape().features);
  nn::Matrix rows(static_cast<Eigen::Index>(targets.size()) * D, F);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Frame y = predict_next(f, std::span<const Frame>(raw_frames.data() + targets[i] - W, W));
    rows.middleRows(static_cast<Eigen::Index>(i) * D, D) = y.transpose();
  }
  return rows;
}

nn::Matrix truth_rows(const std::vector<Frame>& raw_frames, const std::vector<std::size_t>& targets) {
  if (targets.empty()) return {};
  const auto D = raw_frames.front().cols();
  nn::Matrix rows(static_cast<Eigen::Index>(targets.size()) * D, raw_frames.front().rows());
  for (std::size_t i = 0; i < targets.size(); ++i)
    rows.middleRows(static_cast<Eigen::Index>(i) * D, D) = raw_frames[targets[i]].transpose();
  return rows;
}

BuiltEnsemble build_ensemble(const std::vector<MemberSpec>& members, const std::vector<Frame>& raw_frames,
                             const RollingSplitPlan& plan, const SeriesShape& shape, const nn::Matrix& mix,
                             std::uint64_t seed, int threads) {
  if (members.size() < 2) throw Error(Errc::ConfigError, "an ensemble needs at least two members");
  if (plan.folds.empty()) throw Error(Errc::ConfigError, "split plan has no folds");
  BuiltEnsemble out;
  out.validation.folds.resize(plan.folds.size());
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    out.validation.folds[k].truth = truth_rows(raw_frames, targets_in(plan.folds[k].val, shape.window));
    out.validation.folds[k].preds.resize(members.size());
  }
  const std::size_t nk = plan.folds.size();
  std::vector<FittedForecaster> last(members.size());
  out.fits.assign(members.size(), std::vector<FitResult>(nk));
  parallel_for(members.size() * nk, threads, [&](std::size_t job) {
    const std::size_t m = job / nk, k = job % nk;
    const auto& spec = members[m];
    const std::uint64_t s = derive_seed(seed, {hash_tag(spec.model.family), m, k});
    FittedForecaster f =
        fit_on_fold(spec.model, shape, mix, raw_frames, plan.folds[k], spec.regime, s, &out.fits[m][k]);
    out.validation.folds[k].preds[m] = predict_rows(f, raw_frames, targets_in(plan.folds[k].val, shape.window));
    if (k + 1 == nk) last[m] = std::move(f);
  });
  for (const auto& spec : members) out.validation.models.push_back(spec.model.family);
  out.members = std::move(last);
  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  out.spec = build_ensemble_spec(out.validation, names);
  check_weight_contract(out.spec);
  return out;
}

// ----------------------------------------------------------- forecaster

EnsembleForecaster::EnsembleForecaster(EnsembleSpec spec, std::vector<FittedForecaster> members)
    : spec_(std::move(spec)), members_(std::move(members)) {
  if (members_.empty() || members_.size() != spec_.models.size())
    throw Error(Errc::ShapeMismatch, "ensemble spec and members disagree");
  window_ = members_.front().model->shape().window;
  for (const auto& m : members_)
    if (m.model->shape().window != window_) throw Error(Errc::ShapeMismatch, "members use different windows");
  check_weight_contract(spec_);
}

Frame EnsembleForecaster::predict_frame(std::span<const Frame> window) const {
  std::vector<Frame> preds;
  preds.reserve(members_.size());
  for (const auto& m : members_) preds.push_back(predict_next(m, window));
  return ensemble_predict(spec_, preds);
}

CapacityForecast EnsembleForecaster::forecast(const TelemetryLog& history) const {
  const auto frames = frames_from_log(history.tail(window_));
  std::string bytes;
  for (const auto& f : frames) bytes.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(double));
  const std::uint64_t key = fnv1a(bytes);
  std::lock_guard lock(mutex_);
  if (has_cache_ && key == cached_key_) return cached_;
  const Frame y = predict_frame(frames);
  CapacityForecast fc;
  const auto cpu = static_cast<Eigen::Index>(Feature::AvailableCpu);
  const auto storage = static_cast<Eigen::Index>(Feature::AvailableStorage);
  for (Eigen::Index d = 0; d < y.cols(); ++d) {
    fc.free_cpu.push_back(y(cpu, d));
    fc.free_storage.push_back(y(storage, d));
  }
  cached_ = fc;
  cached_key_ = key;
  has_cache_ = true;
  return fc;
}

}  // namespace sfc
