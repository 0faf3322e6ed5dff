#include <cmath>

#include "helpers.hpp"
#include "sfc/forecasting.hpp"
#include "sfc/rng.hpp"

using namespace sfc;

namespace {

std::vector<Frame> random_frames(std::size_t T, std::size_t dcs, Rng& rng) {
  std::vector<Frame> out;
  for (std::size_t t = 0; t < T; ++t) {
    Frame f(kFeatureCount, static_cast<Eigen::Index>(dcs));
    for (Eigen::Index i = 0; i < f.size(); ++i) f.data()[i] = rng.uniform();
    out.push_back(f);
  }
  return out;
}

TelemetryLog ramp_log(std::size_t T, std::size_t dcs) {
  std::vector<DcId> ids;
  for (std::size_t d = 0; d < dcs; ++d) ids.push_back(static_cast<DcId>(d));
  TelemetryLog log(ids);
  for (std::size_t t = 0; t < T; ++t) {
    std::vector<TelemetryRow> rows;
    for (std::size_t d = 0; d < dcs; ++d) {
      TelemetryRow r;
      r.timestamp = static_cast<std::int64_t>(t);
      r.dc_id = static_cast<DcId>(d);
      r.available_cpu = static_cast<double>(t);
      r.available_storage = static_cast<double>(100 * d + t);
      rows.push_back(r);
    }
    log.append(rows);
  }
  return log;
}

}  // namespace

TEST_CASE("make_windows") {
  const auto log = ramp_log(10, 2);
  const auto w = make_windows(log, 3);
  REQUIRE(w.size() == 7);
  CHECK(w.front().target_time == 3);
  CHECK(w.back().target_time == 9);
  CHECK(w[0].input.size() == 3);
  CHECK(w[0].input[0](1, 0) == 0.0);
  CHECK(w[0].input[2](1, 0) == 2.0);
  CHECK(w[0].target(0, 1) == 103.0);
  testing::check_error(Errc::SeriesTooShort, [&] { make_windows(log, 10); });
}

TEST_CASE("rolling splits") {
  const auto p = rolling_splits(1000, 20);
  CHECK(p.test == Range{900, 1000});
  REQUIRE(p.folds.size() == 5);
  const std::size_t starts[] = {450, 540, 630, 720, 810};
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(p.folds[k].val == Range{starts[k], starts[k] + 90});
    CHECK(p.folds[k].train == Range{0, starts[k]});
  }
  testing::check_error(Errc::SeriesTooShort, [] { rolling_splits(30, 20); });

  Rng rng(5);
  for (int i = 0; i < 200; ++i) {
    const std::size_t T = 60 + rng.below(2000);
    const std::size_t W = 1 + rng.below(20);
    const std::size_t K = 1 + rng.below(6);
    RollingSplitPlan plan;
    try {
      plan = rolling_splits(T, W, K);
    } catch (const Error& e) {
      CHECK(e.code() == Errc::SeriesTooShort);
      continue;
    }
    CHECK(plan.folds.back().val.end == plan.test.begin);
    CHECK(plan.test.end == T);
    for (std::size_t k = 0; k < K; ++k) {
      const auto& f = plan.folds[k];
      CHECK(f.train.begin == 0);
      CHECK(f.train.end == f.val.begin);
      CHECK(f.train.size() > W);
      CHECK(f.val.size() == plan.folds[0].val.size());
      if (k) CHECK(f.val.begin == plan.folds[k - 1].val.end);
    }
  }
}

TEST_CASE("targets_in") {
  CHECK(targets_in({0, 6}, 3) == std::vector<std::size_t>{3, 4, 5});
  CHECK(targets_in({5, 10}, 3, 4) == std::vector<std::size_t>{7, 8, 9});
  CHECK(targets_in({0, 3}, 3).empty());
}

TEST_CASE("early stopping") {
  TrainRegime r;
  {
    EarlyStopper s(r);
    int e = 1;
    while (!s.update(e, 1.0)) ++e;
    CHECK(e == 35);
    CHECK(s.best_epoch() == 1);
  }
  {
    EarlyStopper s(r);
    int e = 1;
    while (!s.update(e, 1.0 / e)) ++e;
    CHECK(e == 200);
    CHECK(s.best_epoch() == 200);
  }
  {
    EarlyStopper s(r);
    for (int e = 1; e <= 20; ++e) CHECK_FALSE(s.update(e, 5.0 - 1e-7 * (e % 2)));
    CHECK(s.best_epoch() == 1);
  }
}

TEST_CASE("min-max scaler") {
  Rng rng(2);
  const auto frames = random_frames(30, 3, rng);
  const auto s = MinMaxScaler::fit(frames);
  for (const auto& f : frames) {
    const auto z = s.transform(f);
    CHECK(z.minCoeff() >= 0.0);
    CHECK(z.maxCoeff() <= 1.0);
    CHECK((s.inverse(z) - f).cwiseAbs().maxCoeff() < 1e-12);
  }
  CHECK(MinMaxScaler::from_json(s.to_json()) == s);

  std::vector<Frame> flat(4, Frame::Constant(kFeatureCount, 2, 7.0));
  const auto c = MinMaxScaler::fit(flat);
  CHECK(c.transform(flat[0]).allFinite());
  CHECK((c.inverse(c.transform(flat[0])) - flat[0]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fold scaler sees only the training range") {
  Rng rng(3);
  auto frames = random_frames(200, 2, rng);
  frames[150](1, 0) = 1e6;
  const auto plan = rolling_splits(200, 5, 2);
  const Fold fold = plan.folds[0];
  REQUIRE(fold.train.end <= 150);
  const auto mix = nn::Matrix::Zero(2, 2).eval();
  const auto f = fit_on_fold({"persistence"}, {5, kFeatureCount, 2}, mix, frames, fold, {}, 1);
  const std::vector<Frame> train(frames.begin(), frames.begin() + static_cast<long>(fold.train.end));
  CHECK(f.scaler == MinMaxScaler::fit(train));
  CHECK(f.scaler.hi()[1] < 1.0);
}

TEST_CASE("persistence and linear_ar") {
  const SeriesShape shape{4, kFeatureCount, 2};
  const auto mix = nn::Matrix::Zero(2, 2).eval();
  Rng rng(4);
  const auto frames = random_frames(10, 2, rng);
  auto p = make_predictor({"persistence"}, shape, mix, 1);
  CHECK(p->predict(std::span(frames).subspan(3, 4)) == frames[6]);

  // x_t = 0.5 x_{t-1} + 1 per feature and DC
  std::vector<Frame> ar(60);
  ar[0] = Frame::Zero(kFeatureCount, 2);
  for (Eigen::Index f = 0; f < ar[0].rows(); ++f)
    for (Eigen::Index d = 0; d < 2; ++d) ar[0](f, d) = static_cast<double>(f + 3 * d);
  for (std::size_t t = 1; t < ar.size(); ++t) ar[t] = (0.5 * ar[t - 1].array() + 1.0).matrix();
  std::vector<Frame> flat(30, Frame::Constant(kFeatureCount, 2, 3.25));
  auto on_flat = make_predictor({"linear_ar"}, shape, mix, 1);
  on_flat->fit_direct(flat, targets_in({0, 30}, 4));
  CHECK((on_flat->predict(std::span(flat).subspan(0, 4)).array() - 3.25).abs().maxCoeff() < 1e-9);

  auto lin = make_predictor({"linear_ar"}, shape, mix, 1);
  lin->fit_direct(ar, targets_in({0, 30}, 4));
  const auto next = lin->predict(std::span(ar).subspan(40, 4));
  CHECK((next - ar[44]).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("neural predictors with zero parameters predict zero") {
  const SeriesShape shape{5, kFeatureCount, 3};
  const auto t = testing::line(3);
  const auto mix = neighbor_mean_matrix(t);
  Rng rng(6);
  const auto frames = random_frames(5, 3, rng);
  for (const std::string fam : {"lstm", "tcn", "tgnn", "stgnn"}) {
    CAPTURE(fam);
    auto p = make_predictor({fam, 8, 2, 4}, shape, mix, 7);
    CHECK(p->trainable());
    CHECK(p->predict(frames) == p->predict(frames));
    p->params().setZero();
    CHECK(p->predict(frames).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("neighbour mean matrix") {
  const auto t = Topology::build({{0, 1, 1}, {1, 1, 1}, {2, 1, 1}}, {{0, 1, 1000.0}, {0, 2, 1000.0}});
  const auto m = neighbor_mean_matrix(t);
  CHECK(m(0, 1) == 0.5);
  CHECK(m(0, 2) == 0.5);
  CHECK(m(1, 0) == 1.0);
  CHECK(m(1, 2) == 0.0);
  CHECK(m.diagonal().sum() == 0.0);
}

TEST_CASE("analytic gradients match finite differences") {
  const SeriesShape shape{4, kFeatureCount, 3};
  const auto t = testing::line(3);
  const auto mix = neighbor_mean_matrix(t);
  Rng rng(8);
  const auto frames = random_frames(12, 3, rng);
  const std::vector<std::size_t> targets{4, 7, 11};
  for (const std::string fam : {"lstm", "tcn", "tgnn", "stgnn"}) {
    CAPTURE(fam);
    auto p = make_predictor({fam, 5, 2, 3}, shape, mix, 9);
    nn::Vector grad;
    p->loss_grad(frames, targets, &grad, 0.0, nullptr);
    REQUIRE(grad.size() == p->params().size());
    Rng pick(10);
    for (int n = 0; n < 40; ++n) {
      const auto i = static_cast<Eigen::Index>(pick.below(static_cast<std::uint64_t>(grad.size())));
      const double h = 1e-6, x = p->params()[i];
      p->params()[i] = x + h;
      const double up = p->loss_grad(frames, targets, nullptr, 0.0, nullptr);
      p->params()[i] = x - h;
      const double down = p->loss_grad(frames, targets, nullptr, 0.0, nullptr);
      p->params()[i] = x;
      const double fd = (up - down) / (2 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-3));
    }
  }
}

TEST_CASE("optimizers") {
  nn::Vector p(1), g(1);
  p << 1.0;
  g << 0.0;
  nn::Adam adam(1, 0.01, 0.1);
  adam.step(p, g);
  CHECK(p[0] == doctest::Approx(0.99).epsilon(1e-9));

  nn::Vector q(1);
  q << 0.0;
  g << 1.0;
  nn::Sgd sgd(1, 0.1, 0.5);
  sgd.step(q, g);
  sgd.step(q, g);
  CHECK(q[0] == doctest::Approx(-0.25));
}

TEST_CASE("training is deterministic and keeps the best epoch") {
  Rng rng(11);
  std::vector<Frame> frames;
  for (std::size_t t = 0; t < 120; ++t)
    frames.push_back(Frame::Constant(kFeatureCount, 2, std::sin(0.3 * static_cast<double>(t)) + 0.1 * rng.uniform()));
  const SeriesShape shape{6, kFeatureCount, 2};
  const auto mix = nn::Matrix::Zero(2, 2).eval();
  const auto plan = rolling_splits(120, 6, 2);
  TrainRegime r;
  r.max_epochs = 8;
  r.min_epochs = 2;
  r.patience = 3;
  FitResult ra, rb;
  const auto a = fit_on_fold({"lstm", 8, 1}, shape, mix, frames, plan.folds[1], r, 42, &ra);
  const auto b = fit_on_fold({"lstm", 8, 1}, shape, mix, frames, plan.folds[1], r, 42, &rb);
  CHECK(a.model->params() == b.model->params());
  REQUIRE(!ra.trace.empty());
  double best = ra.trace[0].val_loss;
  for (const auto& e : ra.trace) best = std::min(best, e.val_loss);
  CHECK(ra.best_val_loss == best);
  CHECK(ra.trace[static_cast<std::size_t>(ra.best_epoch - 1)].val_loss == best);

  const auto j = forecaster_to_json(a);
  const auto c = forecaster_from_json(j, mix);
  const std::span<const Frame> window(frames.data() + 100, 6);
  CHECK(predict_next(c, window) == predict_next(a, window));
  testing::check_error(Errc::ShapeMismatch, [&] { predict_next(a, window.subspan(0, 5)); });
}
