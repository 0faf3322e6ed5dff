#include "sfc/nn.hpp"

#include <stdexcept>

#include "sfc/error.hpp"

namespace sfc::nn {

void init_uniform(Vector& flat, const Block& b, double bound, Rng& rng) {
  auto m = b.view(flat);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform(-bound, bound);
}

// ------------------------------------------------------------------ MLP

Mlp::Mlp(std::vector<int> sizes, Rng& rng) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2) throw Error(Errc::ConfigError, "mlp needs at least input and output sizes");
  Layout layout;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw Error(Errc::ConfigError, "mlp layer sizes must be positive");
    weights_.push_back(layout.add(sizes_[l + 1], sizes_[l]));
    biases_.push_back(layout.add(sizes_[l + 1], 1));
  }
  params_ = Vector::Zero(layout.size());
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    init_uniform(params_, weights_[l], bound, rng);
    init_uniform(params_, biases_[l], bound, rng);
  }
}

Matrix Mlp::forward(const Matrix& x) const {
  if (x.rows() != sizes_.front()) throw Error(Errc::ShapeMismatch, "mlp input has wrong row count");
  Matrix a = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = weights_[l].view(params_) * a;
    z.colwise() += biases_[l].view(params_).col(0);
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
    a = std::move(z);
  }
  return a;
}

double Mlp::td_loss_grad(const Matrix& x, const std::vector<std::size_t>& actions,
                         const std::vector<double>& targets, Vector& grad) const {
  const auto batch = x.cols();
  if (x.rows() != sizes_.front() || static_cast<Eigen::Index>(actions.size()) != batch ||
      static_cast<Eigen::Index>(targets.size()) != batch)
    throw Error(Errc::ShapeMismatch, "td batch shapes disagree");
  std::vector<Matrix> acts{x};
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = weights_[l].view(params_) * acts.back();
    z.colwise() += biases_[l].view(params_).col(0);
    if (l + 1 < weights_.size()) z = z.cwiseMax(0.0);
    acts.push_back(std::move(z));
  }
  const Matrix& q = acts.back();
  Matrix delta = Matrix::Zero(q.rows(), batch);
  double loss = 0.0;
  for (Eigen::Index b = 0; b < batch; ++b) {
    auto a = static_cast<Eigen::Index>(actions[b]);
    if (a >= q.rows()) throw Error(Errc::ShapeMismatch, "action index out of range");
    double e = q(a, b) - targets[b];
    loss += e * e;
    delta(a, b) = 2.0 * e / static_cast<double>(batch);
  }
  loss /= static_cast<double>(batch);

  grad = Vector::Zero(params_.size());
  for (std::size_t l = weights_.size(); l-- > 0;) {
    weights_[l].view(grad) += delta * acts[l].transpose();
    biases_[l].view(grad) += delta.rowwise().sum();
    if (l == 0) break;
    Matrix back = weights_[l].view(params_).transpose() * delta;
    delta = back.cwiseProduct((acts[l].array() > 0.0).cast<double>().matrix());
  }
  return loss;
}

// ----------------------------------------------------------------- LSTM

Matrix mix_blocks(const Matrix& x, const Matrix& mix, bool transposed) {
  const Eigen::Index d = mix.rows();
  if (d == 0 || x.cols() % d != 0) throw Error(Errc::ShapeMismatch, "columns are not whole DC blocks");
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index b = 0; b < x.cols(); b += d) {
    if (transposed)
      out.middleCols(b, d).noalias() = x.middleCols(b, d) * mix;
    else
      out.middleCols(b, d).noalias() = x.middleCols(b, d) * mix.transpose();
  }
  return out;
}

LstmLayer::LstmLayer(Layout& layout, int input, int hidden, bool spatial)
    : input_(input), hidden_(hidden), spatial_(spatial) {
  wx_ = layout.add(4 * hidden, input);
  wh_ = layout.add(4 * hidden, hidden);
  if (spatial_) ws_ = layout.add(4 * hidden, hidden);
  b_ = layout.add(4 * hidden, 1);
}

void LstmLayer::init(Vector& flat, Rng& rng) const {
  double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
  init_uniform(flat, wx_, bound, rng);
  init_uniform(flat, wh_, bound, rng);
  if (spatial_) init_uniform(flat, ws_, bound, rng);
  init_uniform(flat, b_, bound, rng);
}

namespace {

// Vectorised forms; exp saturates to inf/0 gracefully at the extremes.
template <typename Expr>
Matrix sigmoid_of(const Expr& z) {
  return (1.0 + (-z.array()).exp()).inverse().matrix();
}

template <typename Expr>
Matrix tanh_of(const Expr& z) {
  return (2.0 * (1.0 + (-2.0 * z.array()).exp()).inverse() - 1.0).matrix();
}

}  // namespace

void LstmLayer::forward(const Vector& flat, const std::vector<Matrix>& xs, const Matrix* mix, Cache& cache) const {
  const auto steps = xs.size();
  const auto cols = xs.front().cols();
  const auto H = hidden_;
  auto wx = wx_.view(flat);
  auto wh = wh_.view(flat);
  auto b = b_.view(flat);
  cache = Cache{};
  cache.x = xs;
  Matrix h = Matrix::Zero(H, cols), c = Matrix::Zero(H, cols);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix z = wx * xs[t] + wh * h;
    if (spatial_) z += ws_.view(flat) * mix_blocks(h, *mix);
    z.colwise() += b.col(0);
    Matrix i = sigmoid_of(z.topRows(H));
    Matrix f = sigmoid_of(z.middleRows(H, H));
    Matrix g = tanh_of(z.middleRows(2 * H, H));
    Matrix o = sigmoid_of(z.bottomRows(H));
    Matrix cn = f.cwiseProduct(c) + i.cwiseProduct(g);
    Matrix tc = tanh_of(cn);
    Matrix hn = o.cwiseProduct(tc);
    cache.h_prev.push_back(h);
    cache.c_prev.push_back(c);
    cache.i.push_back(std::move(i));
    cache.f.push_back(std::move(f));
    cache.g.push_back(std::move(g));
    cache.o.push_back(std::move(o));
    cache.c.push_back(cn);
    cache.tc.push_back(std::move(tc));
    cache.h.push_back(hn);
    h = std::move(hn);
    c = std::move(cn);
  }
}

std::vector<Matrix> LstmLayer::backward(const Vector& flat, const Cache& cache, const std::vector<Matrix>& dh,
                                        const Matrix* mix, Vector& grad) const {
  const auto steps = cache.x.size();
  const auto H = hidden_;
  const auto cols = cache.x.front().cols();
  auto wx = wx_.view(flat);
  auto wh = wh_.view(flat);
  auto gwx = wx_.view(grad);
  auto gwh = wh_.view(grad);
  auto gb = b_.view(grad);
  std::vector<Matrix> dx(steps);
  Matrix dh_next = Matrix::Zero(H, cols), dc_next = Matrix::Zero(H, cols);
  Matrix dz(4 * H, cols);
  for (std::size_t t = steps; t-- > 0;) {
    Matrix dht = dh_next;
    if (dh[t].size() != 0) dht += dh[t];
    const Matrix& o = cache.o[t];
    const Matrix& tc = cache.tc[t];
    const Matrix& i = cache.i[t];
    const Matrix& f = cache.f[t];
    const Matrix& g = cache.g[t];
    Matrix d_o = dht.cwiseProduct(tc);
    Matrix dc = dc_next + dht.cwiseProduct(o).cwiseProduct((1.0 - tc.array().square()).matrix());
    Matrix d_i = dc.cwiseProduct(g);
    Matrix d_g = dc.cwiseProduct(i);
    Matrix d_f = dc.cwiseProduct(cache.c_prev[t]);
    dc_next = dc.cwiseProduct(f);
    dz.topRows(H) = d_i.cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix()));
    dz.middleRows(H, H) = d_f.cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix()));
    dz.middleRows(2 * H, H) = d_g.cwiseProduct((1.0 - g.array().square()).matrix());
    dz.bottomRows(H) = d_o.cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix()));
    gwx += dz * cache.x[t].transpose();
    gwh += dz * cache.h_prev[t].transpose();
    gb += dz.rowwise().sum();
    dx[t] = wx.transpose() * dz;
    dh_next = wh.transpose() * dz;
    if (spatial_) {
      auto ws = ws_.view(flat);
      ws_.view(grad) += dz * mix_blocks(cache.h_prev[t], *mix).transpose();
      dh_next += mix_blocks(ws.transpose() * dz, *mix, true);
    }
  }
  return dx;
}

// ------------------------------------------------------- dilated conv

CausalConvLayer::CausalConvLayer(Layout& layout, int in_channels, int out_channels, int dilation)
    : in_(in_channels), out_(out_channels), dilation_(dilation) {
  w0_ = layout.add(out_channels, in_channels);
  w1_ = layout.add(out_channels, in_channels);
  b_ = layout.add(out_channels, 1);
}

void CausalConvLayer::init(Vector& flat, Rng& rng) const {
  double bound = 1.0 / std::sqrt(2.0 * in_);
  init_uniform(flat, w0_, bound, rng);
  init_uniform(flat, w1_, bound, rng);
  init_uniform(flat, b_, bound, rng);
}

void CausalConvLayer::forward(const Vector& flat, const std::vector<Matrix>& xs, Cache& cache) const {
  auto w0 = w0_.view(flat);
  auto w1 = w1_.view(flat);
  auto b = b_.view(flat);
  cache = Cache{};
  cache.x = xs;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    Matrix z = w0 * xs[t];
    if (t >= static_cast<std::size_t>(dilation_)) z += w1 * xs[t - dilation_];
    z.colwise() += b.col(0);
    cache.out.push_back(z.cwiseMax(0.0));
    cache.pre.push_back(std::move(z));
  }
}

std::vector<Matrix> CausalConvLayer::backward(const Vector& flat, const Cache& cache, const std::vector<Matrix>& dout,
                                              Vector& grad) const {
  auto w0 = w0_.view(flat);
  auto w1 = w1_.view(flat);
  auto g0 = w0_.view(grad);
  auto g1 = w1_.view(grad);
  auto gb = b_.view(grad);
  const auto steps = cache.x.size();
  const auto cols = cache.x.front().cols();
  std::vector<Matrix> dx(steps, Matrix::Zero(in_, cols));
  for (std::size_t t = 0; t < steps; ++t) {
    if (dout[t].size() == 0) continue;
    Matrix du = dout[t].cwiseProduct((cache.pre[t].array() > 0.0).cast<double>().matrix());
    g0 += du * cache.x[t].transpose();
    gb += du.rowwise().sum();
    dx[t] += w0.transpose() * du;
    if (t >= static_cast<std::size_t>(dilation_)) {
      g1 += du * cache.x[t - dilation_].transpose();
      dx[t - dilation_] += w1.transpose() * du;
    }
  }
  return dx;
}

// ------------------------------------------------------------ optimizers

Adam::Adam(Eigen::Index size, double lr, double weight_decay)
    : lr_(lr), wd_(weight_decay), m_(Vector::Zero(size)), v_(Vector::Zero(size)) {}

void Adam::step(Vector& params, const Vector& grad) {
  ++t_;
  Vector g = grad + wd_ * params;
  m_ = beta1_ * m_ + (1.0 - beta1_) * g;
  v_ = beta2_ * v_ + (1.0 - beta2_) * g.cwiseProduct(g);
  double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Sgd::Sgd(Eigen::Index size, double lr, double momentum)
    : lr_(lr), momentum_(momentum), velocity_(Vector::Zero(size)) {}

void Sgd::step(Vector& params, const Vector& grad) {
  velocity_ = momentum_ * velocity_ + grad;
  params -= lr_ * velocity_;
}

}  // namespace sfc::nn
