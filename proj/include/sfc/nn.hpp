#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "sfc/rng.hpp"

namespace sfc::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A named slice of a flat parameter vector viewed as a rows x cols matrix.
struct Block {
  Eigen::Index offset = 0;
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;

  Eigen::Map<Matrix> view(Vector& flat) const { return {flat.data() + offset, rows, cols}; }
  Eigen::Map<const Matrix> view(const Vector& flat) const { return {flat.data() + offset, rows, cols}; }
};

class Layout {
 public:
  Block add(Eigen::Index rows, Eigen::Index cols) {
    Block b{size_, rows, cols};
    size_ += rows * cols;
    return b;
  }
  Eigen::Index size() const { return size_; }

 private:
  Eigen::Index size_ = 0;
};

// Uniform(-bound, bound) fill of one block.
void init_uniform(Vector& flat, const Block& b, double bound, Rng& rng);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// ------------------------------------------------------------------ MLP

// Rectifier hidden layers, linear output. Columns of the input are samples.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<int> sizes, Rng& rng);

  const std::vector<int>& sizes() const { return sizes_; }
  std::size_t input_size() const { return static_cast<std::size_t>(sizes_.front()); }
  std::size_t output_size() const { return static_cast<std::size_t>(sizes_.back()); }

  Vector& params() { return params_; }
  const Vector& params() const { return params_; }

  Matrix forward(const Matrix& x) const;

  // Mean over samples of (Q(s, a) - target)^2 for the chosen action only.
  // Returns the loss and fills grad (same shape as params()).
  double td_loss_grad(const Matrix& x, const std::vector<std::size_t>& actions,
                      const std::vector<double>& targets, Vector& grad) const;

 private:
  std::vector<int> sizes_;
  std::vector<Block> weights_, biases_;
  Vector params_;
};

// ----------------------------------------------------------------- LSTM

// Right-multiplies each consecutive block of mix.rows() columns by mix^T
// (or by mix when `transposed`), i.e. mixes DCs within every sample.
Matrix mix_blocks(const Matrix& x, const Matrix& mix, bool transposed = false);

// One LSTM layer over parallel sequences (columns; samples x DCs). With a
// neighbour-averaging matrix `mix` (D x D) the recurrence also sees the
// neighbours' previous hidden state: Z += Ws * mix_blocks(H_prev).
class LstmLayer {
 public:
  LstmLayer() = default;
  LstmLayer(Layout& layout, int input, int hidden, bool spatial);

  void init(Vector& flat, Rng& rng) const;
  int hidden() const { return hidden_; }

  struct Cache {
    std::vector<Matrix> x, h_prev, c_prev, i, f, g, o, c, tc;
    std::vector<Matrix> h;
  };

  void forward(const Vector& flat, const std::vector<Matrix>& xs, const Matrix* mix, Cache& cache) const;
  // dh[t]: gradient w.r.t. the layer output at t. Returns gradient w.r.t. inputs.
  std::vector<Matrix> backward(const Vector& flat, const Cache& cache, const std::vector<Matrix>& dh,
                               const Matrix* mix, Vector& grad) const;

 private:
  int input_ = 0, hidden_ = 0;
  bool spatial_ = false;
  Block wx_, wh_, ws_, b_;
};

// ------------------------------------------------------- dilated conv

// Causal kernel-2 convolution with dilation `dilation`, rectified.
class CausalConvLayer {
 public:
  CausalConvLayer() = default;
  CausalConvLayer(Layout& layout, int in_channels, int out_channels, int dilation);

  void init(Vector& flat, Rng& rng) const;

  struct Cache {
    std::vector<Matrix> x, pre;
    std::vector<Matrix> out;
  };

  void forward(const Vector& flat, const std::vector<Matrix>& xs, Cache& cache) const;
  std::vector<Matrix> backward(const Vector& flat, const Cache& cache, const std::vector<Matrix>& dout,
                               Vector& grad) const;

 private:
  int in_ = 0, out_ = 0, dilation_ = 1;
  Block w0_, w1_, b_;
};

// ------------------------------------------------------------ optimizers

// Adam with coupled L2 weight decay (decay term added to the gradient).
class Adam {
 public:
  Adam(Eigen::Index size, double lr, double weight_decay);
  void step(Vector& params, const Vector& grad);

 private:
  double lr_, wd_, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::int64_t t_ = 0;
  Vector m_, v_;
};

class Sgd {
 public:
  Sgd(Eigen::Index size, double lr, double momentum);
  void step(Vector& params, const Vector& grad);

 private:
  double lr_, momentum_;
  Vector velocity_;
};

}  // namespace sfc::nn
