#pragma once

// Fully-connected network whose layer products run through a pluggable GEMM
// backend, so forward and backward passes can execute on the tiled
// multi-device runtime.
//
// Per layer, with X the batch x fan_in input:
//   forward   Y = X W + b,  A = f(Y)
//   backward  dY = dA * f'(Y),  dW = X^T dY,  db = column sums of dY,  dX = dY W^T
// Loss is the mean squared error over every output element.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tilerun/device.hpp"
#include "tilerun/error.hpp"
#include "tilerun/matrix.hpp"
#include "tilerun/scheduler.hpp"

namespace tilerun::ann {

enum class Activation { identity, sigmoid, relu };

inline Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "sigmoid") return Activation::sigmoid;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

template <typename T>
T activate(Activation f, T y) {
  switch (f) {
    case Activation::sigmoid:
      return T{1} / (T{1} + std::exp(-y));
    case Activation::relu:
      return y > T{0} ? y : T{0};
    case Activation::identity:
      break;
  }
  return y;
}

template <typename T>
T activate_grad(Activation f, T y) {
  switch (f) {
    case Activation::sigmoid: {
      const T s = activate(f, y);
      return s * (T{1} - s);
    }
    case Activation::relu:
      return y > T{0} ? T{1} : T{0};
    case Activation::identity:
      break;
  }
  return T{1};
}

// Computes op(a) * op(b), where op transposes when the flag is set.
template <typename T>
class GemmBackend {
 public:
  virtual ~GemmBackend() = default;
  virtual MatrixBuf<T> multiply(const MatrixBuf<T>& a, bool transpose_a, const MatrixBuf<T>& b,
                                bool transpose_b) = 0;
  // Time spent in multiply() so far, in the backend's own unit (wall seconds,
  // or simulated time units for a simulating backend).
  double elapsed() const noexcept { return elapsed_; }
  std::uint64_t products() const noexcept { return products_; }

 protected:
  double elapsed_ = 0.0;
  std::uint64_t products_ = 0;
};

// Single-threaded naive product on materialized transposes.
template <typename T>
class DenseBackend final : public GemmBackend<T> {
 public:
  MatrixBuf<T> multiply(const MatrixBuf<T>& a, bool ta, const MatrixBuf<T>& b,
                        bool tb) override {
    const auto t0 = std::chrono::steady_clock::now();
    auto c = reference_gemm(ta ? transpose(a) : a, tb ? transpose(b) : b);
    this->elapsed_ += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ++this->products_;
    return c;
  }
};

// Routes every product through the multi-device runtime. Transposed operands
// become transposed tile views keyed by their source tiles.
template <typename T>
class TiledBackend final : public GemmBackend<T> {
 public:
  TiledBackend(DeviceConfig cfg, std::size_t tile_size, RunOptions opt = {})
      : cfg_(std::move(cfg)), tile_size_(tile_size), opt_(std::move(opt)) {
    cfg_.validate();
    if (tile_size_ == 0) throw DimensionError("tile size must be >= 1");
  }

  MatrixBuf<T> multiply(const MatrixBuf<T>& a, bool ta, const MatrixBuf<T>& b,
                        bool tb) override {
    const auto pa = partition(a, tile_size_);
    const auto pb = partition(b, tile_size_);
    const auto oa = ta ? TileOperand<T>::transposed_of(pa, kMatrixA)
                       : TileOperand<T>::plain(pa, kMatrixA);
    const auto ob = tb ? TileOperand<T>::transposed_of(pb, kMatrixB)
                       : TileOperand<T>::plain(pb, kMatrixB);
    auto r = run(cfg_, oa, ob, opt_);
    this->elapsed_ += opt_.mode == ExecMode::sim ? r.stats.makespan : r.stats.wall_seconds;
    ++this->products_;
    tasks_planned_ += r.stats.tasks;
    last_ = r.stats;
    return std::move(r.c);
  }

  std::uint64_t tasks_planned() const noexcept { return tasks_planned_; }
  const RunStats& last_stats() const noexcept { return last_; }
  std::size_t tile_size() const noexcept { return tile_size_; }

 private:
  DeviceConfig cfg_;
  std::size_t tile_size_;
  RunOptions opt_;
  std::uint64_t tasks_planned_ = 0;
  RunStats last_;
};

template <typename T>
struct Layer {
  MatrixBuf<T> W;       // fan_in x fan_out
  std::vector<T> b;     // fan_out; empty when the layer has no bias
  Activation activation = Activation::sigmoid;

  std::size_t fan_in() const noexcept { return W.rows(); }
  std::size_t fan_out() const noexcept { return W.cols(); }
};

template <typename T>
struct ForwardResult {
  MatrixBuf<T> Y;  // pre-activation
  MatrixBuf<T> A;  // activation output
};

template <typename T>
struct Gradients {
  MatrixBuf<T> dW;
  std::vector<T> db;
  MatrixBuf<T> dX;
};

template <typename T>
ForwardResult<T> forward(const Layer<T>& layer, const MatrixBuf<T>& X, GemmBackend<T>& gemm) {
  if (X.cols() != layer.fan_in())
    throw DimensionError("forward: input has " + std::to_string(X.cols()) +
                         " columns, layer expects " + std::to_string(layer.fan_in()));
  ForwardResult<T> r{gemm.multiply(X, false, layer.W, false), MatrixBuf<T>(X.rows(), layer.fan_out())};
  for (std::size_t i = 0; i < r.Y.rows(); ++i)
    for (std::size_t j = 0; j < r.Y.cols(); ++j) {
      if (!layer.b.empty()) r.Y(i, j) += layer.b[j];
      r.A(i, j) = activate(layer.activation, r.Y(i, j));
    }
  return r;
}

// dY is the gradient with respect to the pre-activation Y.
template <typename T>
Gradients<T> backward(const Layer<T>& layer, const MatrixBuf<T>& X, const MatrixBuf<T>& dY,
                      GemmBackend<T>& gemm) {
  if (X.cols() != layer.fan_in() || dY.cols() != layer.fan_out() || X.rows() != dY.rows())
    throw DimensionError("backward: shapes of X, dY and W are inconsistent");
  Gradients<T> g{gemm.multiply(X, true, dY, false), std::vector<T>(layer.fan_out(), T{0}),
                 gemm.multiply(dY, false, layer.W, true)};
  for (std::size_t i = 0; i < dY.rows(); ++i)
    for (std::size_t j = 0; j < dY.cols(); ++j) g.db[j] += dY(i, j);
  return g;
}

template <typename T>
struct Network {
  std::vector<Layer<T>> layers;

  // widths = {in, hidden..., out}. Weights are Glorot-uniform from `seed`,
  // biases start at zero.
  static Network make(const std::vector<std::size_t>& widths, Activation activation,
                      std::uint64_t seed, bool bias = true) {
    Network net;
    if (widths.size() == 1) throw ConfigError("network needs at least two widths or none");
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::size_t in = widths[l], out = widths[l + 1];
      if (in == 0 || out == 0) throw ConfigError("layer widths must be >= 1");
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> u(-limit, limit);
      Layer<T> layer{MatrixBuf<T>(in, out), bias ? std::vector<T>(out, T{0}) : std::vector<T>{},
                     activation};
      for (auto& w : layer.W.data()) w = static_cast<T>(u(rng));
      net.layers.push_back(std::move(layer));
    }
    return net;
  }
};

template <typename T>
T mse(const MatrixBuf<T>& out, const MatrixBuf<T>& target) {
  if (out.rows() != target.rows() || out.cols() != target.cols())
    throw DimensionError("loss: output and target shapes differ");
  T sum{0};
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T d = out.data()[i] - target.data()[i];
    sum += d * d;
  }
  return sum / static_cast<T>(out.size());
}

template <typename T>
MatrixBuf<T> predict(const Network<T>& net, const MatrixBuf<T>& X, GemmBackend<T>& gemm) {
  MatrixBuf<T> a = X;
  for (const auto& layer : net.layers) a = forward(layer, a, gemm).A;
  return a;
}

template <typename T>
T loss(const Network<T>& net, const MatrixBuf<T>& X, const MatrixBuf<T>& target,
       GemmBackend<T>& gemm) {
  return mse(predict(net, X, gemm), target);
}

// Forward and backward over the whole network. Returns the loss before any
// update and fills `grads` (one entry per layer).
template <typename T>
T gradients(const Network<T>& net, const MatrixBuf<T>& X, const MatrixBuf<T>& target,
            GemmBackend<T>& gemm, std::vector<Gradients<T>>& grads) {
  if (!net.layers.empty() && X.cols() != net.layers.front().fan_in())
    throw DimensionError("batch width does not match the input layer");
  std::vector<MatrixBuf<T>> inputs{X};
  std::vector<ForwardResult<T>> fwd;
  for (const auto& layer : net.layers) {
    fwd.push_back(forward(layer, inputs.back(), gemm));
    inputs.push_back(fwd.back().A);
  }
  const MatrixBuf<T>& out = inputs.back();
  const T value = mse(out, target);

  grads.assign(net.layers.size(), Gradients<T>{});
  MatrixBuf<T> dA(out.rows(), out.cols());
  const T scale = T{2} / static_cast<T>(out.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    dA.data()[i] = scale * (out.data()[i] - target.data()[i]);
  for (std::size_t l = net.layers.size(); l-- > 0;) {
    const auto& layer = net.layers[l];
    MatrixBuf<T> dY = dA;
    for (std::size_t i = 0; i < dY.size(); ++i)
      dY.data()[i] *= activate_grad(layer.activation, fwd[l].Y.data()[i]);
    grads[l] = backward(layer, inputs[l], dY, gemm);
    dA = grads[l].dX;
  }
  return value;
}

// One SGD step on (X, target). Returns the loss measured before the update.
template <typename T>
T train_step(Network<T>& net, const MatrixBuf<T>& X, const MatrixBuf<T>& target, T lr,
             GemmBackend<T>& gemm) {
  std::vector<Gradients<T>> grads;
  const T value = gradients(net, X, target, gemm, grads);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    for (std::size_t i = 0; i < layer.W.size(); ++i) layer.W.data()[i] -= lr * grads[l].dW.data()[i];
    for (std::size_t j = 0; j < layer.b.size(); ++j) layer.b[j] -= lr * grads[l].db[j];
  }
  return value;
}

// Mean time of one forward+backward pass over `repeats` passes, in the
// backend's time unit.
template <typename T>
double bench_pass(const Network<T>& net, const MatrixBuf<T>& X, const MatrixBuf<T>& target,
                  GemmBackend<T>& gemm, std::size_t repeats = 10) {
  if (repeats == 0) throw ConfigError("bench_pass: repeats must be >= 1");
  const double before = gemm.elapsed();
  std::vector<Gradients<T>> grads;
  for (std::size_t r = 0; r < repeats; ++r) gradients(net, X, target, gemm, grads);
  return (gemm.elapsed() - before) / static_cast<double>(repeats);
}

// The four XOR patterns, repeated to fill `batch` rows.
template <typename T>
std::pair<MatrixBuf<T>, MatrixBuf<T>> xor_dataset(std::size_t batch) {
  static constexpr int patterns[4][3] = {{0, 0, 0}, {0, 1, 1}, {1, 0, 1}, {1, 1, 0}};
  MatrixBuf<T> X(batch, 2), Y(batch, 1);
  for (std::size_t i = 0; i < batch; ++i) {
    X(i, 0) = static_cast<T>(patterns[i % 4][0]);
    X(i, 1) = static_cast<T>(patterns[i % 4][1]);
    Y(i, 0) = static_cast<T>(patterns[i % 4][2]);
  }
  return {std::move(X), std::move(Y)};
}

// Uniform inputs in [-1, 1] and targets from a fixed random linear map
// squashed into (0, 1).
template <typename T>
std::pair<MatrixBuf<T>, MatrixBuf<T>> regression_dataset(std::size_t batch, std::size_t in,
                                                         std::size_t out, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  MatrixBuf<T> X(batch, in), M(in, out);
  for (auto& v : X.data()) v = static_cast<T>(u(rng));
  for (auto& v : M.data()) v = static_cast<T>(u(rng));
  MatrixBuf<T> Y = reference_gemm(X, M);
  for (auto& v : Y.data()) v = activate(Activation::sigmoid, v);
  return {std::move(X), std::move(Y)};
}

}  // namespace tilerun::ann
