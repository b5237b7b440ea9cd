#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>

#include "protofed/param_store.hpp"
#include "protofed/rng.hpp"
#include "protofed/tensor.hpp"

namespace protofed {

enum class Mode { train, eval };

inline double sigmoid_scalar(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
inline double silu_scalar(double x) { return x * sigmoid_scalar(x); }

Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Fills a tensor with uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) values.
void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng);

// Every layer below follows the same protocol: forward() caches whatever
// backward() needs; backward(dout) returns the gradient w.r.t. the last
// forward input and accumulates into the parameter .grad buffers. A layer
// instance is single-threaded and backward must follow its forward.

/// y = x * w + b, x: [N,in], w: [in,out], b: [out].
class Linear {
 public:
  Linear(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
         std::size_t out_dim, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

  std::size_t in_dim() const { return in_; }
  std::size_t out_dim() const { return out_; }

 private:
  Tensor* w_;
  Tensor* b_;
  Tensor x_;
  std::size_t in_, out_;
};

/// 1-D cross-correlation over the last axis. x: [N,c_in,L],
/// w: [c_out,c_in,k], y: [N,c_out,L'] with L' = (L + 2p - k)/stride + 1.
class Conv1d {
 public:
  Conv1d(ParamStore& ps, const std::string& prefix, std::size_t c_in,
         std::size_t c_out, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng);

  static std::size_t out_len(std::size_t len, std::size_t kernel,
                             std::size_t stride, std::size_t padding);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

 private:
  Tensor* w_;
  Tensor* b_;
  Tensor x_;
  std::vector<double> col_;    // im2col cache [N*L', c_in*k]
  std::vector<double> w_mat_;  // repacked weights [c_in*k, c_out]
  std::size_t c_in_, c_out_, k_, stride_, pad_;
};

/// Per-channel batch normalization over [N,c,L]. Train mode normalizes by
/// batch statistics (biased variance) and updates the running buffers with
/// the given momentum; eval mode uses the running buffers. Train mode
/// requires N >= 2.
class BatchNorm1d {
 public:
  BatchNorm1d(ParamStore& ps, const std::string& prefix, std::size_t channels,
              double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& dout);

  const Tensor& running_mean() const { return *run_mean_; }
  const Tensor& running_var() const { return *run_var_; }

 private:
  Tensor* gamma_;
  Tensor* beta_;
  Tensor* run_mean_;
  Tensor* run_var_;
  std::vector<double> xhat_;
  std::vector<double> inv_std_;
  std::size_t channels_;
  std::size_t n_ = 0, len_ = 0;
  double eps_, momentum_;
  Mode last_mode_ = Mode::train;
};

/// Squeeze-and-excitation channel gate on [N,c,L]: per-channel mean over
/// positions, bottleneck MLP c -> c/r -> c with ReLU then sigmoid, output
/// x scaled per channel by the gate.
class SeBlock {
 public:
  SeBlock(ParamStore& ps, const std::string& prefix, std::size_t channels,
          std::size_t reduction, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

 private:
  Tensor* w1_;
  Tensor* b1_;
  Tensor* w2_;
  Tensor* b2_;
  Tensor x_;
  std::vector<double> squeeze_, z1_, a1_, gate_;
  std::size_t c_, cr_;
  std::size_t n_ = 0, len_ = 0;
};

/// 64-byte-aligned growable double buffer. Buffers that flow through
/// vectorized transcendental kernels must have a run-invariant alignment,
/// otherwise results change with the allocator's placement.
class AlignedBuffer {
 public:
  void assign(std::size_t count, double value);
  double* data() { return ptr_.get(); }
  const double* data() const { return ptr_.get(); }
  std::size_t size() const { return size_; }

 private:
  struct Deleter {
    void operator()(double* p) const;
  };
  std::unique_ptr<double[], Deleter> ptr_;
  std::size_t size_ = 0;
  std::size_t capacity_ = 0;
};

/// Single-layer LSTM over the time axis. x: [N,T,d] -> h: [N,T,h].
/// Gate order in the packed weights is (input, forget, cell, output);
/// initial hidden and cell states are zero. Backward runs full BPTT.
class Lstm {
 public:
  Lstm(ParamStore& ps, const std::string& prefix, std::size_t input_dim,
       std::size_t hidden, Rng& rng);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

  std::size_t hidden() const { return h_; }

 private:
  Tensor* w_ih_;  // [d, 4h]
  Tensor* w_hh_;  // [h, 4h]
  Tensor* b_;     // [4h]
  Tensor x_;
  AlignedBuffer gates_;   // [T][N,4h] post-activation
  AlignedBuffer cells_;   // [T][N,h]
  AlignedBuffer hidden_;  // [T][N,h]
  std::size_t d_, h_;
  std::size_t n_ = 0, t_ = 0;
};

/// Inverted dropout: train mode zeroes each element with probability
/// `rate` and scales survivors by 1/(1-rate); eval mode is the identity.
class Dropout {
 public:
  explicit Dropout(double rate);

  Tensor forward(const Tensor& x, Mode mode, Rng& rng);
  Tensor backward(const Tensor& dout);

  double rate() const { return rate_; }

 private:
  double rate_;
  std::vector<double> mask_;  // per-element scale of the last train forward
  bool identity_ = true;
};

/// Mean over the position axis: [N,c,L] -> [N,c].
class AdaptiveAvgPool1d {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

 private:
  std::size_t n_ = 0, c_ = 0, len_ = 0;
};

enum class Activation { relu, silu, sigmoid };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Elementwise activation with cached input for backward.
class ActivationLayer {
 public:
  explicit ActivationLayer(Activation kind) : kind_(kind) {}

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& dout);

 private:
  Activation kind_;
  Tensor x_;
};

}  // namespace protofed
