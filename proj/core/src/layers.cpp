#include "protofed/layers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdlib>
#include <new>

namespace protofed {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using ConstMatMap = Eigen::Map<const Mat>;
using StrideMap = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;
using ConstStrideMap = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;

MatMap map(Tensor& t, std::size_t rows, std::size_t cols) {
  return MatMap(t.data.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}
ConstMatMap map(const Tensor& t, std::size_t rows, std::size_t cols) {
  return ConstMatMap(t.data.data(), static_cast<Eigen::Index>(rows),
                     static_cast<Eigen::Index>(cols));
}
MatMap map_grad(Tensor& t, std::size_t rows, std::size_t cols) {
  t.ensure_grad();
  return MatMap(t.grad.data(), static_cast<Eigen::Index>(rows),
                static_cast<Eigen::Index>(cols));
}

// Vectorized elementwise sigmoid / tanh; both route through Eigen's packet
// exp so they stay off the scalar libm path.
template <class Block>
void sigmoid_inplace(Block block) {
  block = 1.0 / (1.0 + (-block).exp());
}
template <class Block>
void tanh_inplace(Block block) {
  block = 2.0 / (1.0 + (-2.0 * block).exp()) - 1.0;
}

}  // namespace

void AlignedBuffer::Deleter::operator()(double* p) const { std::free(p); }

void AlignedBuffer::assign(std::size_t count, double value) {
  if (count > capacity_) {
    const std::size_t bytes = ((count * sizeof(double) + 63) / 64) * 64;
    ptr_.reset(static_cast<double*>(std::aligned_alloc(64, bytes)));
    if (!ptr_) throw std::bad_alloc();
    capacity_ = bytes / sizeof(double);
  }
  size_ = count;
  std::fill_n(ptr_.get(), count, value);
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor silu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = silu_scalar(v);
  return y;
}

Tensor sigmoid(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.data) v = sigmoid_scalar(v);
  return y;
}

void init_uniform(Tensor& t, std::size_t fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in ? fan_in : 1));
  for (double& v : t.data) v = rng.uniform(-bound, bound);
}

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "silu") return Activation::silu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation: " + name);
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::silu: return "silu";
    default: return "sigmoid";
  }
}

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(ParamStore& ps, const std::string& prefix, std::size_t in_dim,
               std::size_t out_dim, Rng& rng)
    : in_(in_dim), out_(out_dim) {
  Tensor w({in_dim, out_dim});
  Tensor b({out_dim});
  init_uniform(w, in_dim, rng);
  init_uniform(b, in_dim, rng);
  w_ = &ps.add(prefix + ".w", std::move(w));
  b_ = &ps.add(prefix + ".b", std::move(b));
}

Tensor Linear::forward(const Tensor& x) {
  require_rank(x, 2, "linear input");
  if (x.dim(1) != in_) throw DimensionError("linear: input width mismatch");
  x_ = x;
  const std::size_t n = x.dim(0);
  Tensor y({n, out_});
  map(y, n, out_).noalias() = map(x, n, in_) * map(*w_, in_, out_);
  MatMap ym = map(y, n, out_);
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_->data.data(), out_);
  return y;
}

Tensor Linear::backward(const Tensor& dout) {
  const std::size_t n = x_.dim(0);
  require_shape(dout, {n, out_}, "linear backward");
  map_grad(*w_, in_, out_).noalias() += map(x_, n, in_).transpose() * map(dout, n, out_);
  b_->ensure_grad();
  Eigen::Map<Eigen::RowVectorXd>(b_->grad.data(), out_) +=
      map(dout, n, out_).colwise().sum();
  Tensor dx({n, in_});
  map(dx, n, in_).noalias() = map(dout, n, out_) * map(*w_, in_, out_).transpose();
  return dx;
}

// ---------------------------------------------------------------------------
// Conv1d

Conv1d::Conv1d(ParamStore& ps, const std::string& prefix, std::size_t c_in,
               std::size_t c_out, std::size_t kernel, std::size_t stride,
               std::size_t padding, Rng& rng)
    : c_in_(c_in), c_out_(c_out), k_(kernel), stride_(stride), pad_(padding) {
  if (kernel == 0 || stride == 0) throw ConfigError("conv1d: kernel and stride must be positive");
  Tensor w({c_out, c_in, kernel});
  Tensor b({c_out});
  init_uniform(w, c_in * kernel, rng);
  init_uniform(b, c_in * kernel, rng);
  w_ = &ps.add(prefix + ".w", std::move(w));
  b_ = &ps.add(prefix + ".b", std::move(b));
}

std::size_t Conv1d::out_len(std::size_t len, std::size_t kernel,
                            std::size_t stride, std::size_t padding) {
  if (len + 2 * padding < kernel) {
    throw DimensionError("conv1d: kernel longer than padded input");
  }
  return (len + 2 * padding - kernel) / stride + 1;
}

Tensor Conv1d::forward(const Tensor& x) {
  require_rank(x, 3, "conv1d input");
  if (x.dim(1) != c_in_) throw DimensionError("conv1d: channel mismatch");
  x_ = x;
  const std::size_t n = x.dim(0);
  const std::size_t len = x.dim(2);
  const std::size_t lo = out_len(len, k_, stride_, pad_);
  const std::size_t patch = c_in_ * k_;

  col_.assign(n * lo * patch, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    const double* xs = x.data.data() + s * c_in_ * len;
    for (std::size_t l = 0; l < lo; ++l) {
      double* row = col_.data() + (s * lo + l) * patch;
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(l * stride_) -
                                   static_cast<std::ptrdiff_t>(pad_);
      for (std::size_t ci = 0; ci < c_in_; ++ci) {
        for (std::size_t kk = 0; kk < k_; ++kk) {
          const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(kk);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) {
            row[ci * k_ + kk] = xs[ci * len + pos];
          }
        }
      }
    }
  }

  w_mat_.resize(patch * c_out_);
  for (std::size_t co = 0; co < c_out_; ++co) {
    for (std::size_t p = 0; p < patch; ++p) {
      w_mat_[p * c_out_ + co] = w_->data[co * patch + p];
    }
  }

  Mat y_mat(n * lo, c_out_);
  y_mat.noalias() = ConstMatMap(col_.data(), n * lo, patch) *
                    ConstMatMap(w_mat_.data(), patch, c_out_);

  Tensor y({n, c_out_, lo});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t l = 0; l < lo; ++l) {
      const double* src = y_mat.data() + (s * lo + l) * c_out_;
      for (std::size_t co = 0; co < c_out_; ++co) {
        y.data[(s * c_out_ + co) * lo + l] = src[co] + b_->data[co];
      }
    }
  }
  return y;
}

Tensor Conv1d::backward(const Tensor& dout) {
  const std::size_t n = x_.dim(0);
  const std::size_t len = x_.dim(2);
  const std::size_t lo = out_len(len, k_, stride_, pad_);
  require_shape(dout, {n, c_out_, lo}, "conv1d backward");
  const std::size_t patch = c_in_ * k_;

  Mat dy_mat(n * lo, c_out_);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t l = 0; l < lo; ++l) {
      double* dst = dy_mat.data() + (s * lo + l) * c_out_;
      for (std::size_t co = 0; co < c_out_; ++co) {
        dst[co] = dout.data[(s * c_out_ + co) * lo + l];
      }
    }
  }

  // Parameter gradients.
  Mat dw_mat(patch, c_out_);
  dw_mat.noalias() = ConstMatMap(col_.data(), n * lo, patch).transpose() * dy_mat;
  w_->ensure_grad();
  for (std::size_t co = 0; co < c_out_; ++co) {
    for (std::size_t p = 0; p < patch; ++p) {
      w_->grad[co * patch + p] += dw_mat(p, co);
    }
  }
  b_->ensure_grad();
  Eigen::Map<Eigen::RowVectorXd>(b_->grad.data(), c_out_) += dy_mat.colwise().sum();

  // Input gradient via col2im.
  Mat dcol(n * lo, patch);
  dcol.noalias() = dy_mat * ConstMatMap(w_mat_.data(), patch, c_out_).transpose();
  Tensor dx({n, c_in_, len});
  for (std::size_t s = 0; s < n; ++s) {
    double* dxs = dx.data.data() + s * c_in_ * len;
    for (std::size_t l = 0; l < lo; ++l) {
      const double* row = dcol.data() + (s * lo + l) * patch;
      const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(l * stride_) -
                                   static_cast<std::ptrdiff_t>(pad_);
      for (std::size_t ci = 0; ci < c_in_; ++ci) {
        for (std::size_t kk = 0; kk < k_; ++kk) {
          const std::ptrdiff_t pos = start + static_cast<std::ptrdiff_t>(kk);
          if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) {
            dxs[ci * len + pos] += row[ci * k_ + kk];
          }
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// BatchNorm1d

BatchNorm1d::BatchNorm1d(ParamStore& ps, const std::string& prefix,
                         std::size_t channels, double eps, double momentum)
    : channels_(channels), eps_(eps), momentum_(momentum) {
  Tensor gamma({channels});
  Tensor beta({channels});
  Tensor rm({channels});
  Tensor rv({channels});
  std::fill(gamma.data.begin(), gamma.data.end(), 1.0);
  std::fill(rv.data.begin(), rv.data.end(), 1.0);
  gamma_ = &ps.add(prefix + ".gamma", std::move(gamma));
  beta_ = &ps.add(prefix + ".beta", std::move(beta));
  run_mean_ = &ps.add(prefix + ".running_mean", std::move(rm), /*trainable=*/false);
  run_var_ = &ps.add(prefix + ".running_var", std::move(rv), /*trainable=*/false);
}

Tensor BatchNorm1d::forward(const Tensor& x, Mode mode) {
  require_rank(x, 3, "batchnorm input");
  if (x.dim(1) != channels_) throw DimensionError("batchnorm: channel mismatch");
  n_ = x.dim(0);
  len_ = x.dim(2);
  last_mode_ = mode;
  const std::size_t per_channel = n_ * len_;
  if (mode == Mode::train && n_ < 2) {
    throw StateError("batchnorm: train mode needs batch size >= 2");
  }

  xhat_.resize(x.size());
  inv_std_.resize(channels_);
  Tensor y(x.shape);

  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (mode == Mode::train) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t s = 0; s < n_; ++s) {
        const double* row = x.data.data() + (s * channels_ + c) * len_;
        for (std::size_t l = 0; l < len_; ++l) {
          sum += row[l];
          sq += row[l] * row[l];
        }
      }
      mean = sum / static_cast<double>(per_channel);
      var = sq / static_cast<double>(per_channel) - mean * mean;
      if (var < 0.0) var = 0.0;  // numeric guard
      const double unbiased =
          per_channel > 1 ? var * static_cast<double>(per_channel) /
                                static_cast<double>(per_channel - 1)
                          : var;
      run_mean_->data[c] = (1.0 - momentum_) * run_mean_->data[c] + momentum_ * mean;
      run_var_->data[c] = (1.0 - momentum_) * run_var_->data[c] + momentum_ * unbiased;
    } else {
      mean = run_mean_->data[c];
      var = run_var_->data[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma_->data[c];
    const double beta = beta_->data[c];
    for (std::size_t s = 0; s < n_; ++s) {
      const std::size_t off = (s * channels_ + c) * len_;
      for (std::size_t l = 0; l < len_; ++l) {
        const double xh = (x.data[off + l] - mean) * inv;
        xhat_[off + l] = xh;
        y.data[off + l] = g * xh + beta;
      }
    }
  }
  return y;
}

Tensor BatchNorm1d::backward(const Tensor& dout) {
  require_shape(dout, {n_, channels_, len_}, "batchnorm backward");
  const double count = static_cast<double>(n_ * len_);
  gamma_->ensure_grad();
  beta_->ensure_grad();
  Tensor dx({n_, channels_, len_});

  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t s = 0; s < n_; ++s) {
      const std::size_t off = (s * channels_ + c) * len_;
      for (std::size_t l = 0; l < len_; ++l) {
        sum_dy += dout.data[off + l];
        sum_dy_xhat += dout.data[off + l] * xhat_[off + l];
      }
    }
    gamma_->grad[c] += sum_dy_xhat;
    beta_->grad[c] += sum_dy;

    const double g_inv = gamma_->data[c] * inv_std_[c];
    if (last_mode_ == Mode::train) {
      const double mean_dy = sum_dy / count;
      const double mean_dy_xhat = sum_dy_xhat / count;
      for (std::size_t s = 0; s < n_; ++s) {
        const std::size_t off = (s * channels_ + c) * len_;
        for (std::size_t l = 0; l < len_; ++l) {
          dx.data[off + l] = g_inv * (dout.data[off + l] - mean_dy -
                                      xhat_[off + l] * mean_dy_xhat);
        }
      }
    } else {
      for (std::size_t s = 0; s < n_; ++s) {
        const std::size_t off = (s * channels_ + c) * len_;
        for (std::size_t l = 0; l < len_; ++l) {
          dx.data[off + l] = g_inv * dout.data[off + l];
        }
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// SeBlock

SeBlock::SeBlock(ParamStore& ps, const std::string& prefix, std::size_t channels,
                 std::size_t reduction, Rng& rng)
    : c_(channels) {
  if (reduction < 1) throw ConfigError("se_block: reduction must be >= 1");
  cr_ = std::max<std::size_t>(1, channels / reduction);
  Tensor w1({c_, cr_});
  Tensor b1({cr_});
  Tensor w2({cr_, c_});
  Tensor b2({c_});
  init_uniform(w1, c_, rng);
  init_uniform(b1, c_, rng);
  init_uniform(w2, cr_, rng);
  init_uniform(b2, cr_, rng);
  w1_ = &ps.add(prefix + ".w1", std::move(w1));
  b1_ = &ps.add(prefix + ".b1", std::move(b1));
  w2_ = &ps.add(prefix + ".w2", std::move(w2));
  b2_ = &ps.add(prefix + ".b2", std::move(b2));
}

Tensor SeBlock::forward(const Tensor& x) {
  require_rank(x, 3, "se_block input");
  if (x.dim(1) != c_) throw DimensionError("se_block: channel mismatch");
  x_ = x;
  n_ = x.dim(0);
  len_ = x.dim(2);

  squeeze_.assign(n_ * c_, 0.0);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double* row = x.data.data() + (s * c_ + c) * len_;
      double sum = 0.0;
      for (std::size_t l = 0; l < len_; ++l) sum += row[l];
      squeeze_[s * c_ + c] = sum / static_cast<double>(len_);
    }
  }

  z1_.assign(n_ * cr_, 0.0);
  MatMap(z1_.data(), n_, cr_).noalias() =
      ConstMatMap(squeeze_.data(), n_, c_) * map(*w1_, c_, cr_);
  MatMap(z1_.data(), n_, cr_).rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(b1_->data.data(), cr_);

  a1_ = z1_;
  for (double& v : a1_) v = v > 0.0 ? v : 0.0;

  gate_.assign(n_ * c_, 0.0);
  MatMap(gate_.data(), n_, c_).noalias() =
      ConstMatMap(a1_.data(), n_, cr_) * map(*w2_, cr_, c_);
  MatMap(gate_.data(), n_, c_).rowwise() +=
      Eigen::Map<const Eigen::RowVectorXd>(b2_->data.data(), c_);
  for (double& v : gate_) v = sigmoid_scalar(v);

  Tensor y(x.shape);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double g = gate_[s * c_ + c];
      const std::size_t off = (s * c_ + c) * len_;
      for (std::size_t l = 0; l < len_; ++l) y.data[off + l] = x.data[off + l] * g;
    }
  }
  return y;
}

Tensor SeBlock::backward(const Tensor& dout) {
  require_shape(dout, {n_, c_, len_}, "se_block backward");
  Tensor dx({n_, c_, len_});

  // Gate gradient and the direct scaling path.
  std::vector<double> dgate(n_ * c_, 0.0);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double g = gate_[s * c_ + c];
      const std::size_t off = (s * c_ + c) * len_;
      double acc = 0.0;
      for (std::size_t l = 0; l < len_; ++l) {
        acc += dout.data[off + l] * x_.data[off + l];
        dx.data[off + l] = dout.data[off + l] * g;
      }
      dgate[s * c_ + c] = acc;
    }
  }

  // Through sigmoid.
  std::vector<double> dz2(n_ * c_);
  for (std::size_t i = 0; i < dz2.size(); ++i) {
    dz2[i] = dgate[i] * gate_[i] * (1.0 - gate_[i]);
  }

  w2_->ensure_grad();
  b2_->ensure_grad();
  map_grad(*w2_, cr_, c_).noalias() +=
      ConstMatMap(a1_.data(), n_, cr_).transpose() * ConstMatMap(dz2.data(), n_, c_);
  Eigen::Map<Eigen::RowVectorXd>(b2_->grad.data(), c_) +=
      ConstMatMap(dz2.data(), n_, c_).colwise().sum();

  std::vector<double> da1(n_ * cr_);
  MatMap(da1.data(), n_, cr_).noalias() =
      ConstMatMap(dz2.data(), n_, c_) * map(*w2_, cr_, c_).transpose();
  for (std::size_t i = 0; i < da1.size(); ++i) {
    if (z1_[i] <= 0.0) da1[i] = 0.0;
  }

  w1_->ensure_grad();
  b1_->ensure_grad();
  map_grad(*w1_, c_, cr_).noalias() +=
      ConstMatMap(squeeze_.data(), n_, c_).transpose() * ConstMatMap(da1.data(), n_, cr_);
  Eigen::Map<Eigen::RowVectorXd>(b1_->grad.data(), cr_) +=
      ConstMatMap(da1.data(), n_, cr_).colwise().sum();

  std::vector<double> dsqueeze(n_ * c_);
  MatMap(dsqueeze.data(), n_, c_).noalias() =
      ConstMatMap(da1.data(), n_, cr_) * map(*w1_, c_, cr_).transpose();

  const double inv_len = 1.0 / static_cast<double>(len_);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double d = dsqueeze[s * c_ + c] * inv_len;
      const std::size_t off = (s * c_ + c) * len_;
      for (std::size_t l = 0; l < len_; ++l) dx.data[off + l] += d;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Lstm

Lstm::Lstm(ParamStore& ps, const std::string& prefix, std::size_t input_dim,
           std::size_t hidden, Rng& rng)
    : d_(input_dim), h_(hidden) {
  Tensor w_ih({d_, 4 * h_});
  Tensor w_hh({h_, 4 * h_});
  Tensor b({4 * h_});
  init_uniform(w_ih, d_, rng);
  init_uniform(w_hh, h_, rng);
  init_uniform(b, h_, rng);
  w_ih_ = &ps.add(prefix + ".w_ih", std::move(w_ih));
  w_hh_ = &ps.add(prefix + ".w_hh", std::move(w_hh));
  b_ = &ps.add(prefix + ".b", std::move(b));
}

Tensor Lstm::forward(const Tensor& x) {
  require_rank(x, 3, "lstm input");
  if (x.dim(2) != d_) throw DimensionError("lstm: feature dim mismatch");
  x_ = x;
  n_ = x.dim(0);
  t_ = x.dim(1);
  if (t_ == 0) throw DimensionError("lstm: empty time axis");

  const std::size_t g4 = 4 * h_;
  const auto ni = static_cast<Eigen::Index>(n_);
  const auto hi = static_cast<Eigen::Index>(h_);
  gates_.assign(t_ * n_ * g4, 0.0);
  cells_.assign(t_ * n_ * h_, 0.0);
  hidden_.assign(t_ * n_ * h_, 0.0);

  // Input projection for every step in one product: rows are (n, t) pairs.
  Mat g_in(static_cast<Eigen::Index>(n_ * t_), static_cast<Eigen::Index>(g4));
  g_in.noalias() = map(x, n_ * t_, d_) * map(*w_ih_, d_, g4);
  g_in.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b_->data.data(), g4);

  Mat zero = Mat::Zero(ni, hi);
  Tensor y({n_, t_, h_});

  for (std::size_t t = 0; t < t_; ++t) {
    MatMap g(gates_.data() + t * n_ * g4, n_, g4);
    g = ConstStrideMap(g_in.data() + t * g4, n_, g4,
                       Eigen::OuterStride<>(static_cast<Eigen::Index>(t_ * g4)));
    if (t > 0) {
      ConstMatMap h_prev(hidden_.data() + (t - 1) * n_ * h_, n_, h_);
      g.noalias() += h_prev * map(*w_hh_, h_, g4);
    }

    sigmoid_inplace(g.block(0, 0, ni, hi).array());
    sigmoid_inplace(g.block(0, hi, ni, hi).array());
    tanh_inplace(g.block(0, 2 * hi, ni, hi).array());
    sigmoid_inplace(g.block(0, 3 * hi, ni, hi).array());
    auto gi = g.block(0, 0, ni, hi).array();
    auto gf = g.block(0, hi, ni, hi).array();
    auto gg = g.block(0, 2 * hi, ni, hi).array();
    auto go = g.block(0, 3 * hi, ni, hi).array();

    MatMap c_t(cells_.data() + t * n_ * h_, n_, h_);
    MatMap h_t(hidden_.data() + t * n_ * h_, n_, h_);
    ConstMatMap c_prev(t > 0 ? cells_.data() + (t - 1) * n_ * h_ : zero.data(), n_, h_);
    c_t.array() = gf * c_prev.array() + gi * gg;
    h_t.array() = c_t.array();
    tanh_inplace(h_t.array());
    h_t.array() *= go;
    StrideMap(y.data.data() + t * h_, n_, h_,
              Eigen::OuterStride<>(static_cast<Eigen::Index>(t_ * h_))) = h_t;
  }
  return y;
}

Tensor Lstm::backward(const Tensor& dout) {
  require_shape(dout, {n_, t_, h_}, "lstm backward");
  const std::size_t g4 = 4 * h_;
  const auto ni = static_cast<Eigen::Index>(n_);
  const auto hi = static_cast<Eigen::Index>(h_);

  w_ih_->ensure_grad();
  w_hh_->ensure_grad();
  b_->ensure_grad();
  Tensor dx({n_, t_, d_});

  Mat zero = Mat::Zero(ni, hi);
  Mat dh = Mat::Zero(ni, hi);
  Mat dc = Mat::Zero(ni, hi);
  Mat dz_all(static_cast<Eigen::Index>(n_ * t_), static_cast<Eigen::Index>(g4));
  Mat tanh_c(ni, hi);
  Mat d_cell(ni, hi);

  for (std::size_t t = t_; t-- > 0;) {
    ConstMatMap g(gates_.data() + t * n_ * g4, n_, g4);
    auto gi = g.block(0, 0, ni, hi).array();
    auto gf = g.block(0, hi, ni, hi).array();
    auto gg = g.block(0, 2 * hi, ni, hi).array();
    auto go = g.block(0, 3 * hi, ni, hi).array();
    ConstMatMap c_t(cells_.data() + t * n_ * h_, n_, h_);
    ConstMatMap c_prev(t > 0 ? cells_.data() + (t - 1) * n_ * h_ : zero.data(), n_, h_);

    dh += ConstStrideMap(dout.data.data() + t * h_, n_, h_,
                         Eigen::OuterStride<>(static_cast<Eigen::Index>(t_ * h_)));

    tanh_c = c_t;
    tanh_inplace(tanh_c.array());
    // total cell gradient at step t
    d_cell.array() = dc.array() + dh.array() * go * (1.0 - tanh_c.array().square());
    // pre-activation gate gradients, stored per (n, t) row for the batched
    // weight products below
    StrideMap dz(dz_all.data() + t * g4, n_, g4,
                 Eigen::OuterStride<>(static_cast<Eigen::Index>(t_ * g4)));
    dz.block(0, 0, ni, hi).array() = d_cell.array() * gg * gi * (1.0 - gi);
    dz.block(0, hi, ni, hi).array() = d_cell.array() * c_prev.array() * gf * (1.0 - gf);
    dz.block(0, 2 * hi, ni, hi).array() = d_cell.array() * gi * (1.0 - gg.square());
    dz.block(0, 3 * hi, ni, hi).array() = dh.array() * tanh_c.array() * go * (1.0 - go);
    dc.array() = d_cell.array() * gf;  // becomes dc for t-1

    if (t > 0) {
      ConstMatMap h_prev(hidden_.data() + (t - 1) * n_ * h_, n_, h_);
      map_grad(*w_hh_, h_, g4).noalias() += h_prev.transpose() * dz;
      dh.noalias() = dz * map(*w_hh_, h_, g4).transpose();
    }
  }

  // Input-side products over all steps at once.
  map_grad(*w_ih_, d_, g4).noalias() += map(x_, n_ * t_, d_).transpose() * dz_all;
  Eigen::Map<Eigen::RowVectorXd>(b_->grad.data(), g4) += dz_all.colwise().sum();
  MatMap(dx.data.data(), n_ * t_, d_).noalias() =
      dz_all * map(*w_ih_, d_, g4).transpose();
  return dx;
}

// ---------------------------------------------------------------------------
// Dropout

Dropout::Dropout(double rate) : rate_(rate) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout: rate must be in [0, 1)");
  }
}

Tensor Dropout::forward(const Tensor& x, Mode mode, Rng& rng) {
  if (mode == Mode::eval || rate_ == 0.0) {
    identity_ = true;
    return x;
  }
  identity_ = false;
  const double keep_scale = 1.0 / (1.0 - rate_);
  mask_.resize(x.size());
  Tensor y(x.shape);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double m = rng.uniform() < rate_ ? 0.0 : keep_scale;
    mask_[i] = m;
    y.data[i] = x.data[i] * m;
  }
  return y;
}

Tensor Dropout::backward(const Tensor& dout) {
  if (identity_) return dout;
  if (dout.size() != mask_.size()) throw DimensionError("dropout backward: size mismatch");
  Tensor dx(dout.shape);
  for (std::size_t i = 0; i < dout.size(); ++i) dx.data[i] = dout.data[i] * mask_[i];
  return dx;
}

// ---------------------------------------------------------------------------
// AdaptiveAvgPool1d

Tensor AdaptiveAvgPool1d::forward(const Tensor& x) {
  require_rank(x, 3, "adaptive_avg_pool input");
  n_ = x.dim(0);
  c_ = x.dim(1);
  len_ = x.dim(2);
  if (len_ == 0) throw DimensionError("adaptive_avg_pool: empty position axis");
  Tensor y({n_, c_});
  const double inv = 1.0 / static_cast<double>(len_);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double* row = x.data.data() + (s * c_ + c) * len_;
      double sum = 0.0;
      for (std::size_t l = 0; l < len_; ++l) sum += row[l];
      y.data[s * c_ + c] = sum * inv;
    }
  }
  return y;
}

Tensor AdaptiveAvgPool1d::backward(const Tensor& dout) {
  require_shape(dout, {n_, c_}, "adaptive_avg_pool backward");
  Tensor dx({n_, c_, len_});
  const double inv = 1.0 / static_cast<double>(len_);
  for (std::size_t s = 0; s < n_; ++s) {
    for (std::size_t c = 0; c < c_; ++c) {
      const double d = dout.data[s * c_ + c] * inv;
      double* row = dx.data.data() + (s * c_ + c) * len_;
      for (std::size_t l = 0; l < len_; ++l) row[l] = d;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// ActivationLayer

Tensor ActivationLayer::forward(const Tensor& x) {
  x_ = x;
  switch (kind_) {
    case Activation::relu: return relu(x);
    case Activation::silu: return silu(x);
    default: return sigmoid(x);
  }
}

Tensor ActivationLayer::backward(const Tensor& dout) {
  if (dout.size() != x_.size()) throw DimensionError("activation backward: size mismatch");
  Tensor dx(dout.shape);
  switch (kind_) {
    case Activation::relu:
      for (std::size_t i = 0; i < dout.size(); ++i) {
        dx.data[i] = x_.data[i] > 0.0 ? dout.data[i] : 0.0;
      }
      break;
    case Activation::silu:
      for (std::size_t i = 0; i < dout.size(); ++i) {
        const double s = sigmoid_scalar(x_.data[i]);
        dx.data[i] = dout.data[i] * s * (1.0 + x_.data[i] * (1.0 - s));
      }
      break;
    default:
      for (std::size_t i = 0; i < dout.size(); ++i) {
        const double s = sigmoid_scalar(x_.data[i]);
        dx.data[i] = dout.data[i] * s * (1.0 - s);
      }
  }
  return dx;
}

}  // namespace protofed
