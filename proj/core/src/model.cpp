#include "protofed/model.hpp"

#include <algorithm>

namespace protofed {

namespace {

// [N,T,c] -> [N,c,T]
Tensor to_channel_major(const Tensor& x) {
  const std::size_t n = x.dim(0), t = x.dim(1), c = x.dim(2);
  Tensor y({n, c, t});
  for (std::size_t s = 0; s < n; ++s) {
    const double* src = x.data.data() + s * t * c;
    double* dst = y.data.data() + s * c * t;
    for (std::size_t i = 0; i < t; ++i) {
      for (std::size_t j = 0; j < c; ++j) dst[j * t + i] = src[i * c + j];
    }
  }
  return y;
}

// [N,c,T] -> [N,T,c]
Tensor to_time_major(const Tensor& x) {
  const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2);
  Tensor y({n, t, c});
  for (std::size_t s = 0; s < n; ++s) {
    const double* src = x.data.data() + s * c * t;
    double* dst = y.data.data() + s * t * c;
    for (std::size_t j = 0; j < c; ++j) {
      for (std::size_t i = 0; i < t; ++i) dst[i * c + j] = src[j * t + i];
    }
  }
  return y;
}

}  // namespace

void LcnnConfig::validate() const {
  if (input_dim < 1) throw ConfigError("model: input_dim must be >= 1");
  if (window < 1) throw ConfigError("model: window must be >= 1");
  if (lstm_hidden < 1) throw ConfigError("model: lstm_hidden must be >= 1");
  for (std::size_t c : conv_channels) {
    if (c < 1) throw ConfigError("model: conv channel counts must be >= 1");
  }
  if (conv_kernel < 1 || conv_stride < 1) {
    throw ConfigError("model: conv kernel and stride must be >= 1");
  }
  if (se_reduction < 1) throw ConfigError("model: se_reduction must be >= 1");
  if (activation != Activation::relu && activation != Activation::silu) {
    throw ConfigError("model: CNN activation must be relu or silu");
  }
  if (num_classes != 2) throw ConfigError("model: only binary heads are supported");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("model: dropout_rate must be in [0, 1)");
  }
}

LcnnModel::LcnnModel(const LcnnConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      seed_(seed),
      dropout_rng_(derive_seed(seed, 0x0d0d)),
      init_rng_(derive_seed(seed, 0x1417)),
      lstm_(ps_, "lstm", cfg_.input_dim, cfg_.lstm_hidden, init_rng_),
      head_(ps_, "head", cfg_.embed_dim(), cfg_.num_classes, init_rng_),
      dropout_(cfg_.dropout_rate) {
  std::size_t c_in = cfg_.lstm_hidden;
  stages_.reserve(3);
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string idx = std::to_string(i + 1);
    const std::size_t c_out = cfg_.conv_channels[i];
    stages_.push_back(Stage{
        Conv1d(ps_, "conv" + idx, c_in, c_out, cfg_.conv_kernel, cfg_.conv_stride,
               cfg_.conv_padding(), init_rng_),
        SeBlock(ps_, "se" + idx, c_out, cfg_.se_reduction, init_rng_),
        BatchNorm1d(ps_, "bn" + idx, c_out, cfg_.bn_eps, cfg_.bn_momentum),
        ActivationLayer(cfg_.activation)});
    c_in = c_out;
  }
}

LcnnModel::Output LcnnModel::forward(const Tensor& x, Mode mode, Rng* dropout_rng) {
  require_rank(x, 3, "model input");
  if (x.dim(1) != cfg_.window || x.dim(2) != cfg_.input_dim) {
    throw DimensionError("model input: expected [N," + std::to_string(cfg_.window) +
                         "," + std::to_string(cfg_.input_dim) + "]");
  }
  Rng& rng = dropout_rng ? *dropout_rng : dropout_rng_;
  Tensor h = lstm_.forward(x);
  h = dropout_.forward(h, mode, rng);
  Tensor c = to_channel_major(h);
  for (Stage& stage : stages_) {
    c = stage.conv.forward(c);
    c = stage.se.forward(c);
    c = stage.bn.forward(c, mode);
    c = stage.act.forward(c);
  }
  Output out;
  out.embeddings = pool_.forward(c);
  out.logits = head_.forward(out.embeddings);
  have_forward_ = true;
  return out;
}

void LcnnModel::backward(const Tensor& dlogits, const Tensor& dembed) {
  if (!have_forward_) throw StateError("model backward without forward");
  Tensor d = head_.backward(dlogits);
  if (!dembed.data.empty()) {
    if (!d.same_shape(dembed)) throw DimensionError("backward: dembed shape mismatch");
    for (std::size_t i = 0; i < d.size(); ++i) d.data[i] += dembed.data[i];
  }
  d = pool_.backward(d);
  for (std::size_t i = stages_.size(); i-- > 0;) {
    Stage& stage = stages_[i];
    d = stage.act.backward(d);
    d = stage.bn.backward(d);
    d = stage.se.backward(d);
    d = stage.conv.backward(d);
  }
  d = to_time_major(d);
  d = dropout_.backward(d);
  lstm_.backward(d);
  have_forward_ = false;
}

Tensor LcnnModel::embed(const Tensor& x, Mode mode) {
  return forward(x, mode).embeddings;
}

Tensor LcnnModel::classify(const Tensor& x, Mode mode) {
  return forward(x, mode).logits;
}

std::size_t LcnnModel::expected_parameter_count(const LcnnConfig& cfg) {
  const std::size_t h = cfg.lstm_hidden;
  std::size_t count = cfg.input_dim * 4 * h + h * 4 * h + 4 * h;  // lstm
  std::size_t c_in = h;
  for (std::size_t c : cfg.conv_channels) {
    count += c * c_in * cfg.conv_kernel + c;                 // conv
    const std::size_t cr = std::max<std::size_t>(1, c / cfg.se_reduction);
    count += c * cr + cr + cr * c + c;                       // se
    count += 2 * c;                                          // bn gamma/beta
    c_in = c;
  }
  count += cfg.embed_dim() * cfg.num_classes + cfg.num_classes;  // head
  return count;
}

}  // namespace protofed
