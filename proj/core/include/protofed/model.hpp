#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "protofed/layers.hpp"
#include "protofed/param_store.hpp"
#include "protofed/rng.hpp"
#include "protofed/tensor.hpp"

namespace protofed {

/// Architecture of the sequence classifier: LSTM front end, three
/// conv + SE + BN + activation stages, adaptive average pooling and a
/// linear head. The pooled vector is the embedding used for prototypes.
struct LcnnConfig {
  std::size_t input_dim = 16;   // sensor channels d
  std::size_t window = 32;      // time steps T
  std::size_t lstm_hidden = 32;
  std::array<std::size_t, 3> conv_channels{32, 64, 64};
  std::size_t conv_kernel = 3;
  std::size_t conv_stride = 1;
  std::size_t se_reduction = 4;
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;
  double dropout_rate = 0.2;
  double bn_eps = 1e-5;
  double bn_momentum = 0.1;

  std::size_t embed_dim() const { return conv_channels.back(); }
  std::size_t conv_padding() const { return conv_kernel / 2; }
  void validate() const;
};

class LcnnModel {
 public:
  LcnnModel(const LcnnConfig& cfg, std::uint64_t seed);

  // Layers hold pointers into the owned ParamStore; map nodes survive a
  // move, so the model is movable but not copyable.
  LcnnModel(const LcnnModel&) = delete;
  LcnnModel& operator=(const LcnnModel&) = delete;
  LcnnModel(LcnnModel&&) = default;
  LcnnModel& operator=(LcnnModel&&) = default;

  struct Output {
    Tensor embeddings;  // [N, m]
    Tensor logits;      // [N, 2]
  };

  /// One pass producing both the embedding and the logits; caches
  /// everything backward() needs. When `dropout_rng` is null the model's
  /// own seeded stream is used.
  Output forward(const Tensor& x, Mode mode, Rng* dropout_rng = nullptr);

  /// Backpropagates from the logits and (optionally) an extra gradient
  /// flowing directly into the embeddings; accumulates parameter
  /// gradients. `dembed` may be an empty tensor.
  void backward(const Tensor& dlogits, const Tensor& dembed = Tensor());

  Tensor embed(const Tensor& x, Mode mode);
  Tensor classify(const Tensor& x, Mode mode);

  ParamStore& params() { return ps_; }
  const ParamStore& params() const { return ps_; }
  const LcnnConfig& config() const { return cfg_; }
  std::uint64_t seed() const { return seed_; }

  /// Trainable parameter count implied by the config (closed form).
  static std::size_t expected_parameter_count(const LcnnConfig& cfg);

 private:
  struct Stage {
    Conv1d conv;
    SeBlock se;
    BatchNorm1d bn;
    ActivationLayer act;
  };

  LcnnConfig cfg_;
  std::uint64_t seed_;
  ParamStore ps_;
  Rng dropout_rng_;
  Rng init_rng_;  // consumed during construction only
  Lstm lstm_;
  Linear head_;
  Dropout dropout_;
  std::vector<Stage> stages_;
  AdaptiveAvgPool1d pool_;
  bool have_forward_ = false;
};

}  // namespace protofed
