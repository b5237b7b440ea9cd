#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "protofed/tensor.hpp"

namespace protofed {

/// Owns every named parameter tensor of a model together with the
/// optimizer state attached to it. Entries are kept in name order so all
/// iteration (updates, flattening for the parameter-averaging baseline,
/// checkpoints) is deterministic.
///
/// Non-trainable entries ("buffers", e.g. batch-norm running statistics)
/// are skipped by the optimizers and by flatten()/load_flat().
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t, bool trainable = true);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  bool trainable(std::string_view name) const;

  std::vector<std::string> names(bool trainable_only = false) const;
  std::size_t parameter_count(bool trainable_only = true) const;

  void zero_grad();

  /// SGD update w -= lr * v with v = momentum * v + g. Gradients are
  /// zeroed afterwards. Throws StateError if a trainable parameter has no
  /// gradient buffer.
  void sgd_step(double lr, double momentum = 0.0);

  /// Bias-corrected Adam update; the step counter is shared by the whole
  /// store and advances once per call. Gradients are zeroed afterwards.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

  /// L2 norm of all gradients whose parameter name starts with `prefix`
  /// (empty prefix = every trainable parameter).
  double grad_norm(std::string_view prefix = {}) const;

  /// Scales gradients under `prefix` so their joint norm is at most
  /// `max_norm`. No-op when already within the bound.
  void clip_grad_norm(std::string_view prefix, double max_norm);

  /// Concatenation of all trainable parameter values in name order.
  std::vector<double> flatten() const;
  /// Inverse of flatten(); sizes must match exactly.
  void load_flat(const std::vector<double>& values);

  /// Applies fn(name, tensor, trainable) to every entry in name order.
  template <class Fn>
  void for_each(Fn&& fn) {
    for (auto& [name, entry] : entries_) fn(name, entry.tensor, entry.trainable);
  }
  template <class Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [name, entry] : entries_) fn(name, entry.tensor, entry.trainable);
  }

 private:
  struct Entry {
    Tensor tensor;
    bool trainable = true;
    std::vector<double> momentum;  // SGD velocity, lazily sized
    std::vector<double> adam_m;
    std::vector<double> adam_v;
  };

  std::map<std::string, Entry, std::less<>> entries_;
  std::uint64_t adam_steps_ = 0;
};

}  // namespace protofed
