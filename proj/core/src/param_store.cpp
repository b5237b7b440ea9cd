#include "protofed/param_store.hpp"

#include <cmath>

namespace protofed {

Tensor& ParamStore::add(const std::string& name, Tensor t, bool trainable) {
  auto [it, inserted] = entries_.emplace(name, Entry{std::move(t), trainable, {}, {}, {}});
  if (!inserted) throw StateError("duplicate parameter name: " + name);
  return it->second.tensor;
}

Tensor& ParamStore::at(std::string_view name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("unknown parameter: " + std::string(name));
  return it->second.tensor;
}

const Tensor& ParamStore::at(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("unknown parameter: " + std::string(name));
  return it->second.tensor;
}

bool ParamStore::contains(std::string_view name) const {
  return entries_.find(name) != entries_.end();
}

bool ParamStore::trainable(std::string_view name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw StateError("unknown parameter: " + std::string(name));
  return it->second.trainable;
}

std::vector<std::string> ParamStore::names(bool trainable_only) const {
  std::vector<std::string> out;
  for (const auto& [name, entry] : entries_) {
    if (!trainable_only || entry.trainable) out.push_back(name);
  }
  return out;
}

std::size_t ParamStore::parameter_count(bool trainable_only) const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) {
    if (!trainable_only || entry.trainable) n += entry.tensor.size();
  }
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, entry] : entries_) {
    if (entry.trainable) entry.tensor.zero_grad();
  }
}

void ParamStore::sgd_step(double lr, double momentum) {
  for (auto& [name, entry] : entries_) {
    if (!entry.trainable) continue;
    Tensor& t = entry.tensor;
    if (!t.has_grad()) throw StateError("sgd_step: no gradient for " + name);
    if (momentum != 0.0) {
      if (entry.momentum.size() != t.size()) entry.momentum.assign(t.size(), 0.0);
      for (std::size_t i = 0; i < t.size(); ++i) {
        entry.momentum[i] = momentum * entry.momentum[i] + t.grad[i];
        t.data[i] -= lr * entry.momentum[i];
      }
    } else {
      for (std::size_t i = 0; i < t.size(); ++i) t.data[i] -= lr * t.grad[i];
    }
    t.zero_grad();
  }
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_steps_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(adam_steps_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(adam_steps_));
  for (auto& [name, entry] : entries_) {
    if (!entry.trainable) continue;
    Tensor& t = entry.tensor;
    if (!t.has_grad()) throw StateError("adam_step: no gradient for " + name);
    if (entry.adam_m.size() != t.size()) {
      entry.adam_m.assign(t.size(), 0.0);
      entry.adam_v.assign(t.size(), 0.0);
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double g = t.grad[i];
      entry.adam_m[i] = beta1 * entry.adam_m[i] + (1.0 - beta1) * g;
      entry.adam_v[i] = beta2 * entry.adam_v[i] + (1.0 - beta2) * g * g;
      const double m_hat = entry.adam_m[i] / bc1;
      const double v_hat = entry.adam_v[i] / bc2;
      t.data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
    t.zero_grad();
  }
}

double ParamStore::grad_norm(std::string_view prefix) const {
  double sq = 0.0;
  for (const auto& [name, entry] : entries_) {
    if (!entry.trainable || !entry.tensor.has_grad()) continue;
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    for (double g : entry.tensor.grad) sq += g * g;
  }
  return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(std::string_view prefix, double max_norm) {
  const double norm = grad_norm(prefix);
  if (norm <= max_norm || norm == 0.0) return;
  const double scale = max_norm / norm;
  for (auto& [name, entry] : entries_) {
    if (!entry.trainable || !entry.tensor.has_grad()) continue;
    if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
    for (double& g : entry.tensor.grad) g *= scale;
  }
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> out;
  out.reserve(parameter_count(true));
  for (const auto& [name, entry] : entries_) {
    if (!entry.trainable) continue;
    out.insert(out.end(), entry.tensor.data.begin(), entry.tensor.data.end());
  }
  return out;
}

void ParamStore::load_flat(const std::vector<double>& values) {
  if (values.size() != parameter_count(true)) {
    throw DimensionError("load_flat: got " + std::to_string(values.size()) +
                         " values, store holds " +
                         std::to_string(parameter_count(true)));
  }
  std::size_t offset = 0;
  for (auto& [name, entry] : entries_) {
    if (!entry.trainable) continue;
    std::copy(values.begin() + offset, values.begin() + offset + entry.tensor.size(),
              entry.tensor.data.begin());
    offset += entry.tensor.size();
  }
}

}  // namespace protofed
