#include "protofed/prototypes.hpp"

#include <algorithm>
#include <string>

namespace protofed {

PrototypeSet::Slot& PrototypeSet::slot(int cls) {
  if (cls < 0 || cls >= kNumClasses) {
    throw DimensionError("prototype class out of range: " + std::to_string(cls));
  }
  return slots_[static_cast<std::size_t>(cls)];
}

const PrototypeSet::Slot& PrototypeSet::slot(int cls) const {
  return const_cast<PrototypeSet*>(this)->slot(cls);
}

const std::vector<double>& PrototypeSet::vec(int cls) const {
  const Slot& s = slot(cls);
  if (s.count == 0) {
    throw StateError("prototype for class " + std::to_string(cls) + " is absent");
  }
  return s.vec;
}

void PrototypeSet::set(int cls, std::vector<double> v, std::uint64_t count) {
  Slot& s = slot(cls);
  if (count == 0) {
    s = Slot{};
    return;
  }
  s.vec = std::move(v);
  s.count = count;
}

void PrototypeSet::clear() { slots_ = {}; }

std::size_t PrototypeSet::dim() const {
  for (const Slot& s : slots_) {
    if (s.count > 0) return s.vec.size();
  }
  return 0;
}

PrototypeSet compute_local_prototypes(const Tensor& embeddings,
                                      const std::vector<int>& labels) {
  RunningMean rm;
  rm.update(embeddings, labels);
  return rm.finalize();
}

void RunningMean::update(const Tensor& embeddings, const std::vector<int>& labels) {
  require_rank(embeddings, 2, "running mean input");
  const std::size_t n = embeddings.dim(0);
  const std::size_t m = embeddings.dim(1);
  if (labels.size() != n) {
    throw DimensionError("running mean: labels/embeddings length mismatch");
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = labels[i];
    if (cls < 0 || cls >= PrototypeSet::kNumClasses) {
      throw DataError("label out of range: " + std::to_string(cls));
    }
    auto& sum = sums_[static_cast<std::size_t>(cls)];
    if (sum.empty()) sum.assign(m, 0.0);
    if (sum.size() != m) throw DimensionError("running mean: embedding dim changed");
    const double* row = embeddings.data.data() + i * m;
    for (std::size_t j = 0; j < m; ++j) sum[j] += row[j];
    ++counts_[static_cast<std::size_t>(cls)];
  }
}

PrototypeSet RunningMean::finalize() const {
  PrototypeSet out;
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    const std::uint64_t n = counts_[static_cast<std::size_t>(cls)];
    if (n == 0) continue;
    std::vector<double> mean = sums_[static_cast<std::size_t>(cls)];
    for (double& v : mean) v /= static_cast<double>(n);
    out.set(cls, std::move(mean), n);
  }
  return out;
}

void RunningMean::reset() {
  sums_ = {};
  counts_ = {};
}

Aggregation aggregation_from_string(const std::string& name) {
  if (name == "normalized") return Aggregation::normalized;
  if (name == "literal") return Aggregation::literal;
  throw ConfigError("unknown aggregation mode: " + name);
}

std::string to_string(Aggregation a) {
  return a == Aggregation::normalized ? "normalized" : "literal";
}

PrototypeSet aggregate_global(
    const std::vector<std::pair<std::uint32_t, PrototypeSet>>& locals,
    Aggregation mode) {
  std::vector<std::size_t> order(locals.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return locals[a].first < locals[b].first;
  });

  PrototypeSet global;
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    std::vector<double> acc;
    std::uint64_t total = 0;
    std::uint64_t contributors = 0;
    for (std::size_t idx : order) {
      const PrototypeSet& local = locals[idx].second;
      if (!local.has(cls)) continue;
      const std::vector<double>& v = local.vec(cls);
      if (acc.empty()) {
        acc.assign(v.size(), 0.0);
      } else if (acc.size() != v.size()) {
        throw DimensionError("aggregate_global: prototype dimension mismatch");
      }
      const double w = static_cast<double>(local.count(cls));
      for (std::size_t j = 0; j < v.size(); ++j) acc[j] += w * v[j];
      total += local.count(cls);
      ++contributors;
    }
    if (contributors == 0) continue;
    const double denom =
        mode == Aggregation::normalized
            ? static_cast<double>(total)
            : static_cast<double>(contributors) * static_cast<double>(contributors);
    for (double& v : acc) v /= denom;
    global.set(cls, std::move(acc), total);
  }
  return global;
}

}  // namespace protofed
