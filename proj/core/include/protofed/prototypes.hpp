#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "protofed/tensor.hpp"

namespace protofed {

/// Per-class embedding means with the number of contributing samples.
/// A class whose count is zero is absent and holds no vector.
class PrototypeSet {
 public:
  static constexpr int kNumClasses = 2;

  bool has(int cls) const { return slot(cls).count > 0; }
  bool empty() const { return !has(0) && !has(1); }

  const std::vector<double>& vec(int cls) const;
  std::uint64_t count(int cls) const { return slot(cls).count; }

  void set(int cls, std::vector<double> v, std::uint64_t count);
  void clear();

  /// Dimension of the stored vectors (0 when empty).
  std::size_t dim() const;

  bool operator==(const PrototypeSet& other) const = default;

 private:
  struct Slot {
    std::vector<double> vec;
    std::uint64_t count = 0;
    bool operator==(const Slot&) const = default;
  };

  Slot& slot(int cls);
  const Slot& slot(int cls) const;

  std::array<Slot, kNumClasses> slots_;
};

/// Mean embedding per class over the batch; absent classes yield no entry.
PrototypeSet compute_local_prototypes(const Tensor& embeddings,
                                      const std::vector<int>& labels);

/// Streaming form of the per-class mean: accumulate batches, finalize once.
class RunningMean {
 public:
  void update(const Tensor& embeddings, const std::vector<int>& labels);
  PrototypeSet finalize() const;
  void reset();

 private:
  std::array<std::vector<double>, PrototypeSet::kNumClasses> sums_;
  std::array<std::uint64_t, PrototypeSet::kNumClasses> counts_{};
};

/// How the server combines client prototypes into the global set.
/// `normalized` divides by the total contributing sample count (weights sum
/// to one); `literal` divides by the squared number of contributing clients
/// instead, matching the printed aggregation rule exactly.
enum class Aggregation { normalized, literal };

Aggregation aggregation_from_string(const std::string& name);
std::string to_string(Aggregation a);

/// Combines client prototype sets per class. Clients missing a class are
/// excluded from that class's aggregate; summation runs in ascending
/// client-id order regardless of input order. Returns an empty set for
/// empty input.
PrototypeSet aggregate_global(
    const std::vector<std::pair<std::uint32_t, PrototypeSet>>& locals,
    Aggregation mode = Aggregation::normalized);

}  // namespace protofed
