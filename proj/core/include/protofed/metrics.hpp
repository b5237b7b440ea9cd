#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "protofed/tensor.hpp"

namespace protofed {

/// Binary confusion counts with icing (class 1) as the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
};

/// Argmax decision over two logits (ties go to the non-icing class).
ConfusionCounts confusion_from_logits(const Tensor& logits,
                                      const std::vector<int>& labels);

/// (precision, recall); 0/0 is defined as 0.
std::pair<double, double> precision_recall(const ConfusionCounts& c);

/// (1 + beta^2) P R / (beta^2 P + R); 0 when the numerator is 0.
double f_beta(double precision, double recall, double beta = 2.0);

/// Mean of the per-class recalls; throws MetricError when either actual
/// class is empty.
double balanced_accuracy(const ConfusionCounts& c);

/// Unweighted arithmetic means of per-client (F_beta, BA) pairs.
std::pair<double, double> macro_means(
    const std::vector<std::pair<double, double>>& per_client);

}  // namespace protofed
