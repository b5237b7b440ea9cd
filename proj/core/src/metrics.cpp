#include "protofed/metrics.hpp"

#include <string>

namespace protofed {

ConfusionCounts confusion_from_logits(const Tensor& logits,
                                      const std::vector<int>& labels) {
  require_rank(logits, 2, "confusion logits");
  if (logits.dim(1) != 2) throw DimensionError("confusion: expected two logits per row");
  if (logits.dim(0) != labels.size()) {
    throw DimensionError("confusion: label count mismatch");
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int pred = logits.data[i * 2 + 1] > logits.data[i * 2] ? 1 : 0;
    const int truth = labels[i];
    if (truth != 0 && truth != 1) throw DataError("label out of range");
    if (truth == 1) {
      pred == 1 ? ++c.tp : ++c.fn;
    } else {
      pred == 0 ? ++c.tn : ++c.fp;
    }
  }
  return c;
}

std::pair<double, double> precision_recall(const ConfusionCounts& c) {
  const double precision =
      c.tp + c.fp == 0 ? 0.0
                       : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double recall =
      c.tp + c.fn == 0 ? 0.0
                       : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return {precision, recall};
}

double f_beta(double precision, double recall, double beta) {
  const double b2 = beta * beta;
  const double numerator = (1.0 + b2) * precision * recall;
  if (numerator == 0.0) return 0.0;
  return numerator / (b2 * precision + recall);
}

double balanced_accuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw MetricError("balanced_accuracy: undefined when an actual class is empty");
  }
  const double pos_recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double neg_recall = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * (pos_recall + neg_recall);
}

std::pair<double, double> macro_means(
    const std::vector<std::pair<double, double>>& per_client) {
  if (per_client.empty()) throw MetricError("macro_means: empty client list");
  double f = 0.0, ba = 0.0;
  for (const auto& [fb, b] : per_client) {
    f += fb;
    ba += b;
  }
  const double k = static_cast<double>(per_client.size());
  return {f / k, ba / k};
}

}  // namespace protofed
