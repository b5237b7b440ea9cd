#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "protofed/prototypes.hpp"
#include "protofed/tensor.hpp"

namespace protofed {

/// Hyperparameters of the combined loss.
struct LossConfig {
  double lambda = 0.25;  // balance between supervised and contrastive parts
  double tau = 0.5;      // temperature on similarity scores
  double gamma = 2.0;    // sensitivity of the dynamic class weights
  double eps = 1e-8;     // division-by-zero guard
  void validate() const;
};

/// Per-class sample counts of a client's full training set.
struct ClassCounts {
  std::uint64_t n0 = 0;  // non-icing
  std::uint64_t n1 = 0;  // icing

  std::uint64_t total() const { return n0 + n1; }
  std::uint64_t of(int cls) const { return cls == 0 ? n0 : n1; }
  bool both_present() const { return n0 > 0 && n1 > 0; }

  static ClassCounts from_labels(const std::vector<int>& labels);
};

/// Class-frequency-weighted cross entropy, averaged over the batch:
/// mean_i of -(N / (C * n_{y_i})) * log softmax(logits_i)[y_i], with N and
/// n_j taken from `counts` (the client's full training set). When `dlogits`
/// is non-null it receives the exact gradient.
double supervised_loss(const Tensor& logits, const std::vector<int>& labels,
                       const ClassCounts& counts, Tensor* dlogits = nullptr);

/// Dynamic weights (w_pos, w_neg) = ((1/(n0+eps))^gamma, (1/(n1+eps))^gamma).
std::pair<double, double> class_weights(const ClassCounts& counts, double gamma,
                                        double eps);

/// Cosine similarity; throws StateError on a zero-norm input.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// One contrastive pair term:
///   -log( e^{sim(c,g_same)/tau} / (e^{sim(c,g_same)/tau} + e^{sim(c,g_other)/tau} + eps) )
/// with sim = cosine similarity. When `dc` is non-null it receives the
/// gradient with respect to `c` (the global vectors are constants).
double contrastive_term(std::span<const double> c, std::span<const double> g_same,
                        std::span<const double> g_other, double tau, double eps,
                        std::vector<double>* dc = nullptr);

struct PairLosses {
  double pos = 0.0;  // class-0 term
  double neg = 0.0;  // class-1 term
};

/// Both pair terms; requires classes 0 and 1 in both sets.
PairLosses contrastive_pair_losses(const PrototypeSet& local,
                                   const PrototypeSet& global_, double tau,
                                   double eps);

/// Weighted contrastive loss w_pos * L_pos + w_neg * L_neg. When `dlocal`
/// is non-null its entries receive the gradients w.r.t. the local
/// prototype vectors.
double contrastive_loss(const PrototypeSet& local, const PrototypeSet& global_,
                        const ClassCounts& counts, const LossConfig& config,
                        std::array<std::vector<double>, 2>* dlocal = nullptr);

/// (1 - lambda) * supervised + lambda * contrastive.
double total_loss(double supervised, double contrastive, double lambda);

/// Sum over classes present in both sets of the Euclidean distance between
/// local and global prototypes (the ablation regularizer). Optional
/// gradient w.r.t. the local vectors.
double l2_proto_penalty(const PrototypeSet& local, const PrototypeSet& global_,
                        std::array<std::vector<double>, 2>* dlocal = nullptr);

}  // namespace protofed
