#include "protofed/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace protofed {

void LossConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("loss: lambda must be in [0, 1]");
  if (tau <= 0.0) throw ConfigError("loss: tau must be positive");
  if (gamma < 0.0) throw ConfigError("loss: gamma must be >= 0");
  if (eps <= 0.0) throw ConfigError("loss: eps must be positive");
}

ClassCounts ClassCounts::from_labels(const std::vector<int>& labels) {
  ClassCounts c;
  for (int y : labels) {
    if (y == 0) {
      ++c.n0;
    } else if (y == 1) {
      ++c.n1;
    } else {
      throw DataError("label out of range: " + std::to_string(y));
    }
  }
  return c;
}

double supervised_loss(const Tensor& logits, const std::vector<int>& labels,
                       const ClassCounts& counts, Tensor* dlogits) {
  require_rank(logits, 2, "supervised_loss logits");
  const std::size_t n = logits.dim(0);
  const std::size_t c = logits.dim(1);
  if (c != 2) throw DimensionError("supervised_loss: expected two logits per row");
  if (labels.size() != n) throw DimensionError("supervised_loss: label count mismatch");
  if (n == 0) throw DimensionError("supervised_loss: empty batch");

  for (int y : labels) {
    if (y != 0 && y != 1) throw DataError("label out of range: " + std::to_string(y));
    if (counts.of(y) == 0) {
      throw ConfigError("supervised_loss: class " + std::to_string(y) +
                        " present in batch but its training-set count is zero");
    }
  }

  const double total = static_cast<double>(counts.total());
  if (dlogits) {
    *dlogits = Tensor({n, c});
  }

  double loss = 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double l0 = logits.data[i * 2];
    const double l1 = logits.data[i * 2 + 1];
    const double m = std::max(l0, l1);
    const double e0 = std::exp(l0 - m);
    const double e1 = std::exp(l1 - m);
    const double lse = m + std::log(e0 + e1);
    const int y = labels[i];
    const double w = total / (2.0 * static_cast<double>(counts.of(y)));
    const double log_p = (y == 0 ? l0 : l1) - lse;
    loss -= w * log_p;
    if (dlogits) {
      const double p0 = e0 / (e0 + e1);
      const double p1 = e1 / (e0 + e1);
      dlogits->data[i * 2] = w * inv_n * (p0 - (y == 0 ? 1.0 : 0.0));
      dlogits->data[i * 2 + 1] = w * inv_n * (p1 - (y == 1 ? 1.0 : 0.0));
    }
  }
  return loss * inv_n;
}

std::pair<double, double> class_weights(const ClassCounts& counts, double gamma,
                                        double eps) {
  if (gamma < 0.0) throw ConfigError("class_weights: gamma must be >= 0");
  const double w_pos = std::pow(1.0 / (static_cast<double>(counts.n0) + eps), gamma);
  const double w_neg = std::pow(1.0 / (static_cast<double>(counts.n1) + eps), gamma);
  return {w_pos, w_neg};
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("cosine_similarity: size mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) {
    throw StateError("cosine_similarity: undefined for a zero-norm vector");
  }
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace {

// d cos(c, g) / dc = g / (|c||g|) - cos(c, g) * c / |c|^2
void accumulate_cosine_grad(std::span<const double> c, std::span<const double> g,
                            double cos_cg, double scale, std::vector<double>& out) {
  double nc = 0.0, ng = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    nc += c[i] * c[i];
    ng += g[i] * g[i];
  }
  const double inv_cg = 1.0 / (std::sqrt(nc) * std::sqrt(ng));
  const double inv_cc = 1.0 / nc;
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] += scale * (g[i] * inv_cg - cos_cg * c[i] * inv_cc);
  }
}

}  // namespace

double contrastive_term(std::span<const double> c, std::span<const double> g_same,
                        std::span<const double> g_other, double tau, double eps,
                        std::vector<double>* dc) {
  if (tau <= 0.0) throw ConfigError("contrastive_term: tau must be positive");
  const double s_same = cosine_similarity(c, g_same);
  const double s_other = cosine_similarity(c, g_other);
  const double z_same = s_same / tau;
  const double z_other = s_other / tau;

  const double m = std::max(z_same, z_other);
  const double e_same = std::exp(z_same - m);
  const double e_other = std::exp(z_other - m);
  const double denom = e_same + e_other + eps * std::exp(-m);
  const double loss = -(z_same - m - std::log(denom));

  if (dc) {
    dc->assign(c.size(), 0.0);
    const double p_same = e_same / denom;
    const double p_other = e_other / denom;
    accumulate_cosine_grad(c, g_same, s_same, (p_same - 1.0) / tau, *dc);
    accumulate_cosine_grad(c, g_other, s_other, p_other / tau, *dc);
  }
  return loss;
}

PairLosses contrastive_pair_losses(const PrototypeSet& local,
                                   const PrototypeSet& global_, double tau,
                                   double eps) {
  PairLosses out;
  out.pos = contrastive_term(local.vec(0), global_.vec(0), global_.vec(1), tau, eps);
  out.neg = contrastive_term(local.vec(1), global_.vec(1), global_.vec(0), tau, eps);
  return out;
}

double contrastive_loss(const PrototypeSet& local, const PrototypeSet& global_,
                        const ClassCounts& counts, const LossConfig& config,
                        std::array<std::vector<double>, 2>* dlocal) {
  config.validate();
  const auto [w_pos, w_neg] = class_weights(counts, config.gamma, config.eps);
  std::vector<double> d_pos, d_neg;
  const double l_pos =
      contrastive_term(local.vec(0), global_.vec(0), global_.vec(1), config.tau,
                       config.eps, dlocal ? &d_pos : nullptr);
  const double l_neg =
      contrastive_term(local.vec(1), global_.vec(1), global_.vec(0), config.tau,
                       config.eps, dlocal ? &d_neg : nullptr);
  if (dlocal) {
    for (double& v : d_pos) v *= w_pos;
    for (double& v : d_neg) v *= w_neg;
    (*dlocal)[0] = std::move(d_pos);
    (*dlocal)[1] = std::move(d_neg);
  }
  return w_pos * l_pos + w_neg * l_neg;
}

double total_loss(double supervised, double contrastive, double lambda) {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("total_loss: lambda must be in [0, 1]");
  return (1.0 - lambda) * supervised + lambda * contrastive;
}

double l2_proto_penalty(const PrototypeSet& local, const PrototypeSet& global_,
                        std::array<std::vector<double>, 2>* dlocal) {
  double penalty = 0.0;
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    if (dlocal) (*dlocal)[static_cast<std::size_t>(cls)].clear();
    if (!local.has(cls) || !global_.has(cls)) continue;
    const std::vector<double>& c = local.vec(cls);
    const std::vector<double>& g = global_.vec(cls);
    if (c.size() != g.size()) {
      throw DimensionError("l2_proto_penalty: dimension mismatch");
    }
    double sq = 0.0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double d = c[i] - g[i];
      sq += d * d;
    }
    const double dist = std::sqrt(sq);
    penalty += dist;
    if (dlocal) {
      auto& grad = (*dlocal)[static_cast<std::size_t>(cls)];
      grad.assign(c.size(), 0.0);
      if (dist > 0.0) {
        for (std::size_t i = 0; i < c.size(); ++i) grad[i] = (c[i] - g[i]) / dist;
      }
    }
  }
  return penalty;
}

}  // namespace protofed
