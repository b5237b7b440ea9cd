#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "protofed/losses.hpp"

using namespace protofed;

namespace {

PrototypeSet make_set(std::vector<double> c0, std::vector<double> c1,
                      std::uint64_t n0 = 1, std::uint64_t n1 = 1) {
  PrototypeSet s;
  s.set(0, std::move(c0), n0);
  s.set(1, std::move(c1), n1);
  return s;
}

}  // namespace

TEST_CASE("supervised loss vanishes for confident correct predictions") {
  Tensor logits({2, 2}, {20.0, -20.0, -20.0, 20.0});
  const ClassCounts counts{50, 50};
  const double loss = supervised_loss(logits, {0, 1}, counts);
  CHECK(loss < 1e-3);
  CHECK(loss >= 0.0);
}

TEST_CASE("supervised loss of uniform logits on balanced counts is log 2") {
  Tensor logits({4, 2});
  const ClassCounts counts{8, 8};
  const double loss = supervised_loss(logits, {0, 1, 0, 1}, counts);
  CHECK(loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("supervised loss applies the imbalance weights N/(C*n_j)") {
  const ClassCounts counts{10, 1};  // N=11
  Tensor one({1, 2}, {0.3, -0.4});
  const double p1 = std::exp(-0.4) / (std::exp(0.3) + std::exp(-0.4));
  const double icing = supervised_loss(one, {1}, counts);
  CHECK(icing == doctest::Approx(11.0 / 2.0 * -std::log(p1)).epsilon(1e-12));

  const double p0 = std::exp(0.3) / (std::exp(0.3) + std::exp(-0.4));
  const double non_icing = supervised_loss(one, {0}, counts);
  CHECK(non_icing == doctest::Approx(11.0 / 20.0 * -std::log(p0)).epsilon(1e-12));
  // weight ratio 5.5 vs 0.55
  CHECK(11.0 / 2.0 == doctest::Approx(5.5));
  CHECK(11.0 / 20.0 == doctest::Approx(0.55));
}

TEST_CASE("supervised loss rejects a class with zero training count") {
  Tensor logits({1, 2});
  CHECK_THROWS_AS(supervised_loss(logits, {1}, ClassCounts{5, 0}), ConfigError);
  CHECK_THROWS_AS(supervised_loss(logits, {2}, ClassCounts{5, 5}), DataError);
}

TEST_CASE("supervised loss gradient matches finite differences") {
  Rng rng(3);
  Tensor logits({6, 2});
  gradcheck::randomize(logits, rng, -2.0, 2.0);
  const std::vector<int> labels = {0, 1, 1, 0, 0, 1};
  const ClassCounts counts{40, 4};

  Tensor dlogits;
  supervised_loss(logits, labels, counts, &dlogits);
  auto loss = [&] { return supervised_loss(logits, labels, counts); };
  gradcheck::Report rep;
  gradcheck::check_buffer(logits.data, dlogits.data, loss, "logits", rep);
  CHECK(rep.max_rel_error < 1e-6);
}

TEST_CASE("class weight examples") {
  auto [w_pos, w_neg] = class_weights(ClassCounts{10, 1}, 2.0, 1e-8);
  CHECK(w_pos == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(w_neg == doctest::Approx(1.0).epsilon(1e-6));

  auto [u_pos, u_neg] = class_weights(ClassCounts{10, 1}, 0.0, 1e-8);
  CHECK(u_pos == 1.0);
  CHECK(u_neg == 1.0);

  auto [e_pos, e_neg] = class_weights(ClassCounts{7, 7}, 2.0, 1e-8);
  CHECK(e_pos == e_neg);
}

TEST_CASE("class weights guard zero counts and decrease with count") {
  auto [w_pos, w_neg] = class_weights(ClassCounts{0, 5}, 2.0, 1e-8);
  CHECK(std::isfinite(w_pos));
  CHECK(w_pos > w_neg);
  double prev = 1e300;
  for (std::uint64_t n : {1ull, 2ull, 5ull, 50ull, 500ull}) {
    auto [w, unused] = class_weights(ClassCounts{n, 1}, 2.0, 1e-8);
    CHECK(w < prev);
    prev = w;
  }
}

TEST_CASE("contrastive pair loss with unit and zero similarities") {
  // sim(C0,G0)=1, sim(C0,G1)=0, tau=0.5, eps=0 -> -log(e^2/(e^2+1))
  PrototypeSet local = make_set({1.0, 0.0}, {0.0, 1.0});
  PrototypeSet global_ = make_set({1.0, 0.0}, {0.0, 1.0});
  PairLosses pl = contrastive_pair_losses(local, global_, 0.5, 0.0);
  const double expected = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
  CHECK(pl.pos == doctest::Approx(expected).epsilon(1e-12));
  CHECK(expected == doctest::Approx(0.126928).epsilon(1e-4));
  // symmetric construction: both terms equal
  CHECK(pl.pos == doctest::Approx(pl.neg).epsilon(1e-12));
}

TEST_CASE("contrastive pair loss at equal similarities is log 2") {
  const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
  PrototypeSet local = make_set({inv_sqrt2, inv_sqrt2}, {inv_sqrt2, inv_sqrt2});
  PrototypeSet global_ = make_set({1.0, 0.0}, {0.0, 1.0});
  PairLosses pl = contrastive_pair_losses(local, global_, 0.5, 0.0);
  CHECK(pl.pos == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  PairLosses with_eps = contrastive_pair_losses(local, global_, 0.5, 1e-8);
  CHECK(with_eps.pos == doctest::Approx(std::log(2.0)).epsilon(1e-8));
}

TEST_CASE("contrastive term is invariant to positive rescaling") {
  Rng rng(5);
  std::vector<double> c(6), g0(6), g1(6);
  for (double& v : c) v = rng.uniform(-1.0, 1.0);
  for (double& v : g0) v = rng.uniform(-1.0, 1.0);
  for (double& v : g1) v = rng.uniform(-1.0, 1.0);
  const double base = contrastive_term(c, g0, g1, 0.5, 1e-8);
  for (double alpha : {2.0, 0.25, 3.7}) {
    std::vector<double> scaled = c;
    for (double& v : scaled) v *= alpha;
    CHECK(contrastive_term(scaled, g0, g1, 0.5, 1e-8) ==
          doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("contrastive loss with unit weights is the plain sum") {
  PrototypeSet local = make_set({1.0, 0.0}, {0.0, 1.0});
  PrototypeSet global_ = make_set({1.0, 0.0}, {0.0, 1.0});
  LossConfig cfg;
  cfg.gamma = 0.0;
  const double lc = contrastive_loss(local, global_, ClassCounts{3, 3}, cfg);
  PairLosses pl = contrastive_pair_losses(local, global_, cfg.tau, cfg.eps);
  CHECK(lc == doctest::Approx(pl.pos + pl.neg).epsilon(1e-12));
  CHECK(lc == doctest::Approx(2.0 * 0.126928).epsilon(1e-4));
}

TEST_CASE("minority class dominates the weighted contrastive loss") {
  const ClassCounts counts{1000, 10};
  LossConfig cfg;  // gamma 2
  auto [w_pos, w_neg] = class_weights(counts, cfg.gamma, cfg.eps);
  CHECK(w_neg > w_pos * 1e3);

  PrototypeSet local = make_set({0.9, 0.1}, {0.2, 0.8});
  PrototypeSet global_ = make_set({1.0, 0.0}, {0.0, 1.0});
  PairLosses pl = contrastive_pair_losses(local, global_, cfg.tau, cfg.eps);
  const double lc = contrastive_loss(local, global_, counts, cfg);
  CHECK(lc == doctest::Approx(w_pos * pl.pos + w_neg * pl.neg).epsilon(1e-12));
  CHECK(w_neg * pl.neg / lc > 0.99);
}

TEST_CASE("contrastive loss requires both classes and nonzero prototypes") {
  PrototypeSet missing;
  missing.set(0, {1.0, 0.0}, 1);
  PrototypeSet global_ = make_set({1.0, 0.0}, {0.0, 1.0});
  CHECK_THROWS_AS(contrastive_pair_losses(missing, global_, 0.5, 1e-8), StateError);

  PrototypeSet zero = make_set({0.0, 0.0}, {0.0, 1.0});
  CHECK_THROWS_AS(contrastive_pair_losses(zero, global_, 0.5, 1e-8), StateError);
}

TEST_CASE("contrastive gradient w.r.t. local prototypes matches finite differences") {
  Rng rng(7);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<double> c0(5), c1(5), g0(5), g1(5);
    for (double& v : c0) v = rng.uniform(-1.0, 1.0);
    for (double& v : c1) v = rng.uniform(-1.0, 1.0);
    for (double& v : g0) v = rng.uniform(-1.0, 1.0);
    for (double& v : g1) v = rng.uniform(-1.0, 1.0);
    PrototypeSet local = make_set(c0, c1, 20, 3);
    PrototypeSet global_ = make_set(g0, g1);
    const ClassCounts counts{20, 3};
    LossConfig cfg;

    std::array<std::vector<double>, 2> dlocal;
    contrastive_loss(local, global_, counts, cfg, &dlocal);

    for (int cls = 0; cls < 2; ++cls) {
      std::vector<double> values = local.vec(cls);
      auto loss = [&] {
        PrototypeSet probe = local;
        probe.set(cls, values, counts.of(cls));
        return contrastive_loss(probe, global_, counts, cfg);
      };
      gradcheck::Report rep;
      gradcheck::check_buffer(values, dlocal[static_cast<std::size_t>(cls)], loss,
                              "c" + std::to_string(cls), rep);
      CHECK_MESSAGE(rep.max_rel_error < 1e-4, rep.worst);
    }
  }
}

TEST_CASE("total loss endpoints and convex combination") {
  CHECK(total_loss(0.8, 0.4, 0.0) == 0.8);
  CHECK(total_loss(0.8, 0.4, 1.0) == 0.4);
  CHECK(total_loss(0.8, 0.4, 0.25) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK_THROWS_AS(total_loss(1.0, 1.0, 1.5), ConfigError);
  CHECK_THROWS_AS(total_loss(1.0, 1.0, -0.1), ConfigError);
}

TEST_CASE("losses are nonnegative on random inputs") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor logits({4, 2});
    gradcheck::randomize(logits, rng, -3.0, 3.0);
    const double ls = supervised_loss(logits, {0, 1, 0, 1}, ClassCounts{9, 3});
    CHECK(ls >= 0.0);

    std::vector<double> c0(4), c1(4), g0(4), g1(4);
    for (double& v : c0) v = rng.uniform(-1.0, 1.0);
    for (double& v : c1) v = rng.uniform(-1.0, 1.0);
    for (double& v : g0) v = rng.uniform(-1.0, 1.0);
    for (double& v : g1) v = rng.uniform(-1.0, 1.0);
    PrototypeSet local = make_set(c0, c1);
    PrototypeSet global_ = make_set(g0, g1);
    const double lc = contrastive_loss(local, global_, ClassCounts{9, 3}, LossConfig{});
    CHECK(lc >= 0.0);
    CHECK(total_loss(ls, lc, 0.25) >= 0.0);
    CHECK(l2_proto_penalty(local, global_) >= 0.0);
  }
}

TEST_CASE("l2 prototype penalty examples") {
  PrototypeSet same = make_set({0.5, -0.5}, {1.0, 2.0});
  CHECK(l2_proto_penalty(same, same) == 0.0);

  PrototypeSet local;
  local.set(0, {3.0, 4.0}, 1);
  PrototypeSet global_;
  global_.set(0, {0.0, 0.0}, 1);
  CHECK(l2_proto_penalty(local, global_) == doctest::Approx(5.0).epsilon(1e-12));
  // symmetry
  CHECK(l2_proto_penalty(global_, local) == l2_proto_penalty(local, global_));
}

TEST_CASE("l2 prototype penalty rejects mismatched dimensions") {
  PrototypeSet local;
  local.set(0, {1.0, 2.0}, 1);
  PrototypeSet global_;
  global_.set(0, {1.0, 2.0, 3.0}, 1);
  CHECK_THROWS_AS(l2_proto_penalty(local, global_), DimensionError);
}

TEST_CASE("l2 prototype penalty gradient matches finite differences") {
  Rng rng(13);
  std::vector<double> c0(4), c1(4), g0(4), g1(4);
  for (double& v : c0) v = rng.uniform(-1.0, 1.0);
  for (double& v : c1) v = rng.uniform(-1.0, 1.0);
  for (double& v : g0) v = rng.uniform(-1.0, 1.0);
  for (double& v : g1) v = rng.uniform(-1.0, 1.0);
  PrototypeSet local = make_set(c0, c1);
  PrototypeSet global_ = make_set(g0, g1);

  std::array<std::vector<double>, 2> dlocal;
  l2_proto_penalty(local, global_, &dlocal);
  for (int cls = 0; cls < 2; ++cls) {
    std::vector<double> values = local.vec(cls);
    auto loss = [&] {
      PrototypeSet probe = local;
      probe.set(cls, values, 1);
      return l2_proto_penalty(probe, global_);
    };
    gradcheck::Report rep;
    gradcheck::check_buffer(values, dlocal[static_cast<std::size_t>(cls)], loss, "c", rep);
    CHECK(rep.max_rel_error < 1e-5);
  }
}

TEST_CASE("loss config validation") {
  LossConfig bad;
  bad.lambda = 1.2;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.tau = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = LossConfig{};
  bad.eps = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_NOTHROW(LossConfig{}.validate());
}
