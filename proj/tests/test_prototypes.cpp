#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "gradcheck.hpp"
#include "protofed/prototypes.hpp"

using namespace protofed;

namespace {

// Independent brute-force oracle: long-double accumulation, no shared code
// with the implementation under test.
std::array<std::vector<double>, 2> brute_force_means(const Tensor& emb,
                                                     const std::vector<int>& labels) {
  const std::size_t m = emb.dim(1);
  std::array<std::vector<long double>, 2> sums{std::vector<long double>(m, 0.0L),
                                               std::vector<long double>(m, 0.0L)};
  std::array<std::size_t, 2> counts{0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto cls = static_cast<std::size_t>(labels[i]);
    for (std::size_t j = 0; j < m; ++j) sums[cls][j] += emb.data[i * m + j];
    ++counts[cls];
  }
  std::array<std::vector<double>, 2> out;
  for (std::size_t cls = 0; cls < 2; ++cls) {
    if (counts[cls] == 0) continue;
    out[cls].resize(m);
    for (std::size_t j = 0; j < m; ++j) {
      out[cls][j] = static_cast<double>(sums[cls][j] / counts[cls]);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("prototype of a single sample equals its embedding") {
  Tensor emb({1, 3}, {0.5, -1.0, 2.0});
  PrototypeSet p = compute_local_prototypes(emb, {1});
  CHECK(p.has(1));
  CHECK_FALSE(p.has(0));
  CHECK(p.vec(1) == std::vector<double>{0.5, -1.0, 2.0});
  CHECK(p.count(1) == 1);
}

TEST_CASE("prototype is the arithmetic mean of its class members") {
  Tensor emb({2, 2}, {0.0, 0.0, 2.0, 2.0});
  PrototypeSet p = compute_local_prototypes(emb, {0, 0});
  CHECK(p.vec(0) == std::vector<double>{1.0, 1.0});
  CHECK(p.count(0) == 2);
}

TEST_CASE("prototype computation is order independent") {
  Rng rng(3);
  Tensor emb({6, 4});
  gradcheck::randomize(emb, rng);
  std::vector<int> labels = {0, 1, 0, 1, 0, 1};
  PrototypeSet base = compute_local_prototypes(emb, labels);

  std::vector<std::size_t> order = {5, 2, 4, 0, 3, 1};
  Tensor shuffled({6, 4});
  std::vector<int> shuffled_labels(6);
  for (std::size_t i = 0; i < 6; ++i) {
    shuffled_labels[i] = labels[order[i]];
    for (std::size_t j = 0; j < 4; ++j) {
      shuffled.data[i * 4 + j] = emb.data[order[i] * 4 + j];
    }
  }
  PrototypeSet permuted = compute_local_prototypes(shuffled, shuffled_labels);
  for (int cls = 0; cls < 2; ++cls) {
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(permuted.vec(cls)[j] == doctest::Approx(base.vec(cls)[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("local prototypes match the brute-force oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t n = 1 + rng.below(40);
    const std::size_t m = 1 + rng.below(8);
    Tensor emb({n, m});
    gradcheck::randomize(emb, rng, -5.0, 5.0);
    std::vector<int> labels(n);
    for (auto& y : labels) y = static_cast<int>(rng.below(2));

    PrototypeSet got = compute_local_prototypes(emb, labels);
    auto expected = brute_force_means(emb, labels);
    for (int cls = 0; cls < 2; ++cls) {
      const auto& exp_vec = expected[static_cast<std::size_t>(cls)];
      CHECK(got.has(cls) == !exp_vec.empty());
      if (exp_vec.empty()) continue;
      for (std::size_t j = 0; j < m; ++j) {
        CHECK(std::fabs(got.vec(cls)[j] - exp_vec[j]) <= 1e-12);
      }
    }
  }
}

TEST_CASE("streaming accumulation equals one-shot computation") {
  Rng rng(7);
  Tensor all({30, 5});
  gradcheck::randomize(all, rng);
  std::vector<int> labels(30);
  for (auto& y : labels) y = static_cast<int>(rng.below(2));

  PrototypeSet batch = compute_local_prototypes(all, labels);

  RunningMean rm;
  for (std::size_t start = 0; start < 30; start += 7) {
    const std::size_t n = std::min<std::size_t>(7, 30 - start);
    Tensor chunk({n, 5});
    std::copy(all.data.begin() + start * 5, all.data.begin() + (start + n) * 5,
              chunk.data.begin());
    rm.update(chunk, {labels.begin() + start, labels.begin() + start + n});
  }
  PrototypeSet streamed = rm.finalize();

  for (int cls = 0; cls < 2; ++cls) {
    REQUIRE(streamed.has(cls) == batch.has(cls));
    if (!batch.has(cls)) continue;
    CHECK(streamed.count(cls) == batch.count(cls));
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(std::fabs(streamed.vec(cls)[j] - batch.vec(cls)[j]) <= 1e-12);
    }
  }
}

TEST_CASE("empty update leaves the running mean unchanged") {
  RunningMean rm;
  Tensor emb({2, 3}, {1, 2, 3, 4, 5, 6});
  rm.update(emb, {0, 0});
  PrototypeSet before = rm.finalize();
  rm.update(Tensor({0, 3}), {});
  PrototypeSet after = rm.finalize();
  CHECK(before == after);
  CHECK_FALSE(after.has(1));  // class never seen -> absent
}

TEST_CASE("aggregate of a single client is its local set") {
  PrototypeSet local;
  local.set(0, {1.0, 2.0}, 4);
  local.set(1, {3.0, 4.0}, 2);
  PrototypeSet global_ = aggregate_global({{7, local}});
  CHECK(global_ == local);
}

TEST_CASE("aggregate weighted mean example") {
  PrototypeSet a, b;
  a.set(0, {0.0}, 1);
  b.set(0, {4.0}, 3);
  PrototypeSet normalized = aggregate_global({{0, a}, {1, b}}, Aggregation::normalized);
  CHECK(normalized.vec(0)[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(normalized.count(0) == 4);
  // the literal rule happens to agree here: (1/2)*((1/2)*0 + (3/2)*4) = 3
  PrototypeSet literal = aggregate_global({{0, a}, {1, b}}, Aggregation::literal);
  CHECK(literal.vec(0)[0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("normalized and literal aggregation disagree on equal counts") {
  PrototypeSet a, b;
  a.set(0, {0.0}, 1);
  b.set(0, {4.0}, 1);
  PrototypeSet normalized = aggregate_global({{0, a}, {1, b}}, Aggregation::normalized);
  CHECK(normalized.vec(0)[0] == doctest::Approx(2.0).epsilon(1e-12));
  PrototypeSet literal = aggregate_global({{0, a}, {1, b}}, Aggregation::literal);
  CHECK(literal.vec(0)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("aggregate of empty input is empty") {
  PrototypeSet global_ = aggregate_global({});
  CHECK(global_.empty());
}

TEST_CASE("clients missing a class are excluded from that class only") {
  PrototypeSet both, only0;
  both.set(0, {2.0}, 2);
  both.set(1, {5.0}, 2);
  only0.set(0, {4.0}, 2);
  PrototypeSet global_ = aggregate_global({{0, both}, {1, only0}});
  CHECK(global_.vec(0)[0] == doctest::Approx(3.0));
  CHECK(global_.vec(1)[0] == doctest::Approx(5.0));  // only contributor
  CHECK(global_.count(1) == 2);
}

TEST_CASE("aggregation is invariant to client order") {
  Rng rng(11);
  std::vector<std::pair<std::uint32_t, PrototypeSet>> locals;
  for (std::uint32_t id = 0; id < 5; ++id) {
    PrototypeSet p;
    std::vector<double> v0(3), v1(3);
    for (double& v : v0) v = rng.uniform(-2.0, 2.0);
    for (double& v : v1) v = rng.uniform(-2.0, 2.0);
    p.set(0, v0, 1 + rng.below(10));
    if (id != 3) p.set(1, v1, 1 + rng.below(10));
    locals.emplace_back(id, p);
  }
  PrototypeSet base = aggregate_global(locals);
  std::reverse(locals.begin(), locals.end());
  PrototypeSet reversed = aggregate_global(locals);
  CHECK(base == reversed);  // bitwise: summation runs in id order internally
}

TEST_CASE("identical client prototypes aggregate to that vector exactly") {
  // dyadic values and power-of-two weights keep every operation exact
  PrototypeSet proto;
  proto.set(0, {1.5, -2.25}, 2);
  proto.set(1, {0.75, 4.0}, 4);
  std::vector<std::pair<std::uint32_t, PrototypeSet>> locals = {
      {0, proto}, {1, proto}, {2, proto}, {3, proto}};
  PrototypeSet global_ = aggregate_global(locals);
  CHECK(global_.vec(0) == proto.vec(0));
  CHECK(global_.vec(1) == proto.vec(1));
}

TEST_CASE("aggregate lies in the convex hull of the contributions") {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::pair<std::uint32_t, PrototypeSet>> locals;
    const std::size_t k = 2 + rng.below(5);
    for (std::uint32_t id = 0; id < k; ++id) {
      PrototypeSet p;
      std::vector<double> v(4);
      for (double& x : v) x = rng.uniform(-3.0, 3.0);
      p.set(0, v, 1 + rng.below(20));
      locals.emplace_back(id, p);
    }
    PrototypeSet global_ = aggregate_global(locals);
    for (std::size_t j = 0; j < 4; ++j) {
      double lo = 1e300, hi = -1e300;
      for (const auto& [id, p] : locals) {
        lo = std::min(lo, p.vec(0)[j]);
        hi = std::max(hi, p.vec(0)[j]);
      }
      CHECK(global_.vec(0)[j] >= lo - 1e-12);
      CHECK(global_.vec(0)[j] <= hi + 1e-12);
    }
  }
}

TEST_CASE("aggregate matches a brute-force count-weighted mean") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t k = 1 + rng.below(6);
    const std::size_t m = 1 + rng.below(6);
    std::vector<std::pair<std::uint32_t, PrototypeSet>> locals;
    for (std::uint32_t id = 0; id < k; ++id) {
      PrototypeSet p;
      for (int cls = 0; cls < 2; ++cls) {
        if (rng.below(4) == 0) continue;  // sometimes absent
        std::vector<double> v(m);
        for (double& x : v) x = rng.uniform(-5.0, 5.0);
        p.set(cls, v, 1 + rng.below(50));
      }
      locals.emplace_back(id, p);
    }
    PrototypeSet got = aggregate_global(locals);

    for (int cls = 0; cls < 2; ++cls) {
      long double total = 0.0L;
      std::vector<long double> acc(m, 0.0L);
      bool any = false;
      for (const auto& [id, p] : locals) {
        if (!p.has(cls)) continue;
        any = true;
        total += p.count(cls);
        for (std::size_t j = 0; j < m; ++j) {
          acc[j] += static_cast<long double>(p.count(cls)) * p.vec(cls)[j];
        }
      }
      CHECK(got.has(cls) == any);
      if (!any) continue;
      for (std::size_t j = 0; j < m; ++j) {
        const double expected = static_cast<double>(acc[j] / total);
        CHECK(std::fabs(got.vec(cls)[j] - expected) <= 1e-12);
      }
    }
  }
}

TEST_CASE("prototype set enforces the absent-class invariant") {
  PrototypeSet p;
  CHECK(p.empty());
  CHECK_THROWS_AS(p.vec(0), StateError);
  p.set(0, {1.0}, 0);  // count 0 keeps the class absent
  CHECK_FALSE(p.has(0));
  CHECK_THROWS_AS(p.vec(3), DimensionError);
}

TEST_CASE("mismatched prototype dimensions are rejected") {
  PrototypeSet a, b;
  a.set(0, {1.0, 2.0}, 1);
  b.set(0, {1.0}, 1);
  CHECK_THROWS_AS(aggregate_global({{0, a}, {1, b}}), DimensionError);
}
