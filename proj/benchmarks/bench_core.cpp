#include <benchmark/benchmark.h>

#include "protofed/losses.hpp"
#include "protofed/model.hpp"
#include "protofed/prototypes.hpp"
#include "protofed/rng.hpp"

using namespace protofed;

namespace {

Tensor random_batch(const LcnnConfig& cfg, std::size_t n, Rng& rng) {
  Tensor x({n, cfg.window, cfg.input_dim});
  for (double& v : x.data) v = rng.uniform(-1.5, 1.5);
  return x;
}

std::vector<int> random_labels(std::size_t n, Rng& rng) {
  std::vector<int> y(n);
  for (auto& v : y) v = static_cast<int>(rng.below(2));
  return y;
}

}  // namespace

static void BM_ModelForward(benchmark::State& state) {
  LcnnConfig cfg;
  LcnnModel model(cfg, 1);
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_batch(cfg, n, rng);
  for (auto _ : state) {
    auto out = model.forward(x, Mode::eval);
    benchmark::DoNotOptimize(out.logits.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelForward)->Arg(64)->Arg(128);

static void BM_ModelTrainStep(benchmark::State& state) {
  LcnnConfig cfg;
  LcnnModel model(cfg, 1);
  Rng rng(2);
  const auto n = static_cast<std::size_t>(state.range(0));
  Tensor x = random_batch(cfg, n, rng);
  std::vector<int> labels = random_labels(n, rng);
  const ClassCounts counts = ClassCounts::from_labels(labels);
  for (auto _ : state) {
    auto out = model.forward(x, Mode::train);
    Tensor dlogits;
    supervised_loss(out.logits, labels, counts, &dlogits);
    model.backward(dlogits);
    model.params().sgd_step(0.01);
    benchmark::DoNotOptimize(model.params().at("head.w").data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_ModelTrainStep)->Arg(32)->Arg(64)->Arg(128);

static void BM_AggregateGlobal(benchmark::State& state) {
  Rng rng(3);
  std::vector<std::pair<std::uint32_t, PrototypeSet>> locals;
  for (std::uint32_t id = 0; id < static_cast<std::uint32_t>(state.range(0)); ++id) {
    PrototypeSet p;
    for (int cls = 0; cls < 2; ++cls) {
      std::vector<double> v(64);
      for (double& x : v) x = rng.uniform(-1.0, 1.0);
      p.set(cls, v, 1 + rng.below(1000));
    }
    locals.emplace_back(id, p);
  }
  for (auto _ : state) {
    PrototypeSet g = aggregate_global(locals);
    benchmark::DoNotOptimize(g.dim());
  }
}
BENCHMARK(BM_AggregateGlobal)->Arg(4)->Arg(20);

BENCHMARK_MAIN();
