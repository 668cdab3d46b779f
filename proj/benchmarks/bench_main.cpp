#include <benchmark/benchmark.h>

#include <vector>

#include "unifex/losses.hpp"
#include "unifex/probe.hpp"
#include "unifex/random.hpp"
#include "unifex/retrieval.hpp"

namespace {

unifex::MatrixD gaussian(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  unifex::MatrixD m(rows, cols);
  unifex::CounterRng rng(seed);
  for (double& v : m.values()) v = rng.normal();
  return m;
}

void BM_LossAndGrad(benchmark::State& state) {
  const auto variant = unifex::kAllLossVariants[state.range(0)];
  const std::size_t classes = static_cast<std::size_t>(state.range(1));
  unifex::LossConfig cfg;
  cfg.variant = variant;
  cfg.k = variant == unifex::LossVariant::SubCenterArcFace ? 3 : 1;
  const auto x = gaussian(128, unifex::kProjectionDim, 1);
  const auto w = unifex::ClassifierWeights::random(classes, cfg.k, unifex::kProjectionDim, 2);
  std::vector<unifex::ClassId> targets(128);
  for (std::size_t i = 0; i < targets.size(); ++i) targets[i] = static_cast<unifex::ClassId>(i % classes);
  const auto margins = unifex::class_margins(unifex::ClassStats::from_counts(std::vector<std::size_t>(classes, 5)),
                                             cfg.m_min, cfg.m_max);
  const auto loss_state = unifex::LossState::initial(cfg, classes);
  for (auto _ : state) {
    auto out = unifex::loss_and_grad(cfg, x, w, targets, loss_state, {margins, {}});
    benchmark::DoNotOptimize(out.loss);
  }
  state.SetLabel(std::string(unifex::to_string(variant)));
}
BENCHMARK(BM_LossAndGrad)->ArgsProduct({{0, 1, 2, 3, 4, 5, 6}, {1000}});

void BM_TopK(benchmark::State& state) {
  const auto index = gaussian(static_cast<std::size_t>(state.range(0)), unifex::kProjectionDim, 3);
  const auto queries = gaussian(256, unifex::kProjectionDim, 4);
  for (auto _ : state) {
    auto out = unifex::top_k(queries, index, 5);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_TopK)->Arg(1000)->Arg(10000);

void BM_Project(benchmark::State& state) {
  const auto model = unifex::ProbeModel::init(1152, 100, {}, 0.2, 5);
  const auto x = gaussian(128, 1152, 6);
  const auto mode = state.range(0) == 0 ? unifex::ProjectMode::Eval : unifex::ProjectMode::Train;
  for (auto _ : state) {
    auto out = unifex::project(model, x, mode, 7, 1);
    benchmark::DoNotOptimize(out.y.values().data());
  }
}
BENCHMARK(BM_Project)->Arg(0)->Arg(1);

}  // namespace

BENCHMARK_MAIN();
