#include <numeric>

#include <benchmark/benchmark.h>

#include "floodpix/gbdt.hpp"
#include "floodpix/rng.hpp"

namespace {

using namespace floodpix;
using floodpix::io::Label;

struct Fixture {
  std::size_t rows, cols;
  std::vector<float> x;
  std::vector<Label> y;
  FeatureView view() const { return {x, rows, cols}; }
};

// Noisy linear boundary over `cols` uniform features.
Fixture make(std::size_t rows, std::size_t cols) {
  Rng rng(1);
  Fixture f{rows, cols, {}, {}};
  f.x.reserve(rows * cols);
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      const double v = rng.uniform();
      s += (j % 2 ? -1.0 : 1.0) * v;
      f.x.push_back(static_cast<float>(v));
    }
    f.y.push_back(s + 0.3 * rng.normal() > 0 ? Label::Water : Label::Dry);
  }
  return f;
}

void BM_BinFeatures(benchmark::State& state) {
  const auto f = make(static_cast<std::size_t>(state.range(0)), 9);
  for (auto _ : state) benchmark::DoNotOptimize(gbdt::bin_features(f.view()));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_BinFeatures)->Arg(1 << 14)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

void BM_FindBestSplit(benchmark::State& state) {
  const auto f = make(static_cast<std::size_t>(state.range(0)), 9);
  const auto bins = gbdt::bin_features(f.view());
  const std::vector<double> margins(f.rows, 0.0);
  const auto gh = gbdt::logistic_grad_hess(margins, f.y);
  std::vector<std::uint32_t> rows(f.rows);
  std::iota(rows.begin(), rows.end(), 0u);
  for (auto _ : state) benchmark::DoNotOptimize(gbdt::find_best_split(rows, gh, bins, 1.0));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_FindBestSplit)->Arg(1 << 14)->Arg(1 << 18)->Unit(benchmark::kMillisecond);

void BM_GrowTree(benchmark::State& state) {
  const auto f = make(1 << 16, 9);
  const auto bins = gbdt::bin_features(f.view());
  const std::vector<double> margins(f.rows, 0.0);
  const auto gh = gbdt::logistic_grad_hess(margins, f.y);
  std::vector<std::uint32_t> rows(f.rows);
  std::iota(rows.begin(), rows.end(), 0u);
  const int leaves = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gbdt::grow_tree_leafwise(rows, gh, bins, leaves, 1.0));
}
BENCHMARK(BM_GrowTree)->Arg(8)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_FitGbdt(benchmark::State& state) {
  const auto f = make(1 << 16, 9);
  gbdt::GBDTParams p;
  p.n_trees = 20;
  p.max_leaves = 32;
  p.threads = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(gbdt::fit_gbdt(f.view(), f.y, p));
}
BENCHMARK(BM_FitGbdt)->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond)->UseRealTime();

void BM_PredictGbdt(benchmark::State& state) {
  const auto f = make(1 << 16, 9);
  gbdt::GBDTParams p;
  p.n_trees = 100;
  p.max_leaves = 32;
  const auto m = gbdt::fit_gbdt(f.view(), f.y, p);
  for (auto _ : state) benchmark::DoNotOptimize(m.decision_function(f.view()));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.rows));
}
BENCHMARK(BM_PredictGbdt)->Unit(benchmark::kMillisecond);

}  // namespace
