#include <benchmark/benchmark.h>

#include "floodpix/features.hpp"
#include "floodpix/rng.hpp"

namespace {

using namespace floodpix;

io::Tile random_tile(int size) {
  Rng rng(2);
  io::Tile t;
  t.tile_id = "Bench_1";
  t.region = "Bench";
  t.width = t.height = size;
  for (auto b : io::optical_bands()) {
    io::FloatGrid g(size, size);
    for (auto& v : g.values) v = static_cast<float>(rng.uniform(0.0, 4000.0));
    t.bands[b] = std::move(g);
  }
  for (auto b : io::sar_bands()) {
    io::FloatGrid g(size, size);
    for (auto& v : g.values) v = static_cast<float>(rng.uniform(-28.0, -2.0));
    t.bands[b] = std::move(g);
  }
  t.valid_mask.assign(t.pixel_count(), 1);
  return t;
}

void BM_TileFeatures(benchmark::State& state, const char* space, bool speckle) {
  const auto tile = random_tile(512);
  const auto spec = features::parse_feature_space(space);
  features::FeatureOptions opts;
  opts.speckle_filter = speckle;
  for (auto _ : state) benchmark::DoNotOptimize(features::compute_tile_features(spec, tile, opts));
  state.SetItemsProcessed(state.iterations() * 512 * 512);
}
BENCHMARK_CAPTURE(BM_TileFeatures, sar, "SAR", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TileFeatures, headline, "SAR_HSV(O3)+cAWEI+cNDWI", false)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_TileFeatures, headline_speckle, "SAR_HSV(O3)+cAWEI+cNDWI", true)
    ->Unit(benchmark::kMillisecond);

void BM_FeatureMatrix(benchmark::State& state) {
  std::vector<std::pair<io::Tile, io::LabelGrid>> tiles;
  for (int i = 0; i < 4; ++i) {
    auto t = random_tile(256);
    io::LabelGrid labels(256, 256, io::Label::Dry);
    for (std::size_t p = 0; p < labels.size(); p += 7) labels[p] = io::Label::Water;
    tiles.emplace_back(std::move(t), std::move(labels));
  }
  const auto spec = features::parse_feature_space("SAR_OPT");
  for (auto _ : state) benchmark::DoNotOptimize(features::build_feature_matrix(spec, tiles));
  state.SetItemsProcessed(state.iterations() * 4 * 256 * 256);
}
BENCHMARK(BM_FeatureMatrix)->Unit(benchmark::kMillisecond);

void BM_LeeSigma(benchmark::State& state) {
  Rng rng(3);
  io::FloatGrid g(512, 512);
  for (auto& v : g.values) v = static_cast<float>(-2.0 * std::log(rng.uniform() + 1e-12) * 0.05);
  features::LeeSigmaParams p;
  p.window = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(features::lee_sigma_filter(g, p));
  state.SetItemsProcessed(state.iterations() * 512 * 512);
}
BENCHMARK(BM_LeeSigma)->Arg(5)->Arg(7)->Arg(9)->Unit(benchmark::kMillisecond);

void BM_HsvRoundTrip(benchmark::State& state) {
  Rng rng(4);
  std::vector<std::array<double, 3>> rgb(4096);
  for (auto& c : rgb) c = {rng.uniform(), rng.uniform(), rng.uniform()};
  for (auto _ : state) {
    for (const auto& c : rgb) benchmark::DoNotOptimize(features::hsv_to_rgb(features::rgb_to_hsv(c[0], c[1], c[2])));
  }
  state.SetItemsProcessed(state.iterations() * 4096);
}
BENCHMARK(BM_HsvRoundTrip);

}  // namespace
