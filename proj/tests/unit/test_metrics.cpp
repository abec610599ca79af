#include <algorithm>
#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "floodpix/error.hpp"
#include "floodpix/metrics.hpp"
#include "floodpix/rng.hpp"

namespace floodpix::metrics {
namespace {

using io::Label;

ConfusionCounts counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
  ConfusionCounts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  c.tn = tn;
  return c;
}

ConfusionCounts random_counts(Rng& rng) {
  ConfusionCounts c;
  do {
    c.tp = rng.below(1000);
    c.fp = rng.below(1000);
    c.fn = rng.below(1000);
    c.tn = rng.below(100000);
  } while (c.total() == 0);
  return c;
}

TEST(Confusion, PerfectPrediction) {
  io::LabelGrid truth(100, 10, Label::Dry);
  for (int i = 0; i < 100; ++i) truth.values[static_cast<std::size_t>(i)] = Label::Water;
  const auto c = confusion(truth.values, truth);
  EXPECT_EQ(c, counts(100, 0, 0, 900));
}

TEST(Confusion, AllDryAgainstTenWater) {
  io::LabelGrid truth(1000, 1, Label::Dry);
  for (int i = 0; i < 10; ++i) truth.values[static_cast<std::size_t>(i * 7)] = Label::Water;
  const std::vector<Label> pred(1000, Label::Dry);
  EXPECT_EQ(confusion(pred, truth), counts(0, 0, 10, 990));
}

TEST(Confusion, NoDataIsSkipped) {
  io::LabelGrid truth(20, 20, Label::Dry);
  for (int i = 0; i < 5; ++i) truth.values[static_cast<std::size_t>(3 * i + 1)] = Label::NoData;
  std::vector<Label> pred(400, Label::Water);
  EXPECT_EQ(confusion(pred, truth).total(), 395u);
}

TEST(MetricSet, HandArithmetic) {
  const auto m = metric_set(counts(50, 10, 20, 920));
  EXPECT_NEAR(m.acc(), 0.97, 1e-12);
  EXPECT_NEAR(m.iou(), 0.625, 1e-12);
  EXPECT_NEAR(m.precision(), 50.0 / 60.0, 1e-12);
  EXPECT_NEAR(m.recall(), 50.0 / 70.0, 1e-12);
  EXPECT_NEAR(m.f1(), 100.0 / 130.0, 1e-12);
  EXPECT_NEAR(m.recall_dry(), 920.0 / 930.0, 1e-12);
}

TEST(MetricSet, PerfectIsOne) {
  const auto m = metric_set(counts(30, 0, 0, 70));
  for (Metric k : kAllMetrics) EXPECT_EQ(m[k], 1.0) << metric_name(k);
}

TEST(MetricSet, AllDryOnStudyClassShares) {
  // Dry 77.22 %, water 9.18 % of all pixels; NoData is not counted.
  const auto m = metric_set(counts(0, 0, 918, 7722));
  EXPECT_NEAR(m.acc(), 0.894, 1e-3);
  EXPECT_EQ(m.recall(), 0.0);
}

TEST(MetricSet, PrecisionRecallToF1AndIoU) {
  const double p = 0.9577, r = 0.9103;
  // tp fixed, fp and fn chosen to realize P and R.
  const double tp = 1e6;
  const auto c = counts(static_cast<std::uint64_t>(tp), static_cast<std::uint64_t>(std::llround(tp / p - tp)),
                        static_cast<std::uint64_t>(std::llround(tp / r - tp)), 10000000);
  const auto m = metric_set(c);
  EXPECT_NEAR(m.f1(), 0.9334, 5e-4);
  EXPECT_NEAR(m.iou(), 0.8751, 5e-4);
  EXPECT_NEAR(m.iou(), 1.0 / (1.0 / p + 1.0 / r - 1.0), 1e-5);
}

TEST(MetricSet, ZeroDenominators) {
  const auto no_water = counts(0, 0, 0, 50);
  EXPECT_EQ(metric_set(no_water).iou(), 1.0);
  EXPECT_TRUE(std::isnan(metric_set(no_water, ZeroDivision::Undefined).iou()));
  EXPECT_THROW(metric_set(ConfusionCounts{}), InvalidArgument);
}

TEST(MetricSet, IdentitiesOnRandomCounts) {
  Rng rng(11);
  for (int i = 0; i < 10000; ++i) {
    const auto m = metric_set(random_counts(rng));
    EXPECT_NEAR(m.f1(), 2.0 * m.iou() / (1.0 + m.iou()), 1e-12);
    EXPECT_EQ(m.omission() + m.recall(), 1.0);
    EXPECT_EQ(m.commission() + m.recall_dry(), 1.0);
  }
}

TEST(MetricSet, MergeOrderDoesNotMatter) {
  Rng rng(12);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_counts(rng), b = random_counts(rng), c = random_counts(rng);
    EXPECT_EQ(merge(merge(a, b), c), merge(a, merge(b, c)));
    EXPECT_EQ(metric_set(merge(a, b)).values, metric_set(merge(b, a)).values);
  }
}

TEST(MetricSet, ScalingCountsKeepsMetrics) {
  const auto c = counts(3, 4, 5, 60);
  const auto m = metric_set(c);
  const auto k = metric_set(c + c + c);
  for (Metric x : kAllMetrics) EXPECT_NEAR(m[x], k[x], 1e-15);
}

TEST(Aggregate, MeanDiffersFromTotal) {
  const std::vector<TileCounts> tiles = {{"A", "R", counts(1, 0, 1, 98)}, {"B", "R", counts(100, 0, 0, 0)}};
  const auto r = aggregate(tiles);
  EXPECT_NEAR(r.mean(Metric::IoU).mean, 0.75, 1e-12);
  EXPECT_NEAR(r.total.iou(), 101.0 / 102.0, 1e-12);
  EXPECT_NEAR(r.mean(Metric::IoU).std, 0.25, 1e-12);
}

TEST(Aggregate, SingleTileMeanEqualsTotal) {
  const std::vector<TileCounts> tiles = {{"A", "R", counts(7, 2, 3, 40)}};
  const auto r = aggregate(tiles);
  for (Metric m : kAllMetrics) {
    EXPECT_NEAR(r.mean(m).mean, r.total[m], 1e-15);
    EXPECT_EQ(r.mean(m).std, 0.0);
  }
}

TEST(Aggregate, DuplicatedTileListIsInvariant) {
  std::vector<TileCounts> tiles = {{"A", "R", counts(1, 2, 3, 40)}, {"B", "S", counts(9, 1, 0, 20)}};
  const auto once = aggregate(tiles);
  auto twice_list = tiles;
  twice_list.insert(twice_list.end(), tiles.begin(), tiles.end());
  const auto twice = aggregate(twice_list);
  for (Metric m : kAllMetrics) {
    EXPECT_NEAR(once.total[m], twice.total[m], 1e-15);
    EXPECT_NEAR(once.mean(m).mean, twice.mean(m).mean, 1e-15);
    EXPECT_NEAR(once.mean(m).std, twice.mean(m).std, 1e-15);
  }
}

TEST(Aggregate, EmptyThrows) { EXPECT_THROW(aggregate({}), InvalidArgument); }

TEST(Regionwise, TwoRegions) {
  const std::vector<TileCounts> tiles = {{"x1", "X", counts(1, 1, 0, 5)},
                                         {"x2", "X", counts(1, 0, 0, 5)},  // X pooled: 2 / 3
                                         {"y1", "Y", counts(4, 0, 0, 1)}};
  const auto r = regionwise(tiles);
  ASSERT_EQ(r.regions.size(), 2u);
  EXPECT_EQ(r.regions[0].region, "X");
  EXPECT_NEAR(r.regions[0].metrics.iou(), 2.0 / 3.0, 1e-12);
  EXPECT_EQ(r.regions[0].water_pixels, 2u);
}

TEST(Regionwise, SummaryOfHalfAndOne) {
  const std::vector<TileCounts> tiles = {{"x", "X", counts(1, 1, 0, 2)}, {"y", "Y", counts(2, 0, 0, 2)}};
  const auto s = regionwise(tiles).stats(Metric::IoU);
  EXPECT_NEAR(s.mean, 0.75, 1e-12);
  EXPECT_NEAR(s.min, 0.5, 1e-12);
  EXPECT_NEAR(s.max, 1.0, 1e-12);
  EXPECT_NEAR(s.median, 0.75, 1e-12);
}

TEST(Regionwise, OneRegion) {
  const std::vector<TileCounts> tiles = {{"x", "X", counts(3, 1, 2, 9)}};
  const auto s = regionwise(tiles).stats(Metric::IoU);
  EXPECT_EQ(s.mean, s.median);
  EXPECT_EQ(s.min, s.max);
  EXPECT_EQ(s.std, 0.0);
}

TEST(Regionwise, DuplicatingARegionKeepsTheRegionMean) {
  std::vector<TileCounts> tiles = {{"a1", "A", counts(50, 25, 25, 900)}, {"b1", "B", counts(90, 5, 5, 900)}};
  const auto before = regionwise(tiles).stats(Metric::IoU).mean;
  tiles.push_back({"a2", "A", counts(50, 25, 25, 900)});
  EXPECT_EQ(regionwise(tiles).stats(Metric::IoU).mean, before);
}

TEST(Summarize, OddAndEvenMedians) {
  const std::vector<double> odd = {3, 1, 2};
  const std::vector<double> even = {4, 1, 3, 2};
  EXPECT_EQ(summarize(odd).median, 2.0);
  EXPECT_EQ(summarize(even).median, 2.5);
  EXPECT_NEAR(summarize(even).std, std::sqrt(1.25), 1e-12);
}

TEST(Midranks, Ties) {
  const std::vector<double> v = {10, 20, 20, 5};
  EXPECT_EQ(midranks(v), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Correlation, PerfectLine) {
  const std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y;
  for (double v : x) y.push_back(2 * v + 1);
  const auto r = correlation_test(x, y, CorrelationKind::Pearson);
  EXPECT_NEAR(r.coefficient, 1.0, 1e-12);
  EXPECT_LT(r.p_value, 0.05);
}

TEST(Correlation, SpearmanOfMonotoneMap) {
  const std::vector<double> x = {-2, -1, 0.5, 1, 3, 4};
  std::vector<double> y;
  for (double v : x) y.push_back(v * v * v);
  EXPECT_NEAR(correlation_test(x, y, CorrelationKind::Spearman).coefficient, 1.0, 1e-12);
}

TEST(Correlation, SpearmanIsPearsonOfMidranks) {
  const std::vector<double> x = {3, 1, 4, 1, 5, 9, 2, 6};
  const std::vector<double> y = {2, 7, 1, 8, 2, 8, 1, 8};
  const auto rx = midranks(x), ry = midranks(y);
  EXPECT_NEAR(correlation_test(x, y, CorrelationKind::Spearman).coefficient,
              correlation_test(rx, ry, CorrelationKind::Pearson).coefficient, 1e-12);
}

TEST(Correlation, Degenerate) {
  const std::vector<double> two = {1, 2};
  const std::vector<double> flat = {1, 1, 1};
  const std::vector<double> ramp = {1, 2, 3};
  EXPECT_THROW(correlation_test(two, two, CorrelationKind::Pearson), InvalidArgument);
  EXPECT_THROW(correlation_test(flat, ramp, CorrelationKind::Pearson), InvalidArgument);
}

// Exhaustive two-sided permutation p-value over all 8! orderings of y.
double permutation_p_value(const std::vector<double>& x, std::vector<double> y, CorrelationKind kind) {
  const double observed = std::abs(correlation_test(x, y, kind).coefficient);
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t extreme = 0, total = 0;
  std::vector<double> permuted(y.size());
  do {
    for (std::size_t i = 0; i < order.size(); ++i) permuted[i] = y[order[i]];
    if (std::abs(correlation_test(x, permuted, kind).coefficient) >= observed - 1e-12) ++extreme;
    ++total;
  } while (std::next_permutation(order.begin(), order.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

TEST(Correlation, PValueAgreesWithPermutationOracle) {
  const std::vector<double> water = {120, 340, 560, 800, 1500, 2300, 4100, 9000};
  const std::vector<double> iou = {0.62, 0.55, 0.71, 0.66, 0.80, 0.74, 0.85, 0.83};
  for (auto kind : {CorrelationKind::Pearson, CorrelationKind::Spearman}) {
    const double approx = correlation_test(water, iou, kind).p_value;
    EXPECT_NEAR(approx, permutation_p_value(water, iou, kind), 0.02);
  }
}

TEST(Reports, CsvHasSixDecimals) {
  const std::vector<TileCounts> tiles = {{"A", "R", counts(1, 2, 3, 4)}};
  const auto row = report_csv_row(aggregate(tiles));
  const auto header = report_csv_header();
  EXPECT_NE(row.find("0.166667"), std::string::npos);  // IoU 1/6
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), std::count(row.begin(), row.end(), ','));
}

}  // namespace
}  // namespace floodpix::metrics
