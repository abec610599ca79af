#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "floodpix/raster_io.hpp"

namespace floodpix::metrics {

/// Water is the positive class.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend ConfusionCounts operator+(ConfusionCounts a, const ConfusionCounts& b) { return a += b; }
  bool operator==(const ConfusionCounts&) const = default;

  nlohmann::json to_json() const;
  static ConfusionCounts from_json(const nlohmann::json& j);
};

inline ConfusionCounts merge(const ConfusionCounts& a, const ConfusionCounts& b) { return a + b; }

/// Counts over pixels whose truth is not NoData. Predictions must be Dry or
/// Water at those pixels.
ConfusionCounts confusion(std::span<const io::Label> predicted, const io::LabelGrid& truth);

/// Stable column order of every report.
enum class Metric { Acc = 0, IoU, Precision, Recall, F1, RecallDry };
inline constexpr std::size_t kMetricCount = 6;
inline constexpr std::array<Metric, kMetricCount> kAllMetrics = {Metric::Acc,    Metric::IoU, Metric::Precision,
                                                                  Metric::Recall, Metric::F1,  Metric::RecallDry};
std::string_view metric_name(Metric m);
Metric parse_metric(std::string_view name);

/// How a ratio with a zero denominator is resolved.
enum class ZeroDivision {
  One,        // vacuously perfect: no positives exist and none were predicted
  Undefined,  // NaN; per-tile means skip it
};
std::string_view zero_division_name(ZeroDivision policy);
/// "one" or "undefined".
ZeroDivision parse_zero_division(std::string_view name);

struct MetricSet {
  std::array<double, kMetricCount> values{};

  double operator[](Metric m) const { return values[static_cast<std::size_t>(m)]; }
  double& operator[](Metric m) { return values[static_cast<std::size_t>(m)]; }
  double acc() const { return (*this)[Metric::Acc]; }
  double iou() const { return (*this)[Metric::IoU]; }
  double precision() const { return (*this)[Metric::Precision]; }
  double recall() const { return (*this)[Metric::Recall]; }
  double f1() const { return (*this)[Metric::F1]; }
  double recall_dry() const { return (*this)[Metric::RecallDry]; }
  double omission() const { return 1.0 - recall(); }
  double commission() const { return 1.0 - recall_dry(); }

  nlohmann::json to_json() const;
};

/// Throws InvalidArgument for all-zero counts.
MetricSet metric_set(const ConfusionCounts& c, ZeroDivision policy = ZeroDivision::One);

struct TileCounts {
  std::string tile_id;
  std::string region;
  ConfusionCounts counts;
};

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population form
  std::size_t n = 0;
};

struct MetricReport {
  std::array<MeanStd, kMetricCount> mean_based{};
  MetricSet total;
  ConfusionCounts pooled;
  std::size_t tiles = 0;

  const MeanStd& mean(Metric m) const { return mean_based[static_cast<std::size_t>(m)]; }
  nlohmann::json to_json() const;
};

/// Mean-based metrics average per-tile metric_set values; total metrics come
/// from the merged counts. Tiles without any valid pixel are skipped in the
/// mean. Throws InvalidArgument on empty input.
MetricReport aggregate(std::span<const TileCounts> tiles, ZeroDivision policy = ZeroDivision::One);

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0;
  double min = 0.0;
  double max = 0.0;
  double median = 0.0;
};

/// Population mean/std, extremes and median (midpoint for even counts).
SummaryStats summarize(std::span<const double> values);

struct RegionEntry {
  std::string region;
  ConfusionCounts counts;
  MetricSet metrics;
  std::uint64_t water_pixels = 0;  // truth water = tp + fn
};

struct RegionwiseReport {
  std::vector<RegionEntry> regions;  // sorted by region name
  std::array<SummaryStats, kMetricCount> summary{};

  const SummaryStats& stats(Metric m) const { return summary[static_cast<std::size_t>(m)]; }
  nlohmann::json to_json() const;
};

RegionwiseReport regionwise(std::span<const TileCounts> tiles, ZeroDivision policy = ZeroDivision::One);

enum class CorrelationKind { Pearson, Spearman };

struct CorrelationResult {
  double coefficient = 0.0;
  double p_value = 1.0;
};

/// Midranks, 1-based.
std::vector<double> midranks(std::span<const double> values);

/// Two-sided test via the t distribution with n - 2 degrees of freedom.
/// Throws InvalidArgument for fewer than 3 points or zero variance.
CorrelationResult correlation_test(std::span<const double> x, std::span<const double> y, CorrelationKind kind);

// CSV writers: 6 decimals, columns in kAllMetrics order.
std::string report_csv_header();
std::string report_csv_row(const MetricReport& report);
std::string regionwise_csv(const RegionwiseReport& report);

}  // namespace floodpix::metrics
