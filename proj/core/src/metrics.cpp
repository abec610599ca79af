#include "floodpix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include <boost/math/distributions/students_t.hpp>

#include "floodpix/error.hpp"

namespace floodpix::metrics {
namespace {

constexpr std::array<std::string_view, kMetricCount> kNames = {"acc", "iou", "precision", "recall", "f1", "recall_dry"};

double ratio(std::uint64_t num, std::uint64_t den, ZeroDivision policy) {
  if (den == 0) return policy == ZeroDivision::One ? 1.0 : std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(num) / static_cast<double>(den);
}

std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

}  // namespace

nlohmann::json ConfusionCounts::to_json() const { return {{"tp", tp}, {"fp", fp}, {"tn", tn}, {"fn", fn}}; }

ConfusionCounts ConfusionCounts::from_json(const nlohmann::json& j) {
  return {j.at("tp").get<std::uint64_t>(), j.at("fp").get<std::uint64_t>(), j.at("tn").get<std::uint64_t>(),
          j.at("fn").get<std::uint64_t>()};
}

ConfusionCounts confusion(std::span<const io::Label> predicted, const io::LabelGrid& truth) {
  if (predicted.size() != truth.size()) {
    throw InvalidArgument("prediction has " + std::to_string(predicted.size()) + " pixels, truth has " +
                          std::to_string(truth.size()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const io::Label t = truth[i];
    if (t == io::Label::NoData) continue;
    const io::Label p = predicted[i];
    if (p == io::Label::NoData) throw InvalidArgument("prediction is NoData at a labelled pixel");
    const bool pw = p == io::Label::Water;
    if (t == io::Label::Water) {
      pw ? ++c.tp : ++c.fn;
    } else {
      pw ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

std::string_view metric_name(Metric m) { return kNames[static_cast<std::size_t>(m)]; }

Metric parse_metric(std::string_view name) {
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (kNames[i] == name) return static_cast<Metric>(i);
  }
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

std::string_view zero_division_name(ZeroDivision policy) {
  return policy == ZeroDivision::One ? "one" : "undefined";
}

ZeroDivision parse_zero_division(std::string_view name) {
  if (name == "one") return ZeroDivision::One;
  if (name == "undefined") return ZeroDivision::Undefined;
  throw InvalidArgument("zero_division must be 'one' or 'undefined', got '" + std::string(name) + "'");
}

nlohmann::json MetricSet::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (Metric m : kAllMetrics) j[std::string(metric_name(m))] = number_or_null((*this)[m]);
  return j;
}

MetricSet metric_set(const ConfusionCounts& c, ZeroDivision policy) {
  if (c.total() == 0) throw InvalidArgument("metric_set needs at least one valid pixel");
  MetricSet s;
  s[Metric::Acc] = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  s[Metric::IoU] = ratio(c.tp, c.tp + c.fp + c.fn, policy);
  s[Metric::Precision] = ratio(c.tp, c.tp + c.fp, policy);
  s[Metric::Recall] = ratio(c.tp, c.tp + c.fn, policy);
  s[Metric::F1] = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn, policy);
  s[Metric::RecallDry] = ratio(c.tn, c.tn + c.fp, policy);
  return s;
}

nlohmann::json MetricReport::to_json() const {
  nlohmann::json mean = nlohmann::json::object();
  nlohmann::json stdev = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    mean[std::string(metric_name(m))] = number_or_null(this->mean(m).mean);
    stdev[std::string(metric_name(m))] = number_or_null(this->mean(m).std);
  }
  return {{"tiles", tiles}, {"mean", mean}, {"std", stdev}, {"total", total.to_json()}, {"pooled_counts", pooled.to_json()}};
}

MetricReport aggregate(std::span<const TileCounts> tiles, ZeroDivision policy) {
  if (tiles.empty()) throw InvalidArgument("aggregate needs at least one tile");
  MetricReport r;
  std::array<std::vector<double>, kMetricCount> per_tile;
  for (const auto& t : tiles) {
    r.pooled += t.counts;
    if (t.counts.total() == 0) continue;
    const MetricSet s = metric_set(t.counts, policy);
    for (std::size_t k = 0; k < kMetricCount; ++k) {
      if (!std::isnan(s.values[k])) per_tile[k].push_back(s.values[k]);
    }
  }
  r.tiles = tiles.size();
  r.total = metric_set(r.pooled, policy);
  for (std::size_t k = 0; k < kMetricCount; ++k) {
    const auto& v = per_tile[k];
    MeanStd& ms = r.mean_based[k];
    ms.n = v.size();
    if (v.empty()) {
      ms.mean = ms.std = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    ms.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(ss / static_cast<double>(v.size()));
  }
  return r;
}

SummaryStats summarize(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("summarize needs at least one value");
  SummaryStats s;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : sorted) ss += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n));
  s.min = sorted.front();
  s.max = sorted.back();
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  return s;
}

nlohmann::json RegionwiseReport::to_json() const {
  nlohmann::json regions_json = nlohmann::json::array();
  for (const auto& r : regions) {
    regions_json.push_back({{"region", r.region},
                            {"water_pixels", r.water_pixels},
                            {"counts", r.counts.to_json()},
                            {"metrics", r.metrics.to_json()}});
  }
  nlohmann::json summary_json = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const auto& s = stats(m);
    summary_json[std::string(metric_name(m))] = {{"mean", number_or_null(s.mean)},
                                                  {"std", number_or_null(s.std)},
                                                  {"min", number_or_null(s.min)},
                                                  {"max", number_or_null(s.max)},
                                                  {"median", number_or_null(s.median)}};
  }
  return {{"regions", regions_json}, {"summary", summary_json}};
}

RegionwiseReport regionwise(std::span<const TileCounts> tiles, ZeroDivision policy) {
  if (tiles.empty()) throw InvalidArgument("regionwise needs at least one tile");
  std::map<std::string, ConfusionCounts> merged;
  for (const auto& t : tiles) merged[t.region] += t.counts;
  RegionwiseReport r;
  for (const auto& [region, counts] : merged) {
    if (counts.total() == 0) continue;
    r.regions.push_back({region, counts, metric_set(counts, policy), counts.tp + counts.fn});
  }
  if (r.regions.empty()) throw InvalidArgument("regionwise needs at least one region with valid pixels");
  for (std::size_t k = 0; k < kMetricCount; ++k) {
    std::vector<double> v;
    for (const auto& e : r.regions) {
      if (!std::isnan(e.metrics.values[k])) v.push_back(e.metrics.values[k]);
    }
    if (v.empty()) {
      const double nan = std::numeric_limits<double>::quiet_NaN();
      r.summary[k] = {nan, nan, nan, nan, nan};
    } else {
      r.summary[k] = summarize(v);
    }
  }
  return r;
}

std::vector<double> midranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

namespace {

double pearson(std::span<const double> x, std::span<const double> y) {
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) throw InvalidArgument("correlation undefined for zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

CorrelationResult correlation_test(std::span<const double> x, std::span<const double> y, CorrelationKind kind) {
  if (x.size() != y.size()) throw InvalidArgument("correlation inputs differ in length");
  if (x.size() < 3) throw InvalidArgument("correlation test needs at least 3 points");
  CorrelationResult r;
  if (kind == CorrelationKind::Pearson) {
    r.coefficient = pearson(x, y);
  } else {
    const auto rx = midranks(x);
    const auto ry = midranks(y);
    r.coefficient = pearson(rx, ry);
  }
  const double dof = static_cast<double>(x.size()) - 2.0;
  const double one_minus = 1.0 - r.coefficient * r.coefficient;
  if (one_minus <= 0.0) {
    r.p_value = 0.0;
    return r;
  }
  const double t = r.coefficient * std::sqrt(dof / one_minus);
  const boost::math::students_t dist(dof);
  r.p_value = std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(t))));
  return r;
}

std::string report_csv_header() {
  std::string h = "tiles";
  for (const char* q : {"mean", "std", "total"}) {
    for (Metric m : kAllMetrics) h += std::string(",") + q + "_" + std::string(metric_name(m));
  }
  return h;
}

std::string report_csv_row(const MetricReport& r) {
  std::string row = std::to_string(r.tiles);
  for (Metric m : kAllMetrics) row += "," + fmt6(r.mean(m).mean);
  for (Metric m : kAllMetrics) row += "," + fmt6(r.mean(m).std);
  for (Metric m : kAllMetrics) row += "," + fmt6(r.total[m]);
  return row;
}

std::string regionwise_csv(const RegionwiseReport& r) {
  std::string out = "region,water_pixels";
  for (Metric m : kAllMetrics) out += "," + std::string(metric_name(m));
  out += "\n";
  for (const auto& e : r.regions) {
    out += e.region + "," + std::to_string(e.water_pixels);
    for (Metric m : kAllMetrics) out += "," + fmt6(e.metrics[m]);
    out += "\n";
  }
  for (const char* stat : {"mean", "std", "min", "max", "median"}) {
    out += std::string("summary_") + stat + ",";
    for (Metric m : kAllMetrics) {
      const auto& s = r.stats(m);
      const double v = std::string_view(stat) == "mean"   ? s.mean
                       : std::string_view(stat) == "std"  ? s.std
                       : std::string_view(stat) == "min"  ? s.min
                       : std::string_view(stat) == "max"  ? s.max
                                                          : s.median;
      out += "," + fmt6(v);
    }
    out += "\n";
  }
  return out;
}

}  // namespace floodpix::metrics
