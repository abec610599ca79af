// Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
// criterion fails. Criterion 10 needs the real dataset and only runs when
// --sen1floods11-root is given.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "floodpix/classifiers.hpp"
#include "floodpix/features.hpp"
#include "floodpix/gbdt.hpp"
#include "floodpix/harness.hpp"
#include "floodpix/metrics.hpp"
#include "floodpix/rng.hpp"
#include "floodpix/synthetic.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace floodpix;
using io::Label;
using metrics::ConfusionCounts;
using metrics::Metric;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

constexpr std::size_t idx(Metric m) { return static_cast<std::size_t>(m); }

// Row-major float matrix with labels.
struct Data {
  std::size_t rows = 0, cols = 0;
  std::vector<float> x;
  std::vector<Label> y;

  FeatureView view() const { return {x, rows, cols}; }
  void add(std::initializer_list<double> v, Label l) {
    for (double d : v) x.push_back(static_cast<float>(d));
    y.push_back(l);
    ++rows;
  }
};

double accuracy(const std::vector<Label>& a, const std::vector<Label>& b) {
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return static_cast<double>(same) / static_cast<double>(a.size());
}

// ------------------------------------------------------------------ 1

Outcome metric_identities() {
  Rng rng(101);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    ConfusionCounts c;
    // Every fourth draw zeroes a cell so degenerate ratios are covered.
    auto draw = [&] { return rng.below(4) == 0 ? 0 : rng.below(1000000); };
    c.tp = draw();
    c.fp = draw();
    c.fn = draw();
    c.tn = draw();
    if (c.total() == 0) c.tn = 1;
    const auto m = metrics::metric_set(c);
    worst = std::max({worst, std::abs(m.f1() - 2 * m.iou() / (1 + m.iou())),
                      std::abs(m.omission() - (1 - m.recall())), std::abs(m.commission() - (1 - m.recall_dry()))});
  }
  return {worst <= 1e-12, fmt("worst deviation %.3g over 10^4 counts", worst)};
}

// ------------------------------------------------------------------ 2

Outcome paper_consistency() {
  // Counts reproducing precision 0.9577 and recall 0.9103.
  ConfusionCounts c;
  c.tp = 1000000000;
  c.fp = static_cast<std::uint64_t>(std::llround(1e9 * (1 / 0.9577 - 1)));
  c.fn = static_cast<std::uint64_t>(std::llround(1e9 * (1 / 0.9103 - 1)));
  c.tn = 20000000000;
  const auto m = metrics::metric_set(c);

  // All-dry classifier on the labelled share of the pixels (77.22% dry, 9.18% water).
  ConfusionCounts dry;
  dry.tn = 7722;
  dry.fn = 918;
  const double acc = metrics::metric_set(dry).acc();

  const bool ok = std::abs(m.f1() - 0.9334) <= 5e-4 && std::abs(m.iou() - 0.8751) <= 5e-4 &&
                  std::abs(acc - 0.894) <= 1e-3;
  return {ok, fmt("F1 %.4f, IoU %.4f, all-dry accuracy %.5f", m.f1(), m.iou(), acc)};
}

// ------------------------------------------------------------------ 3

Outcome feature_spaces() {
  // Dimensionality groups of the leaf-count table: {min, max}.
  const std::map<std::string, std::pair<int, int>> groups = {
      {"SAR", {2, 2}},          {"cNDWI", {2, 2}},          {"cAWEI", {2, 2}},
      {"O3", {3, 3}},           {"RGB", {3, 3}},            {"HSV(RGB)", {3, 3}},
      {"HSV(O3)", {3, 3}},      {"SAR_cNDWI", {4, 4}},      {"SAR_cAWEI", {4, 4}},
      {"RGBN", {4, 4}},         {"cAWEI+cNDWI", {4, 4}},    {"SAR_O3", {5, 5}},
      {"SAR_RGB", {5, 5}},      {"SAR_HSV(RGB)", {5, 5}},   {"SAR_HSV(O3)", {5, 5}},
      {"SAR_RGBN", {6, 7}},     {"SAR_cAWEI+cNDWI", {6, 7}}, {"HSV(O3)+cAWEI+cNDWI", {6, 7}},
      {"OPT", {8, 1000}},       {"S2", {8, 1000}},          {"SAR_OPT", {8, 1000}},
      {"SAR_S2", {8, 1000}},    {"SAR_HSV(O3)+cAWEI+cNDWI", {8, 1000}},
  };
  std::size_t parsed = 0, grouped = 0;
  std::string bad;
  for (const auto& [name, range] : groups) {
    try {
      const int d = features::parse_feature_space(name).dimensionality();
      ++parsed;
      if (d >= range.first && d <= range.second) {
        ++grouped;
      } else {
        bad += " " + name;
      }
    } catch (const std::exception& e) {
      bad += " " + name + "(" + e.what() + ")";
    }
  }
  std::size_t listed = 0;
  for (auto name : features::canonical_feature_spaces()) listed += groups.contains(std::string(name));

  Rng rng(103);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const double r = rng.uniform(), g = rng.uniform(), b = rng.uniform();
    const auto back = features::hsv_to_rgb(features::rgb_to_hsv(r, g, b));
    worst = std::max({worst, std::abs(back[0] - r), std::abs(back[1] - g), std::abs(back[2] - b)});
  }
  const bool ok = parsed == 23 && grouped == 23 && listed == 23 &&
                  features::canonical_feature_spaces().size() == 23 && worst < 1e-6;
  return {ok, fmt("%zu/23 parse, %zu/23 in their group, HSV round trip %.3g%s", parsed, grouped, worst,
                  bad.empty() ? "" : (", mismatched:" + bad).c_str())};
}

// ------------------------------------------------------------------ 4

Outcome split_oracle() {
  Rng rng(104);
  int agree = 0;
  double worst_gain = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(255);
    const std::size_t f = 1 + rng.below(2);
    const std::size_t levels = 2 + rng.below(31);  // at most 32 bins
    Data d;
    d.cols = f;
    std::vector<std::vector<double>> columns(f);
    std::vector<double> margins;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        const double v = static_cast<double>(rng.below(levels)) * 0.5 - 3.0;
        d.x.push_back(static_cast<float>(v));
        columns[j].push_back(v);
      }
      d.y.push_back(rng.uniform() < 0.35 ? Label::Water : Label::Dry);
      margins.push_back(rng.uniform(-3, 3));
      ++d.rows;
    }
    const double lambda = rng.uniform(0.0, 3.0);
    const auto gh = gbdt::logistic_grad_hess(margins, d.y);
    const auto bins = gbdt::bin_features(d.view(), 32);
    std::vector<std::uint32_t> rows(n);
    std::iota(rows.begin(), rows.end(), 0u);
    const auto got = gbdt::find_best_split(rows, gh, bins, lambda);
    const auto want = oracle::best_raw_split(columns, gh.grad, gh.hess, lambda);
    if (!got && !want) {
      ++agree;
      continue;
    }
    if (!got || !want) continue;
    // The oracle threshold is a midpoint between distinct values; map it to
    // the bin holding every value at or below it.
    const auto want_bin = gbdt::bin_of(bins.thresholds[want->feature], want->threshold);
    const double diff = std::abs(got->gain - want->gain);
    worst_gain = std::max(worst_gain, diff);
    if (got->feature == want->feature && got->bin == want_bin && diff <= 1e-9) ++agree;
  }
  return {agree == 200, fmt("%d/200 fixtures agree, worst gain difference %.3g", agree, worst_gain)};
}

// ------------------------------------------------------------------ 5

Data xor_blobs(std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  d.cols = 2;
  const int sizes[4] = {120, 80, 100, 140};
  for (int q = 0; q < 4; ++q) {
    const double cx = q & 1 ? 1.0 : -1.0, cy = q & 2 ? 1.0 : -1.0;
    for (int i = 0; i < sizes[q]; ++i) {
      d.add({cx + 0.2 * rng.normal(), cy + 0.2 * rng.normal()}, (cx > 0) != (cy > 0) ? Label::Water : Label::Dry);
    }
  }
  return d;
}

// Four point clusters in XOR arrangement.
Data xor_clusters() {
  Data d;
  d.cols = 2;
  const int sizes[4] = {120, 80, 100, 140};
  for (int q = 0; q < 4; ++q) {
    const double cx = q & 1 ? 1.0 : -1.0, cy = q & 2 ? 1.0 : -1.0;
    for (int i = 0; i < sizes[q]; ++i) d.add({cx, cy}, (cx > 0) != (cy > 0) ? Label::Water : Label::Dry);
  }
  return d;
}

Data threshold_line(std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  d.cols = 1;
  for (int i = 0; i < 800; ++i) {
    const double v = rng.uniform();
    d.add({v}, v > 0.37 ? Label::Water : Label::Dry);
  }
  return d;
}

Data overlapping_clouds(std::uint64_t seed) {
  Rng rng(seed);
  Data d;
  d.cols = 4;
  for (int i = 0; i < 800; ++i) {
    const bool water = i % 2 == 1;
    const double c = water ? 0.7 : -0.7;
    d.add({c + rng.normal(), c + rng.normal(), c + rng.normal(), c + rng.normal()}, water ? Label::Water : Label::Dry);
  }
  return d;
}

Outcome gbdt_learning() {
  int monotone = 0;
  double worst_rise = 0.0;
  for (const auto& d : {xor_blobs(105), threshold_line(106), overlapping_clouds(107)}) {
    gbdt::GBDTParams p;
    p.n_trees = 50;
    p.max_leaves = 8;
    p.learning_rate = 0.1;
    p.subsample_size = 0;
    const auto m = gbdt::fit_gbdt(d.view(), d.y, p);
    const auto loss = m.training_loss();
    bool ok = loss.size() == 50;
    for (std::size_t i = 1; i < loss.size(); ++i) {
      worst_rise = std::max(worst_rise, loss[i] - loss[i - 1]);
      ok = ok && loss[i] <= loss[i - 1];
    }
    monotone += ok;
  }
  const auto x = xor_clusters();
  gbdt::GBDTParams p;
  p.n_trees = 50;
  p.max_leaves = 4;
  const double acc = accuracy(gbdt::fit_gbdt(x.view(), x.y, p).predict(x.view()), x.y);
  return {monotone == 3 && acc == 1.0,
          fmt("%d/3 fixtures with non-increasing loss (largest step %.3g), XOR accuracy %.4f", monotone,
              worst_rise, acc)};
}

// ------------------------------------------------------------------ 6

Outcome gradient_oracle() {
  Rng rng(108);
  double worst_g = 0.0, worst_h = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double m = rng.uniform(-10, 10);
    const double y = rng.uniform() < 0.5 ? 1.0 : 0.0;
    const std::vector<double> margins = {m};
    const std::vector<Label> labels = {y == 1.0 ? Label::Water : Label::Dry};
    const auto gh = gbdt::logistic_grad_hess(margins, labels);
    const double h1 = 1e-5, h2 = 1e-3;
    const double g_fd = (oracle::log_loss(m + h1, y) - oracle::log_loss(m - h1, y)) / (2 * h1);
    const double h_fd =
        (oracle::log_loss(m + h2, y) - 2 * oracle::log_loss(m, y) + oracle::log_loss(m - h2, y)) / (h2 * h2);
    worst_g = std::max(worst_g, std::abs(gh.grad[0] - g_fd));
    worst_h = std::max(worst_h, std::abs(gh.hess[0] - h_fd));
  }
  return {worst_g <= 1e-6 && worst_h <= 1e-6,
          fmt("worst gradient error %.3g, worst hessian error %.3g over 10^3 margins", worst_g, worst_h)};
}

// ------------------------------------------------------------------ 7, 9

struct PipelineResult {
  harness::ConfigScore chosen;
  harness::FinalReport final;
};

PipelineResult run_pipeline(const harness::GridSearchConfig& config) {
  const auto search = harness::run_grid_search(config);
  const auto scores = harness::write_search_reports(config.output_dir, search.cells);
  const auto& chosen = scores[harness::select_best(scores)];
  auto final = harness::final_eval(config, chosen);
  harness::write_final_reports(config.output_dir, final);
  return {chosen, std::move(final)};
}

const harness::SplitEvaluation& split_of(const harness::FinalReport& r, io::SplitName s) {
  for (const auto& e : r.splits) {
    if (e.split == s) return e;
  }
  throw std::runtime_error("split missing from final report");
}

harness::GridSearchConfig base_config(const fs::path& data, const fs::path& out, ModelKind kind,
                                      std::vector<std::string> spaces) {
  harness::GridSearchConfig c;
  c.model = kind;
  c.feature_spaces = std::move(spaces);
  c.data.root = data;
  c.output_dir = out;
  c.search_seeds = {0, 1};
  c.final_seeds = {0, 1, 2};
  c.final_splits = {io::SplitName::Valid, io::SplitName::Test};
  c.jobs = 4;
  return c;
}

Outcome synthetic_end_to_end(const fs::path& work) {
  using J = nlohmann::json;
  std::ostringstream detail;
  bool ok = true;

  // Part 1: separable fixture, GBDT and LDA through search, selection and final evaluation.
  const auto sep = synthetic::separable_fixture(7);
  double bayes = 1.0;
  for (double w : {sep.water_fraction_min, 0.5 * (sep.water_fraction_min + sep.water_fraction_max),
                   sep.water_fraction_max}) {
    bayes = std::min(bayes, synthetic::bayes_iou(sep.pixels, io::sar_bands(), w));
  }
  ok = ok && sep.tiles == 20 && sep.width == 64 && sep.height == 64 && bayes >= 0.97;
  synthetic::generate_dataset(sep, work / "separable");
  detail << fmt("Bayes IoU >= %.4f; valid total IoU", bayes);

  {
    auto c = base_config(work / "separable", work / "sep_gbdt", ModelKind::GBDT, {"SAR", "SAR_cNDWI"});
    c.grid = {{"n_trees", {J(50), J(100)}}, {"max_leaves", {J(8), J(32)}}};
    const auto r = run_pipeline(c);
    const double iou = split_of(r.final, io::SplitName::Valid).total[idx(Metric::IoU)];
    ok = ok && iou >= 0.95;
    detail << fmt(" gbdt %.4f", iou);
  }
  {
    auto c = base_config(work / "separable", work / "sep_lda", ModelKind::LDA, {"SAR", "SAR_cNDWI"});
    const auto r = run_pipeline(c);
    const double iou = split_of(r.final, io::SplitName::Valid).total[idx(Metric::IoU)];
    ok = ok && iou >= 0.95;
    detail << fmt(" lda %.4f", iou);
  }

  // Part 2: correlated fixture, recall ranking of every tuned model.
  synthetic::generate_dataset(synthetic::correlated_fixture(8), work / "correlated");
  const std::vector<std::string> spaces = {"SAR_OPT"};
  std::vector<std::pair<std::string, double>> recall;
  for (auto kind : {ModelKind::NaiveBayes, ModelKind::LDA, ModelKind::QDA, ModelKind::LinearSGD, ModelKind::GBDT}) {
    const std::string name(model_kind_name(kind));
    auto c = base_config(work / "correlated", work / ("corr_" + name), kind, spaces);
    if (kind == ModelKind::LinearSGD) c.grid = {{"rebalance", {J(false)}}};
    if (kind == ModelKind::GBDT) c.grid = {{"n_trees", {J(50), J(100)}}, {"max_leaves", {J(16)}}};
    const auto r = run_pipeline(c);
    recall.emplace_back(name, split_of(r.final, io::SplitName::Test).total[idx(Metric::Recall)]);
  }
  bool nb_top = true;
  for (std::size_t i = 1; i < recall.size(); ++i) nb_top = nb_top && recall[0].second > recall[i].second;
  ok = ok && nb_top;
  detail << "; correlated test recall";
  for (const auto& [name, v] : recall) detail << fmt(" %s %.4f", name.c_str(), v);
  return {ok, detail.str()};
}

// ------------------------------------------------------------------ 8

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Ranks of distinct values (the sample below has no ties).
std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i + 1);
  return r;
}

// Exact two-sided permutation p-value over every ordering of y.
double permutation_p(const std::vector<double>& x, const std::vector<double>& y) {
  const double observed = std::abs(pearson(x, y));
  std::vector<std::size_t> order(y.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> permuted(y.size());
  std::size_t extreme = 0, total = 0;
  do {
    for (std::size_t i = 0; i < order.size(); ++i) permuted[i] = y[order[i]];
    extreme += std::abs(pearson(x, permuted)) >= observed - 1e-12;
    ++total;
  } while (std::next_permutation(order.begin(), order.end()));
  return static_cast<double>(extreme) / static_cast<double>(total);
}

ConfusionCounts counts(std::uint64_t tp, std::uint64_t fp, std::uint64_t fn, std::uint64_t tn) {
  ConfusionCounts c;
  c.tp = tp;
  c.fp = fp;
  c.fn = fn;
  c.tn = tn;
  return c;
}

Outcome aggregation_bias() {
  // Region A: two tiles summing to (50, 25, 25, 900), IoU 1/2.
  // Region B: one tile (90, 5, 5, 900), IoU 9/10.
  std::vector<metrics::TileCounts> tiles = {{"a1", "A", counts(30, 10, 15, 400)},
                                            {"a2", "A", counts(20, 15, 10, 500)},
                                            {"b1", "B", counts(90, 5, 5, 900)}};
  const auto before_region = metrics::regionwise(tiles).stats(Metric::IoU).mean;
  const auto before_total = metrics::aggregate(tiles).total.iou();
  tiles.push_back({"a1_copy", "A", tiles[0].counts});
  tiles.push_back({"a2_copy", "A", tiles[1].counts});
  const auto after_region = metrics::regionwise(tiles).stats(Metric::IoU).mean;
  const auto after_total = metrics::aggregate(tiles).total.iou();
  // Pooled IoU moves from 140/200 to 190/300.
  const double expected_change = -1.0 / 15.0;
  const bool bias_ok = before_region == after_region && std::abs(before_region - 0.7) <= 1e-12 &&
                       std::abs(before_total - 0.7) <= 1e-12 &&
                       std::abs((after_total - before_total) - expected_change) <= 1e-12;

  const std::vector<double> water = {120, 340, 560, 800, 1500, 2300, 4100, 9000};
  const std::vector<double> iou = {0.62, 0.55, 0.71, 0.66, 0.80, 0.74, 0.85, 0.83};
  const double p_pearson = metrics::correlation_test(water, iou, metrics::CorrelationKind::Pearson).p_value;
  const double p_spearman = metrics::correlation_test(water, iou, metrics::CorrelationKind::Spearman).p_value;
  const double perm_pearson = permutation_p(water, iou);
  const double perm_spearman = permutation_p(ranks(water), ranks(iou));
  const bool p_ok = std::abs(p_pearson - perm_pearson) <= 0.02 && std::abs(p_spearman - perm_spearman) <= 0.02;

  return {bias_ok && p_ok,
          fmt("region mean IoU %.6f -> %.6f, total IoU %.6f -> %.6f (change %.6f, expected %.6f); "
              "Pearson p %.4f vs %.4f, Spearman p %.4f vs %.4f",
              before_region, after_region, before_total, after_total, after_total - before_total, expected_change,
              p_pearson, perm_pearson, p_spearman, perm_spearman)};
}

// ------------------------------------------------------------------ 9

std::map<std::string, std::string> report_files(const fs::path& run) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(run)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), run).generic_string();
    if (rel.starts_with("cells/")) continue;  // cells record wall time
    std::ifstream in(e.path(), std::ios::binary);
    files[rel] = std::string(std::istreambuf_iterator<char>(in), {});
  }
  return files;
}

Outcome determinism(const fs::path& work) {
  using J = nlohmann::json;
  auto spec = synthetic::separable_fixture(9);
  spec.tiles = 10;
  spec.bolivia_tiles = 2;
  spec.width = spec.height = 32;
  spec.regions = 3;
  synthetic::generate_dataset(spec, work / "det_data");
  auto c = base_config(work / "det_data", work / "det_run", ModelKind::GBDT, {"SAR", "SAR_cNDWI"});
  c.grid = {{"n_trees", {J(20)}}, {"max_leaves", {J(4), J(8)}}, {"subsample_size", {J(2000)}}};
  c.final_splits = {io::SplitName::Test, io::SplitName::BoliviaTest};
  // Same config twice, same output directory; the first run is moved aside
  // so the second cannot resume from it.
  std::vector<std::map<std::string, std::string>> runs;
  for (int i = 0; i < 2; ++i) {
    run_pipeline(c);
    runs.push_back(report_files(c.output_dir));
    fs::rename(c.output_dir, work / ("det_run_" + std::to_string(i)));
  }
  std::size_t differing = 0;
  for (const auto& [name, body] : runs[0]) {
    const auto it = runs[1].find(name);
    differing += it == runs[1].end() || it->second != body;
  }
  const bool ok = !runs[0].empty() && runs[0].size() == runs[1].size() && differing == 0;
  return {ok, fmt("%zu report files, %zu differ", runs[0].size(), differing)};
}

// ------------------------------------------------------------------ 10

Outcome sen1floods11(const fs::path& root, const fs::path& work, int seeds) {
  using J = nlohmann::json;
  harness::GridSearchConfig c;
  c.model = ModelKind::GBDT;
  c.feature_spaces = {"SAR_HSV(O3)+cAWEI+cNDWI"};
  c.data.root = root;
  c.output_dir = work / "sen1floods11";
  c.jobs = 1;
  c.final_splits = {io::SplitName::Test};
  c.final_seeds.clear();
  for (int s = 0; s < seeds; ++s) c.final_seeds.push_back(static_cast<std::uint64_t>(s));
  harness::ConfigScore chosen;
  chosen.model = ModelKind::GBDT;
  chosen.feature_space = c.feature_spaces[0];
  chosen.params = {{"n_trees", 200}, {"max_leaves", 128}, {"lambda", 1.0}, {"learning_rate", 0.1},
                   {"subsample_size", 262144}};
  auto final = harness::final_eval(c, chosen);
  harness::write_final_reports(c.output_dir, final);
  const auto& test = split_of(final, io::SplitName::Test);
  const double total = test.total[idx(Metric::IoU)];
  const double region = test.regionwise.stats(Metric::IoU).mean;
  return {total >= 0.86 && std::abs(region - 0.7998) <= 0.03,
          fmt("test total IoU %.4f, region mean IoU %.4f over %d seeds", total, region, seeds)};
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;  // 0: no runtime bound
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floodpix acceptance suite"};
  fs::path work = fs::temp_directory_path() / "floodpix_acceptance";
  std::vector<int> only;
  std::optional<fs::path> s1f11;
  int s1f11_seeds = 16;
  app.add_option("--work-dir", work, "scratch directory, cleared on start");
  app.add_option("--only", only, "run just these criteria");
  app.add_option("--sen1floods11-root", s1f11, "imported dataset root for the optional real-data criterion");
  app.add_option("--sen1floods11-seeds", s1f11_seeds, "final seeds for the real-data criterion");
  CLI11_PARSE(app, argc, argv);

  fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "metric identities", 1.0, metric_identities},
      {2, "paper consistency", 0.0, paper_consistency},
      {3, "feature spaces and HSV round trip", 1.0, feature_spaces},
      {4, "split search vs exhaustive oracle", 10.0, split_oracle},
      {5, "GBDT loss and XOR", 30.0, gbdt_learning},
      {6, "gradient and hessian vs finite differences", 0.0, gradient_oracle},
      {7, "synthetic end to end", 300.0, [&] { return synthetic_end_to_end(work); }},
      {8, "aggregation bias and p-values", 0.0, aggregation_bias},
      {9, "pipeline determinism", 0.0, [&] { return determinism(work); }},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = c.budget_seconds <= 0.0 || secs < c.budget_seconds;
    const bool pass = out.pass && in_time;
    failed += !pass;
    std::string timing = fmt("%.2f s", secs);
    if (c.budget_seconds > 0.0) timing += fmt(" of %.0f s", c.budget_seconds);
    std::printf("[%s] %d %s: %s (%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, out.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  }

  if (only.empty() || std::find(only.begin(), only.end(), 10) != only.end()) {
    if (s1f11) {
      const auto start = std::chrono::steady_clock::now();
      Outcome out;
      try {
        out = sen1floods11(*s1f11, work, s1f11_seeds);
      } catch (const std::exception& e) {
        out = {false, std::string("exception: ") + e.what()};
      }
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      failed += !out.pass;
      std::printf("[%s] 10 Sen1Floods11 headline configuration: %s (%.0f s)\n", out.pass ? "PASS" : "FAIL",
                  out.detail.c_str(), secs);
    } else {
      std::printf("[SKIP] 10 Sen1Floods11 headline configuration: needs --sen1floods11-root\n");
    }
  }
  return failed == 0 ? 0 : 1;
}
