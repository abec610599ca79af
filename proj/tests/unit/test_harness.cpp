#include <algorithm>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "floodpix/classifiers.hpp"
#include "floodpix/error.hpp"
#include "floodpix/harness.hpp"
#include "floodpix/synthetic.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

namespace floodpix::harness {
namespace {

using floodpix::testing::TempDir;
using metrics::Metric;
namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class SmallRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new TempDir("harness_data");
    auto spec = synthetic::separable_fixture(5);
    spec.tiles = 10;
    spec.bolivia_tiles = 2;
    spec.width = spec.height = 24;
    spec.regions = 3;
    synthetic::generate_dataset(spec, data_->path());
  }
  static void TearDownTestSuite() {
    delete data_;
    data_ = nullptr;
  }

  GridSearchConfig config(const fs::path& out) const {
    GridSearchConfig c;
    c.model = ModelKind::NaiveBayes;
    c.feature_spaces = {"SAR", "SAR_cNDWI"};
    c.search_seeds = {0, 1};
    c.final_seeds = {0, 1, 2};
    c.data.root = data_->path();
    c.output_dir = out;
    return c;
  }

  static TempDir* data_;
};

TempDir* SmallRun::data_ = nullptr;

ConfigScore score(const std::string& key, double mean_iou, double total_iou) {
  ConfigScore s;
  s.config_key = key;
  s.seeds = 1;
  s.mean_based[static_cast<std::size_t>(Metric::IoU)] = mean_iou;
  s.total[static_cast<std::size_t>(Metric::IoU)] = total_iou;
  return s;
}

TEST(Grid, CartesianCount) {
  GridSearchConfig c;
  c.model = ModelKind::LDA;
  c.feature_spaces = {"SAR", "RGB"};
  c.grid["shrinkage"] = {0.0, 0.5};
  const std::vector<std::uint64_t> seeds = {0, 1, 2, 3};
  const auto cells = expand_grid(c, seeds);
  EXPECT_EQ(cells.size(), 16u);
  std::set<std::string> keys;
  for (const auto& cell : cells) keys.insert(cell.key());
  EXPECT_EQ(keys.size(), 16u);
  EXPECT_EQ(cells[0].seed, 0u);
  EXPECT_EQ(cells[1].seed, 1u);
}

TEST(Grid, GbdtLeavesFollowDimensionality) {
  GridSearchConfig c;
  c.model = ModelKind::GBDT;
  c.feature_spaces = {"SAR", "SAR_O3", "S2"};
  c.grid["n_trees"] = {10};
  const std::vector<std::uint64_t> seeds = {0};
  std::map<std::string, std::set<int>> leaves;
  for (const auto& cell : expand_grid(c, seeds)) leaves[cell.feature_space].insert(cell.params.at("max_leaves").get<int>());
  EXPECT_EQ(leaves["SAR"], (std::set<int>{2, 4}));
  EXPECT_EQ(leaves["SAR_O3"], (std::set<int>{8, 16, 32}));
  EXPECT_EQ(leaves["S2"], (std::set<int>{32, 64, 128}));
  c.grid["max_leaves"] = {3};
  for (const auto& cell : expand_grid(c, seeds)) EXPECT_EQ(cell.params.at("max_leaves"), 3);
}

TEST(Grid, DefaultGrids) {
  EXPECT_EQ(default_grid(ModelKind::LDA).at("shrinkage").size(), 11u);
  EXPECT_EQ(default_grid(ModelKind::QDA).at("reg_param").size(), 12u);
  const auto sgd = default_grid(ModelKind::LinearSGD);
  EXPECT_EQ(sgd.at("loss").size() * sgd.at("alpha").size() * sgd.at("rebalance").size(), 30u);
}

TEST(Grid, ValidationErrors) {
  GridSearchConfig c;
  c.model = ModelKind::LDA;
  c.feature_spaces = {"SAR"};
  EXPECT_NO_THROW(c.validate());
  c.grid["n_trees"] = {10};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.grid.clear();
  c.search_seeds = {1, 1};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c.search_seeds = {1};
  c.feature_spaces = {"NOPE"};
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Selection, HigherMeanIoUWins) {
  const std::vector<ConfigScore> s = {score("a", 0.6, 0.9), score("b", 0.7, 0.1)};
  EXPECT_EQ(select_best(s), 1u);
}

TEST(Selection, TotalIoUBreaksTies) {
  const std::vector<ConfigScore> s = {score("a", 0.7, 0.80), score("b", 0.7, 0.82)};
  EXPECT_EQ(select_best(s), 1u);
}

TEST(Selection, OrderIndependent) {
  Rng rng(1);
  std::vector<ConfigScore> s;
  for (int i = 0; i < 30; ++i) {
    // Coarse values force ties at several levels of the key.
    s.push_back(score("k" + std::to_string(i), 0.1 * static_cast<double>(rng.below(3)),
                      0.1 * static_cast<double>(rng.below(3))));
  }
  const std::string winner = s[select_best(s)].config_key;
  for (int trial = 0; trial < 50; ++trial) {
    rng.shuffle(std::span<ConfigScore>(s));
    EXPECT_EQ(s[select_best(s)].config_key, winner);
  }
  EXPECT_THROW(select_best({}), InvalidArgument);
}

TEST(Selection, NaNRanksLast) {
  const std::vector<ConfigScore> s = {score("a", std::nan(""), 1.0), score("b", 0.0, 0.0)};
  EXPECT_EQ(select_best(s), 1u);
}

TEST(Boxplot, SingleGroup) {
  const std::vector<ConfigScore> s = {score("gbdt|SAR|{}", 0.4, 0.5)};
  auto with_fs = s;
  with_fs[0].feature_space = "SAR";
  const auto rows = export_boxplot_data(with_fs, "feature_space");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].min, rows[0].max);
  EXPECT_EQ(rows[0].median, rows[0].max);
}

TEST(Boxplot, SortedByMaximum) {
  std::vector<ConfigScore> s = {score("1", 0.10, 0), score("2", 0.65, 0), score("3", 0.05, 0)};
  s[0].feature_space = "OPT";
  s[1].feature_space = "SAR_HSV(O3)+cAWEI+cNDWI";
  s[2].feature_space = "OPT";
  const auto rows = export_boxplot_data(s, "feature_space");
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].group, "SAR_HSV(O3)+cAWEI+cNDWI");
  EXPECT_EQ(rows[0].max, 0.65);
  EXPECT_THROW(export_boxplot_data(s, "no_such_param"), InvalidArgument);
}

TEST(Boxplot, QuartilesMatchSortOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ConfigScore> s;
    std::vector<double> values;
    const auto n = 1 + rng.below(40);
    for (std::size_t i = 0; i < n; ++i) {
      values.push_back(rng.uniform());
      s.push_back(score(std::to_string(i), values.back(), 0));
      s.back().params = {{"alpha", 0.1}};
    }
    const auto rows = export_boxplot_data(s, "alpha");
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_DOUBLE_EQ(rows[0].q1, oracle::sorted_quantile(values, 0.25));
    EXPECT_DOUBLE_EQ(rows[0].median, oracle::sorted_quantile(values, 0.5));
    EXPECT_DOUBLE_EQ(rows[0].q3, oracle::sorted_quantile(values, 0.75));
    EXPECT_EQ(rows[0].min, *std::min_element(values.begin(), values.end()));
  }
}

TEST(Config, ParsesAndResolvesPaths) {
  const auto c = parse_config_toml(R"(
[data]
root = "data"
[search]
model = "qda"
feature_spaces = ["SAR", "RGB"]
search_seeds = 2
final_seeds = [5, 6]
final_splits = ["test"]
output = "runs/q"
jobs = 2
[features]
speckle_filter = true
[features.lee_sigma]
window = 5
[grid]
reg_param = [0.0, 0.5]
)",
                                   "/base");
  EXPECT_EQ(c.model, ModelKind::QDA);
  EXPECT_EQ(c.search_seeds, (std::vector<std::uint64_t>{0, 1}));
  EXPECT_EQ(c.final_seeds, (std::vector<std::uint64_t>{5, 6}));
  EXPECT_EQ(c.data.root, fs::path("/base/data"));
  EXPECT_EQ(c.output_dir, fs::path("/base/runs/q"));
  EXPECT_TRUE(c.feature_options.speckle_filter);
  EXPECT_EQ(c.feature_options.lee.window, 5);
  EXPECT_EQ(c.grid.at("reg_param").size(), 2u);
  EXPECT_EQ(c.final_splits, (std::vector<SplitName>{SplitName::Test}));
}

TEST(Config, RejectsUnknownKeysAndBadSyntax) {
  EXPECT_THROW(parse_config_toml("[search]\nmodel = \"nb\"\nmodle = 1\n"), InvalidArgument);
  EXPECT_THROW(parse_config_toml("[serach]\nmodel = \"nb\"\n"), InvalidArgument);
  EXPECT_THROW(parse_config_toml("[search\n"), InvalidArgument);
  EXPECT_THROW(parse_config_toml("[search]\nmodel = \"svm\"\n"), InvalidArgument);
  EXPECT_THROW(parse_config_toml("[search]\nmodel = \"nb\"\nsearch_seeds = 0\n"), InvalidArgument);
}

TEST(Config, ZeroDivisionPolicy) {
  EXPECT_EQ(parse_config_toml("[search]\nmodel = \"nb\"\n").zero_division, metrics::ZeroDivision::One);
  EXPECT_EQ(parse_config_toml("[search]\nmodel = \"nb\"\n[metrics]\nzero_division = \"undefined\"\n").zero_division,
            metrics::ZeroDivision::Undefined);
  EXPECT_THROW(parse_config_toml("[search]\nmodel = \"nb\"\n[metrics]\nzero_division = \"zero\"\n"),
               InvalidArgument);
}

TEST(Config, SnapshotReproducesTheConfiguration) {
  GridSearchConfig c;
  c.model = ModelKind::LinearSGD;
  c.feature_spaces = {"SAR_cNDWI"};
  c.grid["alpha"] = {0.5};
  c.data.root = "/data";
  c.output_dir = "/out";
  c.feature_options.lee.looks = 4.0;
  c.zero_division = metrics::ZeroDivision::Undefined;
  const auto again = parse_config_toml(config_to_toml(c));
  EXPECT_EQ(again.to_json(), c.to_json());
  EXPECT_EQ(again.grid.at("loss").size(), 3u);  // defaults are written out
}

TEST_F(SmallRun, ZeroDivisionPolicySurvivesResume) {
  TempDir out("harness_out");
  auto c = config(out.path());
  c.zero_division = metrics::ZeroDivision::Undefined;
  const auto first = run_grid_search(c);
  const auto loaded = load_cells(out.path());
  ASSERT_EQ(loaded.size(), first.cells.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].zero_division, metrics::ZeroDivision::Undefined);
    EXPECT_EQ(loaded[i].report->to_json(), first.cells[i].report->to_json());
  }
}

TEST_F(SmallRun, SearchWritesCellsAndResumes) {
  TempDir out("harness_out");
  auto c = config(out.path());
  const auto first = run_grid_search(c);
  EXPECT_EQ(first.cells.size(), 4u);
  EXPECT_EQ(first.computed, 4u);
  std::map<fs::path, std::string> files;
  for (const auto& e : fs::directory_iterator(out / "cells")) files[e.path()] = slurp(e.path());
  EXPECT_EQ(files.size(), 4u);

  const auto second = run_grid_search(c);
  EXPECT_EQ(second.computed, 0u);
  EXPECT_EQ(second.resumed, 4u);
  for (const auto& [p, text] : files) EXPECT_EQ(slurp(p), text);

  // A torn cell file is recomputed.
  std::ofstream(files.begin()->first) << "{\"cell\":";
  const auto third = run_grid_search(c);
  EXPECT_EQ(third.computed, 1u);
  EXPECT_TRUE(fs::exists(out / "resolved_config.toml"));
}

TEST_F(SmallRun, FailingCellsAreRecorded) {
  TempDir out("harness_out");
  auto c = config(out.path());
  c.model = ModelKind::GBDT;
  c.feature_spaces = {"SAR"};
  c.search_seeds = {0};
  c.grid = {{"n_trees", {5}}, {"max_leaves", {1, 4}}};
  const auto r = run_grid_search(c);
  ASSERT_EQ(r.cells.size(), 2u);
  const auto failed = std::count_if(r.cells.begin(), r.cells.end(), [](const CellResult& x) { return !x.ok; });
  EXPECT_EQ(failed, 1);
  const auto scores = score_configs(r.cells);
  ASSERT_EQ(scores.size(), 1u);
  EXPECT_EQ(scores[0].params.at("max_leaves"), 4);
}

TEST_F(SmallRun, ParallelJobsGiveTheSameCells) {
  TempDir a("harness_a"), b("harness_b");
  auto ca = config(a.path());
  auto cb = config(b.path());
  ca.model = cb.model = ModelKind::LinearSGD;
  ca.grid = cb.grid = {{"alpha", {0.01, 0.0001}}, {"loss", {"hinge"}}, {"rebalance", {false}}};
  cb.jobs = 3;
  const auto ra = run_grid_search(ca), rb = run_grid_search(cb);
  ASSERT_EQ(ra.cells.size(), rb.cells.size());
  for (std::size_t i = 0; i < ra.cells.size(); ++i) {
    EXPECT_EQ(ra.cells[i].to_json(false), rb.cells[i].to_json(false));
  }
}

TEST_F(SmallRun, FinalEvaluationAveragesSeeds) {
  TempDir out("harness_out");
  auto c = config(out.path());
  c.model = ModelKind::LinearSGD;
  c.feature_spaces = {"SAR"};
  c.grid = {{"alpha", {0.001}}, {"loss", {"log_loss"}}, {"rebalance", {true}}};
  const auto scores = score_configs(run_grid_search(c).cells);
  const auto report = final_eval(c, scores[select_best(scores)]);
  ASSERT_EQ(report.splits.size(), 2u);
  for (const auto& split : report.splits) {
    ASSERT_EQ(split.per_seed.size(), 3u);
    double sum = 0;
    for (const auto& s : split.per_seed) sum += s.report.mean(Metric::IoU).mean;
    EXPECT_NEAR(split.mean_based[static_cast<std::size_t>(Metric::IoU)].mean, sum / 3.0, 1e-12);
  }
  write_final_reports(out.path(), report);
  const auto regionwise_csv = slurp(out / "final_test_regionwise.csv");
  for (const char* col : {"mean", "std", "min", "max", "median"}) {
    EXPECT_NE(regionwise_csv.find(col), std::string::npos) << col;
  }
  EXPECT_TRUE(fs::exists(out / "final" / "model.json"));
  const auto json = nlohmann::json::parse(slurp(out / "final_report.json"));
  EXPECT_EQ(json.at("seeds").size(), 3u);
}

TEST_F(SmallRun, DeterministicModelsTrainOncePerConfig) {
  TempDir out("harness_out");
  auto c = config(out.path());
  c.feature_spaces = {"SAR"};
  const auto r = run_grid_search(c);
  ASSERT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.cells[0].to_json(false).at("tiles"), r.cells[1].to_json(false).at("tiles"));
}

TEST(FinalEval, PerfectClassifierScoresOne) {
  TempDir data("perfect_data"), out("perfect_out");
  auto spec = synthetic::separable_fixture(9);
  spec.tiles = 5;
  spec.bolivia_tiles = 1;
  spec.width = spec.height = 16;
  for (auto b : {io::BandId::VV, io::BandId::VH}) spec.pixels.sigma[io::channel_index(b)] = 0.2;
  synthetic::generate_dataset(spec, data.path());
  GridSearchConfig c;
  c.model = ModelKind::LDA;
  c.feature_spaces = {"SAR"};
  c.grid = {{"shrinkage", {0.0}}};
  c.search_seeds = {0};
  c.final_seeds = {0, 1};
  c.data.root = data.path();
  c.output_dir = out.path();
  const auto scores = score_configs(run_grid_search(c).cells);
  const auto report = final_eval(c, scores.at(0));
  for (const auto& split : report.splits) {
    for (Metric m : metrics::kAllMetrics) EXPECT_EQ(split.total[static_cast<std::size_t>(m)], 1.0);
  }
}

TEST(SummarizeSeeds, RegionMetricsAndCorrelations) {
  SplitEvaluation eval;
  for (std::uint64_t seed : {0, 1}) {
    auto& s = eval.per_seed.emplace_back();
    s.seed = seed;
    for (int r = 0; r < 4; ++r) {
      metrics::ConfusionCounts c;
      c.tp = static_cast<std::uint64_t>(10 * (r + 1) + seed);
      c.fn = 5;
      c.fp = static_cast<std::uint64_t>(3 + r);
      c.tn = 100;
      s.tiles.push_back({"R" + std::to_string(r) + "_1", "R" + std::to_string(r), c});
    }
    s.report = metrics::aggregate(s.tiles);
    s.regionwise = metrics::regionwise(s.tiles);
  }
  summarize_seeds(eval);
  ASSERT_EQ(eval.regionwise.regions.size(), 4u);
  const double iou0 = 0.5 * (eval.per_seed[0].regionwise.regions[0].metrics.iou() +
                             eval.per_seed[1].regionwise.regions[0].metrics.iou());
  EXPECT_NEAR(eval.regionwise.regions[0].metrics.iou(), iou0, 1e-15);
  ASSERT_TRUE(eval.spearman.at("iou").has_value());
  EXPECT_NEAR(eval.spearman.at("iou")->coefficient, 1.0, 1e-12);
}

// --- prediction rasters

struct ConstantModel final : Model {
  double margin;
  std::size_t dims;
  ConstantModel(double m, std::size_t d) : margin(m), dims(d) {}
  ModelKind kind() const override { return ModelKind::NaiveBayes; }
  std::size_t dimensionality() const override { return dims; }
  std::vector<double> decision_function(FeatureView x) const override { return std::vector<double>(x.rows, margin); }
  std::vector<std::array<double, 2>> predict_proba(FeatureView x) const override {
    return std::vector<std::array<double, 2>>(x.rows, {0.5, 0.5});
  }
  nlohmann::json to_json() const override { return {}; }
};

std::map<std::array<std::uint8_t, 3>, std::size_t> color_histogram(const PredictionRaster& r) {
  std::map<std::array<std::uint8_t, 3>, std::size_t> h;
  for (std::size_t i = 0; i < r.labels.size(); ++i) ++h[{r.rgb[3 * i], r.rgb[3 * i + 1], r.rgb[3 * i + 2]}];
  return h;
}

TEST(PredictionRaster, AllDryMarksMissedWater) {
  Rng rng(3);
  const auto tile = floodpix::testing::full_tile(10, 10, rng);
  io::LabelGrid truth(10, 10, io::Label::Dry);
  for (std::size_t i = 0; i < 37; ++i) truth.values[i] = io::Label::Water;
  const auto r = render_prediction(ConstantModel(-1.0, 2), features::parse_feature_space("SAR"), {}, tile, truth);
  const auto h = color_histogram(r);
  EXPECT_EQ(h.at(kColorFalseNegative), 37u);
  EXPECT_FALSE(h.contains(kColorFalsePositive));
}

TEST(PredictionRaster, ColorsMatchConfusionCounts) {
  Rng rng(4);
  TempDir dir("raster_out");
  auto tile = floodpix::testing::full_tile(32, 32, rng);
  io::LabelGrid truth(32, 32);
  for (auto& v : truth.values) {
    const double u = rng.uniform();
    v = u < 0.1 ? io::Label::NoData : u < 0.5 ? io::Label::Water : io::Label::Dry;
  }
  std::vector<std::pair<io::Tile, io::LabelGrid>> train;
  train.emplace_back(tile, truth);
  const auto spec = features::parse_feature_space("SAR_RGB");
  const auto m = features::build_feature_matrix(spec, train);
  const auto model = classifiers::fit_naive_bayes(m.view(), m.labels);
  const auto r = render_prediction(model, spec, {}, tile, truth);
  std::vector<io::Label> pred(r.labels.size());
  for (std::size_t i = 0; i < pred.size(); ++i) pred[i] = r.labels[i] < 0 ? io::Label::Dry : static_cast<io::Label>(r.labels[i]);
  const auto c = metrics::confusion(pred, truth);
  const auto h = color_histogram(r);
  auto count = [&](const std::array<std::uint8_t, 3>& k) { return h.contains(k) ? h.at(k) : 0u; };
  EXPECT_EQ(count(kColorTruePositive), c.tp);
  EXPECT_EQ(count(kColorFalseNegative), c.fn);
  EXPECT_EQ(count(kColorFalsePositive), c.fp);
  EXPECT_EQ(count(kColorNoData), r.labels.size() - c.total());

  export_prediction_raster(model, spec, {}, tile, truth, dir / "chip");
  int w = 0, h2 = 0;
  EXPECT_EQ(read_png_rgb(dir / "chip.png", &w, &h2), r.rgb);
  EXPECT_EQ(w, 32);
  const auto labels = io::read_labels(dir / "chip.i8");
  for (std::size_t i = 0; i < labels.size(); ++i) EXPECT_EQ(static_cast<int>(labels.values[i]), r.labels[i]);
}

TEST(PredictionRaster, PerfectPredictionHasNoErrors) {
  Rng rng(5);
  auto tile = floodpix::testing::full_tile(8, 8, rng);
  io::LabelGrid truth(8, 8, io::Label::Water);
  const auto h = color_histogram(render_prediction(ConstantModel(1.0, 2), features::parse_feature_space("SAR"), {}, tile, truth));
  EXPECT_FALSE(h.contains(kColorFalseNegative));
  EXPECT_FALSE(h.contains(kColorFalsePositive));
  EXPECT_EQ(h.at(kColorTruePositive), 64u);
}

TEST(Artifact, RoundTrip) {
  TempDir dir("artifact");
  const auto d = floodpix::testing::two_clouds(50, 2, 1.0, 6);
  ModelArtifact a;
  a.feature_space = "SAR";
  a.params = {{"shrinkage", 0.1}};
  a.seed = 4;
  a.model = std::make_shared<classifiers::LDA>(classifiers::fit_lda(d.view(), d.y, 0.1));
  save_artifact(a, dir / "m.json");
  const auto b = load_artifact(dir / "m.json");
  EXPECT_EQ(b.feature_space, "SAR");
  EXPECT_EQ(b.seed, 4u);
  EXPECT_EQ(b.model->decision_function(d.view()), a.model->decision_function(d.view()));
  std::ofstream(dir / "bad.json") << "{";
  EXPECT_THROW(load_artifact(dir / "bad.json"), IoError);
}

}  // namespace
}  // namespace floodpix::harness
