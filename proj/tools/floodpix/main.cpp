// floodpix command line: dataset import and statistics, feature export,
// single-model train/predict/evaluate, and the grid-search harness.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "floodpix/error.hpp"
#include "floodpix/features.hpp"
#include "floodpix/harness.hpp"
#include "floodpix/import.hpp"
#include "floodpix/metrics.hpp"
#include "floodpix/npy.hpp"
#include "floodpix/raster_io.hpp"
#include "floodpix/synthetic.hpp"

namespace fs = std::filesystem;
using namespace floodpix;

namespace {

struct Globals {
  std::optional<fs::path> data_root;
  bool speckle_filter = false;
  int jobs = 1;
  bool quiet = false;

  fs::path root() const { return io::resolve_data_root(data_root); }
  harness::DataSource source() const { return {root(), {}}; }
  features::FeatureOptions feature_options() const {
    features::FeatureOptions o;
    o.speckle_filter = speckle_filter;
    return o;
  }
  harness::Logger logger() const {
    if (quiet) return {};
    return [](const std::string& msg) { std::cerr << "[floodpix] " << msg << "\n"; };
  }
};

void snapshot(const fs::path& file, const nlohmann::json& resolved) {
  harness::write_text_atomic(file, harness::json_to_toml(resolved));
}

nlohmann::json parse_param_value(const std::string& text) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    return text;  // bare words such as hinge
  }
}

std::vector<io::SplitName> parse_splits(const std::vector<std::string>& names) {
  std::vector<io::SplitName> out;
  for (const auto& n : names) out.push_back(io::parse_split_name(n));
  return out;
}

// ------------------------------------------------------------------ import

struct ImportArgs {
  fs::path source;
  fs::path csv_dir;
};

int run_import(const Globals& g, const ImportArgs& a) {
  io::ImportOptions opts;
  opts.source = a.source;
  opts.csv_dir = a.csv_dir;
  const fs::path root = g.root();
  const auto summary = io::import_sen1floods11(opts, root);
  nlohmann::json out = {{"data_root", fs::absolute(root).generic_string()}, {"missing_splits", summary.missing_splits}};
  for (std::size_t s = 0; s < 4; ++s) {
    out["tiles"][std::string(io::split_name(static_cast<io::SplitName>(s)))] = summary.tiles[s];
  }
  snapshot(root / "import_config.toml",
           {{"import", {{"source", fs::absolute(a.source).generic_string()},
                        {"csv_dir", fs::absolute(a.csv_dir.empty() ? a.source : a.csv_dir).generic_string()},
                        {"data_root", fs::absolute(root).generic_string()}}}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------------- stats

struct StatsArgs {
  std::vector<std::string> splits = {"train", "valid", "test", "bolivia"};
  fs::path output;
};

int run_stats(const Globals& g, const StatsArgs& a) {
  const auto source = g.source();
  std::vector<io::SplitManifest> manifests;
  nlohmann::json per_split = nlohmann::json::object();
  for (io::SplitName s : parse_splits(a.splits)) {
    if (!fs::exists(source.manifest_path(s))) continue;
    manifests.push_back(source.load(s));
    per_split[std::string(io::split_name(s))] = io::dataset_statistics(std::span(&manifests.back(), 1)).to_json();
  }
  const nlohmann::json out = {{"all", io::dataset_statistics(manifests).to_json()}, {"splits", per_split}};
  if (!a.output.empty()) {
    harness::write_text_atomic(a.output, out.dump(2) + "\n");
    snapshot(a.output.parent_path() / "stats_config.toml",
             {{"stats", {{"data_root", fs::absolute(source.root).generic_string()}, {"splits", a.splits}}}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------------- featurize

struct FeaturizeArgs {
  std::string feature_space;
  std::string split = "train";
  fs::path output_dir;
};

int run_featurize(const Globals& g, const FeaturizeArgs& a) {
  const auto spec = features::parse_feature_space(a.feature_space);
  const auto source = g.source();
  const auto tiles = io::load_tiles(source.load(io::parse_split_name(a.split)), spec.required_bands());
  const auto options = g.feature_options();
  const auto m = features::build_feature_matrix(spec, tiles, options);
  fs::create_directories(a.output_dir);
  io::write_npy(a.output_dir / "features.npy", {m.rows, m.cols}, m.values);
  std::vector<float> labels(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) labels[i] = m.labels[i] == io::Label::Water ? 1.0f : 0.0f;
  io::write_npy(a.output_dir / "labels.npy", {m.rows}, labels);
  nlohmann::json tiles_json = nlohmann::json::array();
  for (const auto& t : m.tiles) tiles_json.push_back({{"tile_id", t.tile_id}, {"region", t.region}});
  const nlohmann::json meta = {{"feature_space", features::format_feature_space(spec)},
                               {"columns", m.column_names},
                               {"rows", m.rows},
                               {"tiles", tiles_json}};
  harness::write_text_atomic(a.output_dir / "featurize.json", meta.dump(2) + "\n");
  snapshot(a.output_dir / "featurize_config.toml",
           {{"featurize", {{"data_root", fs::absolute(source.root).generic_string()},
                           {"feature_space", features::format_feature_space(spec)},
                           {"split", a.split}}},
            {"features", options.to_json()}});
  std::cerr << "wrote " << m.rows << " x " << m.cols << " features\n";
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  std::string model;
  std::string feature_space;
  std::vector<std::string> params;
  std::uint64_t seed = 0;
  std::string split = "train";
  fs::path output = "model.json";
};

int run_train(const Globals& g, const TrainArgs& a) {
  const ModelKind kind = parse_model_kind(a.model);
  const auto spec = features::parse_feature_space(a.feature_space);
  nlohmann::json params = nlohmann::json::object();
  for (const auto& p : a.params) {
    const auto eq = p.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--param expects name=value, got '" + p + "'");
    params[p.substr(0, eq)] = parse_param_value(p.substr(eq + 1));
  }
  const auto source = g.source();
  const auto options = g.feature_options();
  const auto tiles = io::load_tiles(source.load(io::parse_split_name(a.split)), spec.required_bands());
  const auto data = features::build_feature_matrix(spec, tiles, options);
  harness::ModelArtifact artifact;
  artifact.feature_space = features::format_feature_space(spec);
  artifact.feature_options = options;
  artifact.params = params;
  artifact.seed = a.seed;
  artifact.model = harness::train_model(kind, params, a.seed, data, g.jobs);
  harness::save_artifact(artifact, a.output);
  snapshot(fs::path(a.output).replace_extension(".config.toml"),
           {{"train", {{"model", std::string(model_kind_name(kind))},
                       {"feature_space", features::format_feature_space(spec)},
                       {"params", params},
                       {"seed", a.seed},
                       {"split", a.split},
                       {"data_root", fs::absolute(source.root).generic_string()},
                       {"output", fs::absolute(a.output).generic_string()}}},
            {"features", options.to_json()}});
  std::cerr << "trained " << model_kind_name(kind) << " on " << data.rows << " pixels -> " << a.output << "\n";
  return 0;
}

// ----------------------------------------------------------------- predict

struct PredictArgs {
  fs::path model;
  std::string split = "test";
  std::vector<std::string> tiles;
  fs::path output_dir = "predictions";
};

int run_predict(const Globals& g, const PredictArgs& a) {
  const auto artifact = harness::load_artifact(a.model);
  if (artifact.feature_space.empty()) throw InvalidArgument("model file carries no feature space");
  const auto spec = features::parse_feature_space(artifact.feature_space);
  const auto source = g.source();
  auto manifest = source.load(io::parse_split_name(a.split));
  if (!a.tiles.empty()) {
    std::erase_if(manifest.entries, [&](const io::ManifestEntry& e) {
      return std::find(a.tiles.begin(), a.tiles.end(), e.tile_id) == a.tiles.end();
    });
    if (manifest.entries.size() != a.tiles.size()) throw InvalidArgument("some requested tiles are not in the split");
  }
  fs::create_directories(a.output_dir);
  for (const auto& entry : manifest.entries) {
    const auto [tile, labels] = io::load_tile(entry);
    harness::export_prediction_raster(*artifact.model, spec, artifact.feature_options, tile, labels,
                                      a.output_dir / entry.tile_id);
  }
  snapshot(a.output_dir / "predict_config.toml",
           {{"predict", {{"model", fs::absolute(a.model).generic_string()},
                         {"split", a.split},
                         {"tiles", a.tiles},
                         {"data_root", fs::absolute(source.root).generic_string()}}}});
  std::cerr << "wrote " << manifest.entries.size() << " prediction rasters to " << a.output_dir << "\n";
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  fs::path model;
  std::vector<std::string> splits = {"test"};
  fs::path output_dir = "evaluation";
  std::string zero_division = "one";
};

int run_evaluate(const Globals& g, const EvaluateArgs& a) {
  const auto artifact = harness::load_artifact(a.model);
  if (artifact.feature_space.empty()) throw InvalidArgument("model file carries no feature space");
  const auto spec = features::parse_feature_space(artifact.feature_space);
  const auto source = g.source();
  const auto policy = metrics::parse_zero_division(a.zero_division);
  fs::create_directories(a.output_dir);
  nlohmann::json out = nlohmann::json::object();
  for (io::SplitName s : parse_splits(a.splits)) {
    const auto tiles = io::load_tiles(source.load(s), spec.required_bands());
    const auto data = features::build_feature_matrix(spec, tiles, artifact.feature_options);
    harness::SplitEvaluation eval;
    eval.split = s;
    auto& seed = eval.per_seed.emplace_back();
    seed.seed = artifact.seed;
    seed.tiles = harness::evaluate_counts(*artifact.model, data);
    seed.report = metrics::aggregate(seed.tiles, policy);
    seed.regionwise = metrics::regionwise(seed.tiles, policy);
    harness::summarize_seeds(eval);
    const std::string name(io::split_name(s));
    out[name] = eval.to_json();
    harness::write_text_atomic(a.output_dir / (name + "_regionwise.csv"), metrics::regionwise_csv(seed.regionwise));
    harness::write_text_atomic(a.output_dir / (name + "_summary.csv"),
                               metrics::report_csv_header() + "\n" + metrics::report_csv_row(seed.report) + "\n");
    std::cout << name << ": total IoU " << seed.report.total.iou() << ", mean IoU " << seed.report.mean(metrics::Metric::IoU).mean
              << "\n";
  }
  harness::write_text_atomic(a.output_dir / "evaluation.json", out.dump(2) + "\n");
  snapshot(a.output_dir / "evaluate_config.toml",
           {{"evaluate", {{"model", fs::absolute(a.model).generic_string()},
                          {"splits", a.splits},
                          {"zero_division", a.zero_division},
                          {"data_root", fs::absolute(source.root).generic_string()}}}});
  return 0;
}

// -------------------------------------------------------------- gridsearch

struct GridArgs {
  fs::path config;
  fs::path output;
  bool skip_final = false;
};

harness::GridSearchConfig resolve_config(const Globals& g, const GridArgs& a, const CLI::App& app) {
  auto config = harness::load_config(a.config);
  if (g.data_root || config.data.root.empty()) config.data.root = g.root();
  if (app.count("--speckle-filter")) config.feature_options.speckle_filter = g.speckle_filter;
  if (app.count("--jobs")) config.jobs = g.jobs;
  if (!a.output.empty()) config.output_dir = a.output;
  config.validate();
  return config;
}

int run_gridsearch(const Globals& g, const GridArgs& a, const CLI::App& app) {
  const auto config = resolve_config(g, a, app);
  const auto log = g.logger();
  const auto result = harness::run_grid_search(config, log);
  const auto scores = harness::score_configs(result.cells);
  if (log) {
    log(std::to_string(result.computed) + " cells computed, " + std::to_string(result.resumed) + " resumed");
  }
  if (scores.empty()) throw FitError("every grid cell failed; see search_summary.json");
  const auto& best = scores[harness::select_best(scores)];
  std::cout << "best: " << best.config_key << "  validation mean IoU " << best.mean(metrics::Metric::IoU)
            << ", total IoU " << best.total_of(metrics::Metric::IoU) << "\n";
  if (a.skip_final) return 0;
  const auto report = harness::final_eval(config, best, log);
  harness::write_final_reports(config.output_dir, report);
  for (const auto& s : report.splits) {
    std::cout << io::split_name(s.split) << ": total IoU " << s.total[static_cast<std::size_t>(metrics::Metric::IoU)]
              << ", mean IoU " << s.mean_based[static_cast<std::size_t>(metrics::Metric::IoU)].mean
              << ", regionwise mean IoU " << s.regionwise.stats(metrics::Metric::IoU).mean << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------ report

struct ReportArgs {
  fs::path run;
  std::vector<std::string> group_by = {"feature_space"};
  int top = 10;
};

int run_report(const ReportArgs& a) {
  const auto cells = harness::load_cells(a.run);
  if (cells.empty()) throw InvalidArgument("no cell results under " + a.run.string());
  auto scores = harness::write_search_reports(a.run, cells);
  for (const auto& group : a.group_by) {
    const auto rows = harness::export_boxplot_data(scores, group);
    harness::write_text_atomic(a.run / ("boxplot_" + group + ".csv"), harness::boxplot_csv(rows));
  }
  std::sort(scores.begin(), scores.end(), [](const auto& x, const auto& y) {
    const auto kx = harness::selection_key(x), ky = harness::selection_key(y);
    return kx != ky ? kx > ky : x.config_key < y.config_key;
  });
  std::cout << "rank,mean_iou,total_iou,seeds,config\n";
  for (int i = 0; i < std::min<int>(a.top, static_cast<int>(scores.size())); ++i) {
    const auto& s = scores[static_cast<std::size_t>(i)];
    std::cout << i + 1 << "," << s.mean(metrics::Metric::IoU) << "," << s.total_of(metrics::Metric::IoU) << ","
              << s.seeds << "," << s.config_key << "\n";
  }
  return 0;
}

// ------------------------------------------------------------------- synth

struct SynthArgs {
  std::string fixture = "separable";
  std::uint64_t seed = 0;
  int tiles = 20;
  int size = 64;
};

int run_synth(const Globals& g, const SynthArgs& a) {
  auto spec = a.fixture == "correlated" ? synthetic::correlated_fixture(a.seed) : synthetic::separable_fixture(a.seed);
  if (a.fixture != "correlated" && a.fixture != "separable") throw InvalidArgument("unknown fixture '" + a.fixture + "'");
  spec.tiles = a.tiles;
  spec.width = spec.height = a.size;
  const auto root = g.root();
  const auto ds = synthetic::generate_dataset(spec, root);
  std::cout << "synthetic " << a.fixture << " dataset in " << root << ": " << ds.tiles_per_split[0] << " train, "
            << ds.tiles_per_split[1] << " valid, " << ds.tiles_per_split[2] << " test, " << ds.tiles_per_split[3]
            << " bolivia tiles\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"floodpix: classical pixel-wise flood mapping on Sentinel-1/2 chips"};
  app.fallthrough();  // global flags may also follow the subcommand
  app.require_subcommand(1);
  Globals g;
  std::string data_root;
  app.add_option("--data-root", data_root, "Dataset root (default: $FLOODPIX_DATA_ROOT, then the current directory)");
  app.add_flag("--speckle-filter", g.speckle_filter, "Apply the Lee sigma filter to SAR bands before featurizing");
  app.add_option("--jobs", g.jobs, "Worker threads")->check(CLI::PositiveNumber);
  app.add_flag("-q,--quiet", g.quiet, "No progress messages");

  ImportArgs import_args;
  auto* import_cmd = app.add_subcommand("import", "Convert exported Sen1Floods11 arrays to the canonical format");
  import_cmd->add_option("--source", import_args.source, "Directory written by export_sen1floods11.py")->required();
  import_cmd->add_option("--csv-dir", import_args.csv_dir, "Directory holding the split CSV files");

  StatsArgs stats_args;
  auto* stats_cmd = app.add_subcommand("stats", "Class and region pixel fractions");
  stats_cmd->add_option("--split", stats_args.splits, "Splits to include");
  stats_cmd->add_option("-o,--output", stats_args.output, "Write the JSON here as well");

  FeaturizeArgs feat_args;
  auto* feat_cmd = app.add_subcommand("featurize", "Export a feature matrix as .npy");
  feat_cmd->add_option("-f,--feature-space", feat_args.feature_space, "e.g. SAR_HSV(O3)+cAWEI+cNDWI")->required();
  feat_cmd->add_option("--split", feat_args.split, "Split to featurize");
  feat_cmd->add_option("-o,--output-dir", feat_args.output_dir, "Output directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train one model");
  train_cmd->add_option("-m,--model", train_args.model, "nb, lda, qda, sgd or gbdt")->required();
  train_cmd->add_option("-f,--feature-space", train_args.feature_space, "Feature space name")->required();
  train_cmd->add_option("-p,--param", train_args.params, "Hyperparameter name=value (repeatable)");
  train_cmd->add_option("--seed", train_args.seed, "Random seed");
  train_cmd->add_option("--split", train_args.split, "Training split");
  train_cmd->add_option("-o,--output", train_args.output, "Model file");

  PredictArgs predict_args;
  auto* predict_cmd = app.add_subcommand("predict", "Write color-coded prediction PNGs and label grids");
  predict_cmd->add_option("-m,--model", predict_args.model, "Model file")->required();
  predict_cmd->add_option("--split", predict_args.split, "Split whose tiles are predicted");
  predict_cmd->add_option("--tile", predict_args.tiles, "Restrict to these tile ids");
  predict_cmd->add_option("-o,--output-dir", predict_args.output_dir, "Output directory");

  EvaluateArgs eval_args;
  auto* eval_cmd = app.add_subcommand("evaluate", "Metric reports of a trained model");
  eval_cmd->add_option("-m,--model", eval_args.model, "Model file")->required();
  eval_cmd->add_option("--split", eval_args.splits, "Splits to evaluate");
  eval_cmd->add_option("-o,--output-dir", eval_args.output_dir, "Output directory");
  eval_cmd->add_option("--zero-division", eval_args.zero_division,
                       "Ratios with a zero denominator: 'one', or 'undefined' to leave them out of means");

  GridArgs grid_args;
  auto* grid_cmd = app.add_subcommand("gridsearch", "Grid search, selection and final evaluation");
  grid_cmd->add_option("-c,--config", grid_args.config, "TOML configuration")->required()->check(CLI::ExistingFile);
  grid_cmd->add_option("-o,--output", grid_args.output, "Override the output directory");
  grid_cmd->add_flag("--skip-final", grid_args.skip_final, "Stop after selection");

  ReportArgs report_args;
  auto* report_cmd = app.add_subcommand("report", "Rebuild summaries and boxplot tables from a run directory");
  report_cmd->add_option("--run", report_args.run, "Run output directory")->required()->check(CLI::ExistingDirectory);
  report_cmd->add_option("--group-by", report_args.group_by, "model, feature_space or a hyperparameter name");
  report_cmd->add_option("--top", report_args.top, "Rows of the ranking to print");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic dataset under the data root");
  synth_cmd->add_option("--fixture", synth_args.fixture, "separable or correlated");
  synth_cmd->add_option("--seed", synth_args.seed, "Generator seed");
  synth_cmd->add_option("--tiles", synth_args.tiles, "Tiles in train+valid+test");
  synth_cmd->add_option("--size", synth_args.size, "Tile width and height");

  CLI11_PARSE(app, argc, argv);
  if (!data_root.empty()) g.data_root = fs::path(data_root);

  try {
    if (*import_cmd) return run_import(g, import_args);
    if (*stats_cmd) return run_stats(g, stats_args);
    if (*feat_cmd) return run_featurize(g, feat_args);
    if (*train_cmd) return run_train(g, train_args);
    if (*predict_cmd) return run_predict(g, predict_args);
    if (*eval_cmd) return run_evaluate(g, eval_args);
    if (*grid_cmd) return run_gridsearch(g, grid_args, app);
    if (*report_cmd) return run_report(report_args);
    if (*synth_cmd) return run_synth(g, synth_args);
  } catch (const floodpix::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
