#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "floodpix/features.hpp"
#include "floodpix/metrics.hpp"
#include "floodpix/model.hpp"
#include "floodpix/raster_io.hpp"

namespace floodpix::harness {

using io::SplitName;

/// Manifest files per split. Relative paths resolve against the data root;
/// missing entries default to `<root>/manifests/<split>.json`.
struct DataSource {
  std::filesystem::path root;
  std::map<SplitName, std::filesystem::path> manifests;

  std::filesystem::path manifest_path(SplitName split) const;
  io::SplitManifest load(SplitName split) const;
};

struct GridSearchConfig {
  ModelKind model = ModelKind::GBDT;
  std::vector<std::string> feature_spaces;
  /// Cartesian hyperparameter grid: parameter name -> candidate values.
  /// Missing parameters use the model's default grid.
  std::map<std::string, std::vector<nlohmann::json>> grid;
  std::vector<std::uint64_t> search_seeds = {0, 1, 2, 3};
  std::vector<std::uint64_t> final_seeds = {0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
  SplitName train_split = SplitName::Train;
  SplitName select_split = SplitName::Valid;
  std::vector<SplitName> final_splits = {SplitName::Test, SplitName::BoliviaTest};
  features::FeatureOptions feature_options;
  /// Ratios with a zero denominator: 1, or undefined and left out of means.
  metrics::ZeroDivision zero_division = metrics::ZeroDivision::One;
  DataSource data;
  std::filesystem::path output_dir = "runs/default";
  int jobs = 1;
  bool save_models = false;

  /// Throws InvalidArgument for empty grids, duplicate seeds, unknown
  /// feature spaces or parameters the model does not take.
  void validate() const;
  nlohmann::json to_json() const;
};

/// Parses the TOML configuration format. `base_dir` resolves relative paths.
GridSearchConfig parse_config_toml(std::string_view text, const std::filesystem::path& base_dir = {});
GridSearchConfig load_config(const std::filesystem::path& file);
/// TOML text of the fully resolved configuration.
std::string config_to_toml(const GridSearchConfig& config);
/// TOML text of a JSON object (nulls are dropped).
std::string json_to_toml(const nlohmann::json& object);

/// Default value list of every hyperparameter of a model kind. For GBDT the
/// leaf grid depends on the feature space and is filled in by expand_grid.
std::map<std::string, std::vector<nlohmann::json>> default_grid(ModelKind kind);
std::vector<std::string> allowed_params(ModelKind kind);

struct GridCell {
  ModelKind model = ModelKind::GBDT;
  std::string feature_space;
  nlohmann::json params = nlohmann::json::object();
  std::uint64_t seed = 0;

  /// Identity of the configuration, independent of the seed.
  std::string config_key() const;
  std::string key() const;
  /// Stable file stem derived from key().
  std::string file_stem() const;
};

/// Every (feature space x grid point x seed), feature spaces in config
/// order, grid points in lexicographic parameter order, seeds innermost.
std::vector<GridCell> expand_grid(const GridSearchConfig& config, std::span<const std::uint64_t> seeds);

/// Trains a model of `kind` with JSON hyperparameters on a feature matrix.
std::unique_ptr<Model> train_model(ModelKind kind, const nlohmann::json& params, std::uint64_t seed,
                                   const features::FeatureMatrix& data, int threads = 1);

/// Per-tile confusion counts of the model over the matrix rows, one entry
/// per matrix tile (tiles without rows get zero counts).
std::vector<metrics::TileCounts> evaluate_counts(const Model& model, const features::FeatureMatrix& data);

struct CellResult {
  GridCell cell;
  bool ok = false;
  std::string error;
  std::vector<metrics::TileCounts> tiles;
  std::optional<metrics::MetricReport> report;
  metrics::ZeroDivision zero_division = metrics::ZeroDivision::One;
  double wall_seconds = 0.0;
  std::string model_path;

  nlohmann::json to_json(bool include_timing = true) const;
  static CellResult from_json(const nlohmann::json& j);
};

struct ExperimentResult {
  std::vector<CellResult> cells;  // sorted by cell key
  std::size_t computed = 0;       // cells trained in this run
  std::size_t resumed = 0;        // cells loaded from earlier runs
};

using Logger = std::function<void(const std::string&)>;

/// Trains every cell on the train split and evaluates it on the selection
/// split. Each finished cell is written atomically under
/// `<output>/cells/`; cells already present are loaded instead of rerun.
/// A failing fit is recorded in its cell and does not stop the search.
ExperimentResult run_grid_search(const GridSearchConfig& config, const Logger& log = {});

/// Loads every cell file of an output directory.
std::vector<CellResult> load_cells(const std::filesystem::path& output_dir);

/// Seed-averaged validation metrics of one configuration.
struct ConfigScore {
  std::string config_key;
  ModelKind model = ModelKind::GBDT;
  std::string feature_space;
  nlohmann::json params;
  std::size_t seeds = 0;
  std::size_t failed_seeds = 0;
  std::array<double, metrics::kMetricCount> mean_based{};
  std::array<double, metrics::kMetricCount> total{};

  double mean(metrics::Metric m) const { return mean_based[static_cast<std::size_t>(m)]; }
  double total_of(metrics::Metric m) const { return total[static_cast<std::size_t>(m)]; }
  nlohmann::json to_json() const;
};

/// Groups cells by configuration and averages metric values over the seeds
/// that succeeded. Configurations whose every seed failed are dropped.
/// Output is sorted by config key.
std::vector<ConfigScore> score_configs(std::span<const CellResult> cells);

/// Ranking vector compared lexicographically, larger is better: mean IoU,
/// total IoU, mean ACC, total ACC, total precision, total recall, total
/// recall_dry, total F1. NaN ranks below every number.
std::array<double, 8> selection_key(const ConfigScore& score);

/// Index of the best configuration; remaining ties go to the smallest
/// config key. Throws InvalidArgument on empty input.
std::size_t select_best(std::span<const ConfigScore> scores);

struct SplitEvaluation {
  SplitName split = SplitName::Test;
  struct PerSeed {
    std::uint64_t seed = 0;
    std::vector<metrics::TileCounts> tiles;
    metrics::MetricReport report;
    metrics::RegionwiseReport regionwise;
  };
  std::vector<PerSeed> per_seed;
  /// Metric values averaged over seeds.
  std::array<metrics::MeanStd, metrics::kMetricCount> mean_based{};
  std::array<double, metrics::kMetricCount> total{};
  /// Per-region metrics averaged over seeds, then summarized.
  metrics::RegionwiseReport regionwise;
  /// Region water-pixel count against each seed-averaged region metric.
  /// Absent when fewer than three regions or a constant series.
  std::map<std::string, std::optional<metrics::CorrelationResult>> pearson;
  std::map<std::string, std::optional<metrics::CorrelationResult>> spearman;

  nlohmann::json to_json() const;
};

struct FinalReport {
  ConfigScore chosen;
  std::vector<std::uint64_t> seeds;
  std::vector<SplitEvaluation> splits;

  nlohmann::json to_json() const;
};

/// Retrains the chosen configuration once per final seed on the train split
/// and evaluates each model on every final split.
FinalReport final_eval(const GridSearchConfig& config, const ConfigScore& chosen, const Logger& log = {});

/// Averages the per-seed evaluations into `eval`'s summary fields.
void summarize_seeds(SplitEvaluation& eval);

struct BoxplotRow {
  std::string group;
  std::size_t count = 0;
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Linearly interpolated quantile of ascending values, q in [0, 1].
double quantile_linear(std::span<const double> sorted, double q);

/// Distribution of seed-averaged mean IoU per value of `group_by`
/// ("model", "feature_space" or a hyperparameter name), sorted by max
/// descending, then group name. Throws InvalidArgument for an unknown name.
std::vector<BoxplotRow> export_boxplot_data(std::span<const ConfigScore> scores, std::string_view group_by);
std::string boxplot_csv(std::span<const BoxplotRow> rows);

/// Serialized model plus everything needed to featurize new tiles.
struct ModelArtifact {
  std::string feature_space;
  features::FeatureOptions feature_options;
  nlohmann::json params;
  std::uint64_t seed = 0;
  std::shared_ptr<const Model> model;

  nlohmann::json to_json() const;
  static ModelArtifact from_json(const nlohmann::json& j);
};

void save_artifact(const ModelArtifact& artifact, const std::filesystem::path& file);
ModelArtifact load_artifact(const std::filesystem::path& file);

/// Writes `text` to `file` via a temporary sibling and rename.
void write_text_atomic(const std::filesystem::path& file, const std::string& text);
std::string read_text(const std::filesystem::path& file);

/// Writes search_summary.json, search_results.csv and the feature-space
/// boxplot CSV for the given cells. Returns the scores.
std::vector<ConfigScore> write_search_reports(const std::filesystem::path& output_dir,
                                              std::span<const CellResult> cells);
/// Writes final_report.json and per-split CSV tables.
void write_final_reports(const std::filesystem::path& output_dir, const FinalReport& report);

// ------------------------------------------------------------ prediction

struct PredictionRaster {
  int width = 0;
  int height = 0;
  /// -1 where no prediction exists (NoData truth or invalid features).
  std::vector<std::int8_t> labels;
  std::vector<std::uint8_t> rgb;  // width * height * 3
};

inline constexpr std::array<std::uint8_t, 3> kColorTruePositive = {0, 0, 255};
inline constexpr std::array<std::uint8_t, 3> kColorFalseNegative = {255, 0, 255};
inline constexpr std::array<std::uint8_t, 3> kColorFalsePositive = {0, 255, 0};
inline constexpr std::array<std::uint8_t, 3> kColorNoData = {128, 128, 128};

/// Predicts every pixel and paints TP/FN/FP over an RGB composite of
/// B4/B3/B2 (grayscale from another band when those are absent). Pixels
/// with NoData truth are gray.
PredictionRaster render_prediction(const Model& model, const features::FeatureSpaceSpec& spec,
                                   const features::FeatureOptions& options, const io::Tile& tile,
                                   const io::LabelGrid& truth);

void write_png(const std::filesystem::path& file, int width, int height, std::span<const std::uint8_t> rgb);
std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& file, int* width, int* height);

/// PNG plus int8 label grid (`<stem>.png`, `<stem>.i8` with sidecar).
void export_prediction_raster(const Model& model, const features::FeatureSpaceSpec& spec,
                              const features::FeatureOptions& options, const io::Tile& tile,
                              const io::LabelGrid& truth, const std::filesystem::path& stem);

}  // namespace floodpix::harness
