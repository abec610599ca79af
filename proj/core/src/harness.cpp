#include "floodpix/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "floodpix/classifiers.hpp"
#include "floodpix/error.hpp"
#include "floodpix/gbdt.hpp"

namespace floodpix::harness {
namespace fs = std::filesystem;
using metrics::Metric;

namespace {

constexpr int kArtifactVersion = 1;

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool deterministic(ModelKind kind) {
  return kind == ModelKind::NaiveBayes || kind == ModelKind::LDA || kind == ModelKind::QDA;
}

double number_param(const nlohmann::json& params, const char* name, double fallback) {
  if (!params.contains(name)) return fallback;
  const auto& v = params.at(name);
  if (!v.is_number()) throw InvalidArgument(std::string("parameter '") + name + "' must be a number");
  return v.get<double>();
}

std::int64_t integer_param(const nlohmann::json& params, const char* name, std::int64_t fallback) {
  if (!params.contains(name)) return fallback;
  const auto& v = params.at(name);
  if (v.is_number_integer()) return v.get<std::int64_t>();
  if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>()) {
    return static_cast<std::int64_t>(v.get<double>());
  }
  throw InvalidArgument(std::string("parameter '") + name + "' must be an integer");
}

classifiers::Priors priors_param(const nlohmann::json& params) {
  if (!params.contains("priors") || params.at("priors").is_null()) return std::nullopt;
  return params.at("priors").get<std::array<double, 2>>();
}

std::string csv_quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt6(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

nlohmann::json number_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

nlohmann::json metric_array_json(const std::array<double, metrics::kMetricCount>& values) {
  nlohmann::json j = nlohmann::json::object();
  for (Metric m : metrics::kAllMetrics) j[std::string(metric_name(m))] = number_or_null(values[static_cast<std::size_t>(m)]);
  return j;
}

nlohmann::json tile_counts_json(std::span<const metrics::TileCounts> tiles) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& t : tiles) arr.push_back({{"tile_id", t.tile_id}, {"region", t.region}, {"counts", t.counts.to_json()}});
  return arr;
}

std::vector<metrics::TileCounts> tile_counts_from_json(const nlohmann::json& arr) {
  std::vector<metrics::TileCounts> out;
  for (const auto& t : arr) {
    out.push_back({t.at("tile_id").get<std::string>(), t.at("region").get<std::string>(),
                   metrics::ConfusionCounts::from_json(t.at("counts"))});
  }
  return out;
}

std::optional<metrics::MetricReport> try_aggregate(std::span<const metrics::TileCounts> tiles,
                                                   metrics::ZeroDivision policy) {
  metrics::ConfusionCounts pooled;
  for (const auto& t : tiles) pooled += t.counts;
  if (pooled.total() == 0) return std::nullopt;
  return metrics::aggregate(tiles, policy);
}

std::vector<io::BandId> union_bands(std::span<const std::string> spaces) {
  std::set<io::BandId> bands;
  for (const auto& name : spaces) {
    for (io::BandId b : features::parse_feature_space(name).required_bands()) bands.insert(b);
  }
  return {bands.begin(), bands.end()};
}

class LogSink {
 public:
  explicit LogSink(const Logger& log) : log_(log) {}
  void operator()(const std::string& msg) {
    if (!log_) return;
    std::lock_guard lock(mutex_);
    log_(msg);
  }

 private:
  const Logger& log_;
  std::mutex mutex_;
};

/// Runs `tasks` on up to `jobs` threads. The first exception is rethrown
/// after every worker has stopped.
void run_pool(std::size_t count, int jobs, const std::function<void(std::size_t)>& task) {
  const std::size_t workers = std::min<std::size_t>(count, static_cast<std::size_t>(std::max(jobs, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(count);
        return;
      }
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

// --------------------------------------------------------------- data, io

fs::path DataSource::manifest_path(SplitName split) const {
  const auto it = manifests.find(split);
  fs::path p = it != manifests.end() ? it->second : fs::path("manifests") / (std::string(io::split_name(split)) + ".json");
  return p.is_absolute() ? p : root / p;
}

io::SplitManifest DataSource::load(SplitName split) const {
  const fs::path p = manifest_path(split);
  if (!fs::exists(p)) {
    throw IoError("manifest for split '" + std::string(io::split_name(split)) + "' not found: " + p.string());
  }
  return io::load_manifest(p, split, root);
}

void write_text_atomic(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  const fs::path tmp = file.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << text;
    if (!out.flush()) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, file);
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot read " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// -------------------------------------------------------------- the grid

std::vector<std::string> allowed_params(ModelKind kind) {
  switch (kind) {
    case ModelKind::NaiveBayes: return {"priors"};
    case ModelKind::LDA: return {"priors", "shrinkage"};
    case ModelKind::QDA: return {"priors", "reg_param"};
    case ModelKind::LinearSGD: return {"alpha", "loss", "max_epochs", "rebalance"};
    case ModelKind::GBDT: return {"lambda", "learning_rate", "max_bins", "max_leaves", "n_trees", "subsample_size"};
  }
  return {};
}

std::map<std::string, std::vector<nlohmann::json>> default_grid(ModelKind kind) {
  using J = nlohmann::json;
  switch (kind) {
    case ModelKind::NaiveBayes: return {};
    case ModelKind::LDA: {
      std::vector<J> rho;
      for (int i = 0; i <= 10; ++i) rho.emplace_back(i / 10.0);
      return {{"shrinkage", rho}};
    }
    case ModelKind::QDA:
      return {{"reg_param", {J(0.0), J(1e-5), J(1e-4), J(1e-3), J(0.01), J(0.1), J(0.5), J(1.0), J(2.0), J(4.0),
                             J(8.0), J(10.0)}}};
    case ModelKind::LinearSGD:
      return {{"loss", {J("hinge"), J("log_loss"), J("modified_huber")}},
              {"alpha", {J(1.0), J(0.1), J(0.01), J(0.001), J(0.0001)}},
              {"rebalance", {J(false), J(true)}}};
    case ModelKind::GBDT:
      return {{"n_trees", {J(50), J(100), J(200)}},
              {"lambda", {J(1.0)}},
              {"learning_rate", {J(0.1)}},
              {"subsample_size", {J(262144)}}};
  }
  return {};
}

void GridSearchConfig::validate() const {
  if (feature_spaces.empty()) throw InvalidArgument("no feature spaces configured");
  std::set<std::string> names;
  for (const auto& f : feature_spaces) {
    const auto canonical = features::format_feature_space(features::parse_feature_space(f));
    if (!names.insert(canonical).second) throw InvalidArgument("feature space listed twice: " + f);
  }
  const auto allowed = allowed_params(model);
  for (const auto& [name, values] : grid) {
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      throw InvalidArgument("model '" + std::string(model_kind_name(model)) + "' has no parameter '" + name + "'");
    }
    if (values.empty()) throw InvalidArgument("grid for '" + name + "' is empty");
  }
  for (const auto* seeds : {&search_seeds, &final_seeds}) {
    if (seeds->empty()) throw InvalidArgument("seed list is empty");
    if (std::set<std::uint64_t>(seeds->begin(), seeds->end()).size() != seeds->size()) {
      throw InvalidArgument("seed list contains duplicates");
    }
  }
  if (jobs < 1) throw InvalidArgument("jobs must be at least 1");
}

std::string GridCell::config_key() const {
  return std::string(model_kind_name(model)) + "|" + feature_space + "|" + params.dump();
}

std::string GridCell::key() const { return config_key() + "|seed=" + std::to_string(seed); }

std::string GridCell::file_stem() const {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(key())));
  return std::string(model_kind_name(model)) + "_" + buf;
}

std::vector<GridCell> expand_grid(const GridSearchConfig& config, std::span<const std::uint64_t> seeds) {
  std::vector<GridCell> cells;
  for (const auto& name : config.feature_spaces) {
    const auto spec = features::parse_feature_space(name);
    auto grid = default_grid(config.model);
    for (const auto& [k, v] : config.grid) grid[k] = v;
    if (config.model == ModelKind::GBDT && !config.grid.contains("max_leaves")) {
      std::vector<nlohmann::json> leaves;
      for (int l : gbdt::max_leaves_grid(static_cast<std::size_t>(spec.dimensionality()))) leaves.emplace_back(l);
      grid["max_leaves"] = leaves;
    }
    std::vector<std::pair<std::string, std::vector<nlohmann::json>>> axes(grid.begin(), grid.end());
    std::vector<std::size_t> pos(axes.size(), 0);
    for (;;) {
      nlohmann::json params = nlohmann::json::object();
      for (std::size_t a = 0; a < axes.size(); ++a) params[axes[a].first] = axes[a].second[pos[a]];
      for (std::uint64_t seed : seeds) {
        cells.push_back({config.model, features::format_feature_space(spec), params, seed});
      }
      bool advanced = false;
      for (std::size_t a = axes.size(); a-- > 0;) {
        if (++pos[a] < axes[a].second.size()) {
          advanced = true;
          break;
        }
        pos[a] = 0;
      }
      if (!advanced) break;
    }
  }
  return cells;
}

// ---------------------------------------------------------- train, score

std::unique_ptr<Model> train_model(ModelKind kind, const nlohmann::json& params, std::uint64_t seed,
                                   const features::FeatureMatrix& data, int threads) {
  const auto allowed = allowed_params(kind);
  for (const auto& [name, _] : params.items()) {
    if (std::find(allowed.begin(), allowed.end(), name) == allowed.end()) {
      throw InvalidArgument("model '" + std::string(model_kind_name(kind)) + "' has no parameter '" + name + "'");
    }
  }
  const FeatureView x = data.view();
  const std::span<const io::Label> y = data.labels;
  switch (kind) {
    case ModelKind::NaiveBayes:
      return std::make_unique<classifiers::GaussianNB>(classifiers::fit_naive_bayes(x, y, priors_param(params)));
    case ModelKind::LDA:
      return std::make_unique<classifiers::LDA>(
          classifiers::fit_lda(x, y, number_param(params, "shrinkage", 0.0), priors_param(params)));
    case ModelKind::QDA:
      return std::make_unique<classifiers::QDA>(
          classifiers::fit_qda(x, y, number_param(params, "reg_param", 0.0), priors_param(params)));
    case ModelKind::LinearSGD: {
      classifiers::SgdParams p;
      if (params.contains("loss")) p.loss = classifiers::parse_sgd_loss(params.at("loss").get<std::string>());
      p.alpha = number_param(params, "alpha", p.alpha);
      if (params.contains("rebalance")) p.rebalance = params.at("rebalance").get<bool>();
      p.schedule.max_epochs = static_cast<int>(integer_param(params, "max_epochs", p.schedule.max_epochs));
      p.schedule.min_epochs = std::min(p.schedule.min_epochs, p.schedule.max_epochs);
      p.seed = seed;
      return std::make_unique<classifiers::LinearSGD>(classifiers::fit_sgd(x, y, p));
    }
    case ModelKind::GBDT: {
      gbdt::GBDTParams p;
      p.n_trees = static_cast<int>(integer_param(params, "n_trees", p.n_trees));
      p.max_leaves = static_cast<int>(integer_param(params, "max_leaves", p.max_leaves));
      p.lambda = number_param(params, "lambda", p.lambda);
      p.learning_rate = number_param(params, "learning_rate", p.learning_rate);
      p.subsample_size = static_cast<std::size_t>(integer_param(params, "subsample_size", 0));
      p.max_bins = static_cast<int>(integer_param(params, "max_bins", p.max_bins));
      p.seed = seed;
      p.threads = threads;
      return std::make_unique<gbdt::GBDTModel>(gbdt::fit_gbdt(x, y, p));
    }
  }
  throw InvalidArgument("unknown model kind");
}

std::vector<metrics::TileCounts> evaluate_counts(const Model& model, const features::FeatureMatrix& data) {
  std::vector<metrics::TileCounts> out(data.tiles.size());
  for (std::size_t t = 0; t < data.tiles.size(); ++t) {
    out[t].tile_id = data.tiles[t].tile_id;
    out[t].region = data.tiles[t].region;
  }
  const auto pred = model.predict(data.view());
  for (std::size_t i = 0; i < data.rows; ++i) {
    auto& c = out[data.provenance[i].tile].counts;
    const bool p = pred[i] == io::Label::Water;
    const bool t = data.labels[i] == io::Label::Water;
    if (p && t) ++c.tp;
    else if (p) ++c.fp;
    else if (t) ++c.fn;
    else ++c.tn;
  }
  return out;
}

nlohmann::json CellResult::to_json(bool include_timing) const {
  nlohmann::json j = {{"key", cell.key()},
                      {"model", std::string(model_kind_name(cell.model))},
                      {"feature_space", cell.feature_space},
                      {"params", cell.params},
                      {"seed", cell.seed},
                      {"status", ok ? "ok" : "failed"}};
  if (!ok) j["error"] = error;
  j["tiles"] = tile_counts_json(tiles);
  j["report"] = report ? report->to_json() : nlohmann::json(nullptr);
  j["zero_division"] = std::string(metrics::zero_division_name(zero_division));
  if (!model_path.empty()) j["model_path"] = model_path;
  if (include_timing) j["wall_seconds"] = wall_seconds;
  return j;
}

CellResult CellResult::from_json(const nlohmann::json& j) {
  CellResult r;
  r.cell.model = parse_model_kind(j.at("model").get<std::string>());
  r.cell.feature_space = j.at("feature_space").get<std::string>();
  r.cell.params = j.at("params");
  r.cell.seed = j.at("seed").get<std::uint64_t>();
  r.ok = j.at("status").get<std::string>() == "ok";
  r.error = j.value("error", std::string{});
  r.tiles = tile_counts_from_json(j.at("tiles"));
  r.zero_division = metrics::parse_zero_division(j.value("zero_division", std::string("one")));
  if (r.ok) r.report = try_aggregate(r.tiles, r.zero_division);
  r.wall_seconds = j.value("wall_seconds", 0.0);
  r.model_path = j.value("model_path", std::string{});
  if (j.at("key").get<std::string>() != r.cell.key()) throw InvalidArgument("cell key does not match its fields");
  return r;
}

std::vector<CellResult> load_cells(const fs::path& output_dir) {
  std::vector<CellResult> out;
  const fs::path dir = output_dir / "cells";
  if (!fs::exists(dir)) return out;
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    try {
      out.push_back(CellResult::from_json(nlohmann::json::parse(read_text(f))));
    } catch (const std::exception&) {
      // A torn or foreign file is treated as absent; the cell is recomputed.
    }
  }
  std::sort(out.begin(), out.end(), [](const CellResult& a, const CellResult& b) { return a.cell.key() < b.cell.key(); });
  return out;
}

ExperimentResult run_grid_search(const GridSearchConfig& config, const Logger& logger) {
  config.validate();
  LogSink log(logger);
  fs::create_directories(config.output_dir / "cells");
  write_text_atomic(config.output_dir / "resolved_config.toml", config_to_toml(config));

  const auto cells = expand_grid(config, config.search_seeds);
  std::map<std::string, CellResult> done;
  for (auto& c : load_cells(config.output_dir)) done.emplace(c.cell.key(), std::move(c));

  ExperimentResult result;
  std::vector<std::string> spaces;
  for (const auto& c : cells) {
    if (done.contains(c.key())) continue;
    if (std::find(spaces.begin(), spaces.end(), c.feature_space) == spaces.end()) spaces.push_back(c.feature_space);
  }

  if (!spaces.empty()) {
    const auto bands = union_bands(spaces);
    const auto train_tiles = io::load_tiles(config.data.load(config.train_split), bands);
    const auto eval_tiles = io::load_tiles(config.data.load(config.select_split), bands);
    log("loaded " + std::to_string(train_tiles.size()) + " training and " + std::to_string(eval_tiles.size()) +
        " selection tiles");

    for (const auto& space : spaces) {
      const auto spec = features::parse_feature_space(space);
      const auto train = features::build_feature_matrix(spec, train_tiles, config.feature_options);
      const auto eval = features::build_feature_matrix(spec, eval_tiles, config.feature_options);

      // One task per configuration for deterministic models, one per cell otherwise.
      std::vector<std::vector<GridCell>> tasks;
      std::map<std::string, std::size_t> by_config;
      for (const auto& c : cells) {
        if (c.feature_space != space || done.contains(c.key())) continue;
        if (deterministic(c.model)) {
          const auto [it, fresh] = by_config.emplace(c.config_key(), tasks.size());
          if (fresh) tasks.emplace_back();
          tasks[it->second].push_back(c);
        } else {
          tasks.push_back({c});
        }
      }

      std::mutex done_mutex;
      run_pool(tasks.size(), config.jobs, [&](std::size_t t) {
        const auto& group = tasks[t];
        const auto start = std::chrono::steady_clock::now();
        CellResult base;
        base.zero_division = config.zero_division;
        std::unique_ptr<Model> model;
        try {
          model = train_model(group.front().model, group.front().params, group.front().seed, train);
          base.tiles = evaluate_counts(*model, eval);
          base.report = try_aggregate(base.tiles, config.zero_division);
          if (!base.report) throw InvalidArgument("selection split has no labelled pixels");
          base.ok = true;
        } catch (const std::exception& e) {
          base.ok = false;
          base.error = e.what();
          base.tiles.clear();
          base.report.reset();
        }
        base.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        for (const auto& cell : group) {
          CellResult r = base;
          r.cell = cell;
          if (config.save_models && model) {
            const fs::path path = config.output_dir / "models" / (cell.file_stem() + ".json");
            save_artifact({cell.feature_space, config.feature_options, cell.params, cell.seed,
                           std::shared_ptr<const Model>(model_from_json(model->to_json()))},
                          path);
            r.model_path = fs::relative(path, config.output_dir).generic_string();
          }
          write_text_atomic(config.output_dir / "cells" / (cell.file_stem() + ".json"), r.to_json().dump(2) + "\n");
          log((r.ok ? "done   " : "FAILED ") + cell.key() +
              (r.ok ? " iou=" + fmt6(r.report->total.iou()) : ": " + r.error));
          std::lock_guard lock(done_mutex);
          done.emplace(cell.key(), std::move(r));
          ++result.computed;
        }
      });
    }
  }

  std::set<std::string> wanted;
  for (const auto& c : cells) wanted.insert(c.key());
  for (auto& [key, r] : done) {
    if (wanted.contains(key)) result.cells.push_back(std::move(r));
  }
  result.resumed = result.cells.size() - result.computed;
  write_search_reports(config.output_dir, result.cells);
  return result;
}

nlohmann::json ConfigScore::to_json() const {
  return {{"config_key", config_key},
          {"model", std::string(model_kind_name(model))},
          {"feature_space", feature_space},
          {"params", params},
          {"seeds", seeds},
          {"failed_seeds", failed_seeds},
          {"mean", metric_array_json(mean_based)},
          {"total", metric_array_json(total)}};
}

std::vector<ConfigScore> score_configs(std::span<const CellResult> cells) {
  std::map<std::string, ConfigScore> groups;
  for (const auto& c : cells) {
    auto& g = groups[c.cell.config_key()];
    if (g.config_key.empty()) {
      g.config_key = c.cell.config_key();
      g.model = c.cell.model;
      g.feature_space = c.cell.feature_space;
      g.params = c.cell.params;
    }
    if (!c.ok || !c.report) {
      ++g.failed_seeds;
      continue;
    }
    ++g.seeds;
    for (Metric m : metrics::kAllMetrics) {
      const auto i = static_cast<std::size_t>(m);
      g.mean_based[i] += c.report->mean(m).mean;
      g.total[i] += c.report->total[m];
    }
  }
  std::vector<ConfigScore> out;
  for (auto& [key, g] : groups) {
    if (g.seeds == 0) continue;
    for (std::size_t i = 0; i < metrics::kMetricCount; ++i) {
      g.mean_based[i] /= static_cast<double>(g.seeds);
      g.total[i] /= static_cast<double>(g.seeds);
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::array<double, 8> selection_key(const ConfigScore& s) {
  std::array<double, 8> k = {s.mean(Metric::IoU),          s.total_of(Metric::IoU),    s.mean(Metric::Acc),
                             s.total_of(Metric::Acc),       s.total_of(Metric::Precision), s.total_of(Metric::Recall),
                             s.total_of(Metric::RecallDry), s.total_of(Metric::F1)};
  for (double& v : k) {
    if (std::isnan(v)) v = -std::numeric_limits<double>::infinity();
  }
  return k;
}

std::size_t select_best(std::span<const ConfigScore> scores) {
  if (scores.empty()) throw InvalidArgument("no configuration to select from");
  std::size_t best = 0;
  auto best_key = selection_key(scores[0]);
  for (std::size_t i = 1; i < scores.size(); ++i) {
    const auto k = selection_key(scores[i]);
    if (k > best_key || (k == best_key && scores[i].config_key < scores[best].config_key)) {
      best = i;
      best_key = k;
    }
  }
  return best;
}

// ------------------------------------------------------------- final eval

void summarize_seeds(SplitEvaluation& eval) {
  const auto n = static_cast<double>(eval.per_seed.size());
  eval.mean_based = {};
  eval.total = {};
  std::map<std::string, metrics::RegionEntry> regions;
  std::map<std::string, std::size_t> region_seen;
  for (const auto& s : eval.per_seed) {
    for (Metric m : metrics::kAllMetrics) {
      const auto i = static_cast<std::size_t>(m);
      eval.mean_based[i].mean += s.report.mean(m).mean / n;
      eval.mean_based[i].std += s.report.mean(m).std / n;
      eval.mean_based[i].n = s.report.mean(m).n;
      eval.total[i] += s.report.total[m] / n;
    }
    for (const auto& r : s.regionwise.regions) {
      auto& e = regions[r.region];
      e.region = r.region;
      e.counts += r.counts;
      e.water_pixels = r.water_pixels;
      for (Metric m : metrics::kAllMetrics) e.metrics[m] += r.metrics[m];
      ++region_seen[r.region];
    }
  }
  eval.regionwise = {};
  for (auto& [name, e] : regions) {
    for (Metric m : metrics::kAllMetrics) e.metrics[m] /= static_cast<double>(region_seen[name]);
    eval.regionwise.regions.push_back(e);
  }
  eval.pearson.clear();
  eval.spearman.clear();
  std::vector<double> water;
  for (const auto& e : eval.regionwise.regions) water.push_back(static_cast<double>(e.water_pixels));
  for (Metric m : metrics::kAllMetrics) {
    std::vector<double> values;
    for (const auto& e : eval.regionwise.regions) values.push_back(e.metrics[m]);
    if (!values.empty()) eval.regionwise.summary[static_cast<std::size_t>(m)] = metrics::summarize(values);
    const std::string name(metric_name(m));
    eval.pearson[name] = std::nullopt;
    eval.spearman[name] = std::nullopt;
    if (values.size() < 3) continue;
    try {
      eval.pearson[name] = metrics::correlation_test(water, values, metrics::CorrelationKind::Pearson);
      eval.spearman[name] = metrics::correlation_test(water, values, metrics::CorrelationKind::Spearman);
    } catch (const InvalidArgument&) {
      // Constant series: no test.
    }
  }
}

nlohmann::json SplitEvaluation::to_json() const {
  auto corr_json = [](const std::map<std::string, std::optional<metrics::CorrelationResult>>& c) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : c) {
      j[k] = v ? nlohmann::json{{"coefficient", number_or_null(v->coefficient)}, {"p_value", number_or_null(v->p_value)}}
               : nlohmann::json(nullptr);
    }
    return j;
  };
  nlohmann::json mean = nlohmann::json::object(), stdev = nlohmann::json::object();
  for (Metric m : metrics::kAllMetrics) {
    mean[std::string(metric_name(m))] = number_or_null(mean_based[static_cast<std::size_t>(m)].mean);
    stdev[std::string(metric_name(m))] = number_or_null(mean_based[static_cast<std::size_t>(m)].std);
  }
  nlohmann::json seeds = nlohmann::json::array();
  for (const auto& s : per_seed) {
    seeds.push_back({{"seed", s.seed},
                     {"report", s.report.to_json()},
                     {"regionwise", s.regionwise.to_json()},
                     {"tiles", tile_counts_json(s.tiles)}});
  }
  return {{"split", std::string(io::split_name(split))},
          {"seed_averaged",
           {{"mean", mean},
            {"std", stdev},
            {"total", metric_array_json(total)},
            {"regionwise", regionwise.to_json()},
            {"correlation_water_pixels", {{"pearson", corr_json(pearson)}, {"spearman", corr_json(spearman)}}}}},
          {"per_seed", seeds}};
}

nlohmann::json FinalReport::to_json() const {
  nlohmann::json splits_json = nlohmann::json::object();
  for (const auto& s : splits) splits_json[std::string(io::split_name(s.split))] = s.to_json();
  return {{"chosen", chosen.to_json()}, {"seeds", seeds}, {"splits", splits_json}};
}

FinalReport final_eval(const GridSearchConfig& config, const ConfigScore& chosen, const Logger& logger) {
  LogSink log(logger);
  FinalReport report;
  report.chosen = chosen;
  report.seeds = config.final_seeds;
  const auto spec = features::parse_feature_space(chosen.feature_space);
  const auto bands = spec.required_bands();

  std::vector<io::SplitManifest> manifests;
  for (SplitName s : config.final_splits) manifests.push_back(config.data.load(s));
  const auto train_tiles = io::load_tiles(config.data.load(config.train_split), bands);
  const auto train = features::build_feature_matrix(spec, train_tiles, config.feature_options);
  std::vector<features::FeatureMatrix> eval;
  for (const auto& m : manifests) {
    eval.push_back(features::build_feature_matrix(spec, io::load_tiles(m, bands), config.feature_options));
  }
  for (SplitName s : config.final_splits) report.splits.push_back({s, {}, {}, {}, {}, {}, {}});

  std::vector<std::vector<SplitEvaluation::PerSeed>> per_split(config.final_splits.size(),
                                                               std::vector<SplitEvaluation::PerSeed>(config.final_seeds.size()));
  std::shared_ptr<const Model> shared;
  if (deterministic(chosen.model)) shared = train_model(chosen.model, chosen.params, config.final_seeds.front(), train);

  run_pool(config.final_seeds.size(), config.jobs, [&](std::size_t k) {
    const std::uint64_t seed = config.final_seeds[k];
    std::shared_ptr<const Model> model = shared ? shared : train_model(chosen.model, chosen.params, seed, train);
    if (k == 0 || config.save_models) {
      const ModelArtifact artifact{chosen.feature_space, config.feature_options, chosen.params, seed, model};
      save_artifact(artifact, config.output_dir / "final" / "models" / ("seed_" + std::to_string(seed) + ".json"));
      if (k == 0) save_artifact(artifact, config.output_dir / "final" / "model.json");
    }
    for (std::size_t s = 0; s < eval.size(); ++s) {
      auto& out = per_split[s][k];
      out.seed = seed;
      out.tiles = evaluate_counts(*model, eval[s]);
      const auto rep = try_aggregate(out.tiles, config.zero_division);
      if (!rep) throw InvalidArgument("split '" + std::string(io::split_name(config.final_splits[s])) + "' has no labelled pixels");
      out.report = *rep;
      out.regionwise = metrics::regionwise(out.tiles, config.zero_division);
    }
    log("final seed " + std::to_string(seed) + " evaluated");
  });

  for (std::size_t s = 0; s < report.splits.size(); ++s) {
    report.splits[s].per_seed = std::move(per_split[s]);
    summarize_seeds(report.splits[s]);
  }
  return report;
}

// ---------------------------------------------------------------- boxplot

double quantile_linear(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw InvalidArgument("quantile of an empty sample");
  const double h = static_cast<double>(sorted.size() - 1) * std::clamp(q, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted[lo];
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<BoxplotRow> export_boxplot_data(std::span<const ConfigScore> scores, std::string_view group_by) {
  if (scores.empty()) throw InvalidArgument("no configurations to summarize");
  std::map<std::string, std::vector<double>> groups;
  bool known = group_by == "model" || group_by == "feature_space";
  for (const auto& s : scores) {
    std::string group;
    if (group_by == "model") {
      group = std::string(model_kind_name(s.model));
    } else if (group_by == "feature_space") {
      group = s.feature_space;
    } else {
      const std::string key(group_by);
      if (!s.params.contains(key)) continue;
      known = true;
      const auto& v = s.params.at(key);
      group = v.is_string() ? v.get<std::string>() : v.dump();
    }
    const double iou = s.mean(Metric::IoU);
    auto& values = groups[group];
    if (std::isfinite(iou)) values.push_back(iou);
  }
  if (!known) throw InvalidArgument("unknown grouping parameter '" + std::string(group_by) + "'");
  std::vector<BoxplotRow> rows;
  for (auto& [group, values] : groups) {
    if (values.empty()) continue;
    std::sort(values.begin(), values.end());
    rows.push_back({group, values.size(), values.front(), quantile_linear(values, 0.25), quantile_linear(values, 0.5),
                    quantile_linear(values, 0.75), values.back()});
  }
  std::sort(rows.begin(), rows.end(), [](const BoxplotRow& a, const BoxplotRow& b) {
    return a.max != b.max ? a.max > b.max : a.group < b.group;
  });
  return rows;
}

std::string boxplot_csv(std::span<const BoxplotRow> rows) {
  std::string out = "group,count,min,q1,median,q3,max\n";
  for (const auto& r : rows) {
    out += csv_quote(r.group) + "," + std::to_string(r.count) + "," + fmt6(r.min) + "," + fmt6(r.q1) + "," +
           fmt6(r.median) + "," + fmt6(r.q3) + "," + fmt6(r.max) + "\n";
  }
  return out;
}

// -------------------------------------------------------------- artifacts

nlohmann::json ModelArtifact::to_json() const {
  return {{"format", "floodpix-artifact"},
          {"version", kArtifactVersion},
          {"feature_space", feature_space},
          {"feature_options", feature_options.to_json()},
          {"params", params},
          {"seed", seed},
          {"model", model->to_json()}};
}

ModelArtifact ModelArtifact::from_json(const nlohmann::json& j) {
  if (j.value("format", std::string{}) != "floodpix-artifact") {
    // A bare model document is accepted; it carries no feature metadata.
    if (j.value("format", std::string{}) == "floodpix-model") {
      ModelArtifact a;
      a.model = model_from_json(j);
      return a;
    }
    throw InvalidArgument("not a floodpix model artifact");
  }
  if (j.value("version", 0) != kArtifactVersion) throw InvalidArgument("unsupported artifact version");
  ModelArtifact a;
  a.feature_space = j.at("feature_space").get<std::string>();
  a.feature_options = features::FeatureOptions::from_json(j.at("feature_options"));
  a.params = j.value("params", nlohmann::json::object());
  a.seed = j.value("seed", std::uint64_t{0});
  a.model = model_from_json(j.at("model"));
  const auto spec = features::parse_feature_space(a.feature_space);
  if (static_cast<std::size_t>(spec.dimensionality()) != a.model->dimensionality()) {
    throw InvalidArgument("artifact feature space does not match the model dimensionality");
  }
  return a;
}

void save_artifact(const ModelArtifact& artifact, const fs::path& file) {
  write_text_atomic(file, artifact.to_json().dump() + "\n");
}

ModelArtifact load_artifact(const fs::path& file) {
  try {
    return ModelArtifact::from_json(nlohmann::json::parse(read_text(file)));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- reports

std::vector<ConfigScore> write_search_reports(const fs::path& output_dir, std::span<const CellResult> cells) {
  auto scores = score_configs(cells);
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = selection_key(scores[a]);
    const auto kb = selection_key(scores[b]);
    return ka != kb ? ka > kb : scores[a].config_key < scores[b].config_key;
  });

  nlohmann::json ranking = nlohmann::json::array();
  for (std::size_t i : order) ranking.push_back(scores[i].to_json());
  nlohmann::json failures = nlohmann::json::array();
  std::size_t ok = 0;
  for (const auto& c : cells) {
    if (c.ok) {
      ++ok;
    } else {
      failures.push_back({{"key", c.cell.key()}, {"error", c.error}});
    }
  }
  nlohmann::json summary = {{"cells", {{"total", cells.size()}, {"ok", ok}, {"failed", cells.size() - ok}}},
                            {"best", scores.empty() ? nlohmann::json(nullptr) : scores[select_best(scores)].to_json()},
                            {"ranking", ranking},
                            {"failures", failures}};
  write_text_atomic(output_dir / "search_summary.json", summary.dump(2) + "\n");

  std::string csv = "model,feature_space,params,seed,status," + metrics::report_csv_header() + "\n";
  for (const auto& c : cells) {
    csv += std::string(model_kind_name(c.cell.model)) + "," + csv_quote(c.cell.feature_space) + "," +
           csv_quote(c.cell.params.dump()) + "," + std::to_string(c.cell.seed) + "," + (c.ok ? "ok" : "failed") + ",";
    csv += c.report ? metrics::report_csv_row(*c.report) : std::string{};
    csv += "\n";
  }
  write_text_atomic(output_dir / "search_results.csv", csv);
  if (!scores.empty()) {
    write_text_atomic(output_dir / "boxplot_feature_space.csv",
                      boxplot_csv(export_boxplot_data(scores, "feature_space")));
  }
  return scores;
}

void write_final_reports(const fs::path& output_dir, const FinalReport& report) {
  write_text_atomic(output_dir / "final_report.json", report.to_json().dump(2) + "\n");
  for (const auto& s : report.splits) {
    const std::string name(io::split_name(s.split));
    std::string csv = "seed," + metrics::report_csv_header() + "\n";
    for (const auto& p : s.per_seed) csv += std::to_string(p.seed) + "," + metrics::report_csv_row(p.report) + "\n";
    csv += "average," + std::to_string(s.per_seed.empty() ? 0 : s.per_seed.front().report.tiles);
    for (Metric m : metrics::kAllMetrics) csv += "," + fmt6(s.mean_based[static_cast<std::size_t>(m)].mean);
    for (Metric m : metrics::kAllMetrics) csv += "," + fmt6(s.mean_based[static_cast<std::size_t>(m)].std);
    for (Metric m : metrics::kAllMetrics) csv += "," + fmt6(s.total[static_cast<std::size_t>(m)]);
    csv += "\n";
    write_text_atomic(output_dir / ("final_" + name + "_summary.csv"), csv);
    write_text_atomic(output_dir / ("final_" + name + "_regionwise.csv"), metrics::regionwise_csv(s.regionwise));
  }
}

}  // namespace floodpix::harness
