#include <set>
#include <sstream>

#include <toml.hpp>

#include "floodpix/error.hpp"
#include "floodpix/harness.hpp"

namespace floodpix::harness {
namespace fs = std::filesystem;

namespace {

nlohmann::json to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : *t) j[std::string(k.str())] = to_json(v);
    return j;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& v : *a) j.push_back(to_json(v));
    return j;
  }
  if (const auto* s = node.as_string()) return s->get();
  if (const auto* i = node.as_integer()) return i->get();
  if (const auto* f = node.as_floating_point()) return f->get();
  if (const auto* b = node.as_boolean()) return b->get();
  throw InvalidArgument("unsupported TOML value (dates and times are not used by the configuration)");
}

void insert_json(toml::table& table, const std::string& key, const nlohmann::json& v);

toml::array to_toml_array(const nlohmann::json& arr) {
  toml::array out;
  for (const auto& v : arr) {
    if (v.is_string()) out.push_back(v.get<std::string>());
    else if (v.is_boolean()) out.push_back(v.get<bool>());
    else if (v.is_number_integer()) out.push_back(v.get<std::int64_t>());
    else if (v.is_number()) out.push_back(v.get<double>());
    else if (v.is_array()) out.push_back(to_toml_array(v));
    else if (v.is_object()) {
      toml::table t;
      for (const auto& [k, x] : v.items()) insert_json(t, k, x);
      out.push_back(std::move(t));
    } else {
      throw InvalidArgument("null cannot be written to TOML");
    }
  }
  return out;
}

void insert_json(toml::table& table, const std::string& key, const nlohmann::json& v) {
  if (v.is_null()) return;
  if (v.is_string()) table.insert_or_assign(key, v.get<std::string>());
  else if (v.is_boolean()) table.insert_or_assign(key, v.get<bool>());
  else if (v.is_number_integer()) table.insert_or_assign(key, v.get<std::int64_t>());
  else if (v.is_number()) table.insert_or_assign(key, v.get<double>());
  else if (v.is_array()) table.insert_or_assign(key, to_toml_array(v));
  else {
    toml::table sub;
    for (const auto& [k, x] : v.items()) insert_json(sub, k, x);
    table.insert_or_assign(key, std::move(sub));
  }
}

std::vector<std::uint64_t> parse_seeds(const nlohmann::json& v, const char* name) {
  std::vector<std::uint64_t> seeds;
  if (v.is_number_integer()) {
    const auto n = v.get<std::int64_t>();
    if (n <= 0) throw InvalidArgument(std::string(name) + " must be a positive count or a list");
    for (std::int64_t i = 0; i < n; ++i) seeds.push_back(static_cast<std::uint64_t>(i));
  } else if (v.is_array()) {
    for (const auto& s : v) {
      if (!s.is_number_integer() || s.get<std::int64_t>() < 0) {
        throw InvalidArgument(std::string(name) + " entries must be non-negative integers");
      }
      seeds.push_back(s.get<std::uint64_t>());
    }
  } else {
    throw InvalidArgument(std::string(name) + " must be a count or a list of integers");
  }
  return seeds;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

void reject_unknown(const nlohmann::json& table, std::initializer_list<const char*> known, const std::string& where) {
  const std::set<std::string> allowed(known.begin(), known.end());
  for (const auto& [k, _] : table.items()) {
    if (!allowed.contains(k)) throw InvalidArgument("unknown key '" + k + "' in [" + where + "]");
  }
}

}  // namespace

GridSearchConfig parse_config_toml(std::string_view text, const fs::path& base_dir) {
  nlohmann::json doc;
  try {
    doc = to_json(toml::parse(text));
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << "TOML parse error at line " << e.source().begin.line << ": " << e.description();
    throw InvalidArgument(msg.str());
  }
  reject_unknown(doc, {"data", "search", "features", "metrics", "grid"}, "top level");

  GridSearchConfig c;
  const auto search = doc.value("search", nlohmann::json::object());
  reject_unknown(search,
                 {"model", "feature_spaces", "search_seeds", "final_seeds", "train_split", "select_split",
                  "final_splits", "output", "jobs", "save_models"},
                 "search");
  if (!search.contains("model")) throw InvalidArgument("[search] needs a model");
  c.model = parse_model_kind(search.at("model").get<std::string>());
  if (search.contains("feature_spaces")) {
    c.feature_spaces = search.at("feature_spaces").get<std::vector<std::string>>();
  }
  if (search.contains("search_seeds")) c.search_seeds = parse_seeds(search.at("search_seeds"), "search_seeds");
  if (search.contains("final_seeds")) c.final_seeds = parse_seeds(search.at("final_seeds"), "final_seeds");
  if (search.contains("train_split")) c.train_split = io::parse_split_name(search.at("train_split").get<std::string>());
  if (search.contains("select_split")) {
    c.select_split = io::parse_split_name(search.at("select_split").get<std::string>());
  }
  if (search.contains("final_splits")) {
    c.final_splits.clear();
    for (const auto& s : search.at("final_splits")) c.final_splits.push_back(io::parse_split_name(s.get<std::string>()));
  }
  if (search.contains("output")) c.output_dir = resolve(base_dir, search.at("output").get<std::string>());
  c.jobs = search.value("jobs", c.jobs);
  c.save_models = search.value("save_models", c.save_models);

  const auto data = doc.value("data", nlohmann::json::object());
  reject_unknown(data, {"root", "manifests"}, "data");
  if (data.contains("root")) c.data.root = resolve(base_dir, data.at("root").get<std::string>());
  const auto manifests = data.value("manifests", nlohmann::json::object());
  for (const auto& [split, path] : manifests.items()) {
    c.data.manifests[io::parse_split_name(split)] = path.get<std::string>();
  }

  if (doc.contains("features")) {
    reject_unknown(doc["features"], {"speckle_filter", "lee_sigma", "normalization"}, "features");
    c.feature_options = features::FeatureOptions::from_json(doc["features"]);
  }

  const auto metrics_doc = doc.value("metrics", nlohmann::json::object());
  reject_unknown(metrics_doc, {"zero_division"}, "metrics");
  if (metrics_doc.contains("zero_division")) {
    c.zero_division = metrics::parse_zero_division(metrics_doc.at("zero_division").get<std::string>());
  }

  const auto grid = doc.value("grid", nlohmann::json::object());
  for (const auto& [name, values] : grid.items()) {
    c.grid[name] = values.is_array() ? values.get<std::vector<nlohmann::json>>() : std::vector<nlohmann::json>{values};
  }
  return c;
}

GridSearchConfig load_config(const fs::path& file) {
  return parse_config_toml(read_text(file), file.parent_path());
}

nlohmann::json GridSearchConfig::to_json() const {
  nlohmann::json manifests_json = nlohmann::json::object();
  for (SplitName s : {SplitName::Train, SplitName::Valid, SplitName::Test, SplitName::BoliviaTest}) {
    manifests_json[std::string(io::split_name(s))] = fs::absolute(data.manifest_path(s)).lexically_normal().generic_string();
  }
  nlohmann::json final_splits_json = nlohmann::json::array();
  for (SplitName s : final_splits) final_splits_json.push_back(std::string(io::split_name(s)));
  // Defaults are written out so the snapshot alone reproduces the run; an
  // absent GBDT max_leaves still means the dimensionality-based grid.
  nlohmann::json grid_json = nlohmann::json::object();
  for (const auto& [k, v] : default_grid(model)) grid_json[k] = v;
  for (const auto& [k, v] : grid) grid_json[k] = v;
  return {{"data", {{"root", fs::absolute(data.root).lexically_normal().generic_string()}, {"manifests", manifests_json}}},
          {"search",
           {{"model", std::string(model_kind_name(model))},
            {"feature_spaces", feature_spaces},
            {"search_seeds", search_seeds},
            {"final_seeds", final_seeds},
            {"train_split", std::string(io::split_name(train_split))},
            {"select_split", std::string(io::split_name(select_split))},
            {"final_splits", final_splits_json},
            {"output", fs::absolute(output_dir).lexically_normal().generic_string()},
            {"jobs", jobs},
            {"save_models", save_models}}},
          {"features", feature_options.to_json()},
          {"metrics", {{"zero_division", std::string(metrics::zero_division_name(zero_division))}}},
          {"grid", grid_json}};
}

std::string config_to_toml(const GridSearchConfig& config) {
  toml::table root;
  const auto j = config.to_json();
  for (const char* section : {"data", "search", "features", "metrics", "grid"}) insert_json(root, section, j.at(section));
  std::ostringstream out;
  out << toml::toml_formatter(root) << "\n";
  return out.str();
}

std::string json_to_toml(const nlohmann::json& object) {
  if (!object.is_object()) throw InvalidArgument("only JSON objects map to TOML documents");
  toml::table root;
  for (const auto& [k, v] : object.items()) insert_json(root, k, v);
  std::ostringstream out;
  out << toml::toml_formatter(root) << "\n";
  return out.str();
}

}  // namespace floodpix::harness
