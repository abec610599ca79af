#include "floodpix/import.hpp"

#include <fstream>

#include "floodpix/error.hpp"
#include "floodpix/npy.hpp"

namespace floodpix::io {
namespace fs = std::filesystem;

namespace {

std::vector<std::string> read_csv_first_column(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  std::vector<std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string cell = line.substr(0, line.find(','));
    if (cell.empty()) continue;
    out.push_back(cell);
  }
  return out;
}

std::vector<FloatGrid> planes(const NpyArray& a, std::size_t expected, const fs::path& file) {
  if (a.shape.size() != 3 || a.shape[0] != expected) {
    throw IoError(file.string() + ": expected shape (" + std::to_string(expected) + ", H, W)");
  }
  const int h = static_cast<int>(a.shape[1]);
  const int w = static_cast<int>(a.shape[2]);
  const std::size_t n = a.shape[1] * a.shape[2];
  std::vector<FloatGrid> out;
  for (std::size_t b = 0; b < expected; ++b) {
    FloatGrid g(w, h);
    std::copy_n(a.values.begin() + static_cast<std::ptrdiff_t>(b * n), n, g.values.begin());
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace

std::string region_of(std::string_view tile_id) { return std::string(tile_id.substr(0, tile_id.find('_'))); }

std::string chip_id_from_csv_cell(std::string_view cell) {
  std::string_view s = cell;
  if (const auto slash = s.find_last_of("/\\"); slash != std::string_view::npos) s.remove_prefix(slash + 1);
  if (const auto dot = s.rfind('.'); dot != std::string_view::npos) s = s.substr(0, dot);
  for (std::string_view suffix : {"_S1Hand", "_S2Hand", "_LabelHand", "_S1", "_S2"}) {
    if (s.size() > suffix.size() && s.substr(s.size() - suffix.size()) == suffix) {
      s.remove_suffix(suffix.size());
      break;
    }
  }
  return std::string(s);
}

ImportSummary import_sen1floods11(const ImportOptions& options, const fs::path& data_root) {
  const fs::path csv_dir = options.csv_dir.empty() ? options.source : options.csv_dir;
  ImportSummary summary;
  for (const auto& [split, csv_name] : options.csv_names) {
    const fs::path csv = csv_dir / csv_name;
    if (!fs::exists(csv)) {
      summary.missing_splits.emplace_back(split_name(split));
      continue;
    }
    SplitManifest manifest;
    manifest.split = split;
    for (const auto& cell : read_csv_first_column(csv)) {
      const std::string id = chip_id_from_csv_cell(cell);
      if (id.empty() || id == "0" || id.find('_') == std::string::npos) continue;  // header or blank row
      const std::string region = region_of(id);
      const fs::path s1_src = options.source / "S1" / (id + "_S1Hand.npy");
      const fs::path s2_src = options.source / "S2" / (id + "_S2Hand.npy");
      const fs::path label_src = options.source / "Label" / (id + "_LabelHand.npy");

      const auto s1 = planes(read_npy(s1_src), sar_bands().size(), s1_src);
      const auto s2 = planes(read_npy(s2_src), optical_bands().size(), s2_src);
      const NpyArray label_arr = read_npy(label_src);
      if (label_arr.shape.size() != 2) throw IoError(label_src.string() + ": expected shape (H, W)");
      const int h = static_cast<int>(label_arr.shape[0]);
      const int w = static_cast<int>(label_arr.shape[1]);
      if (s1.front().width != w || s1.front().height != h || s2.front().width != w || s2.front().height != h) {
        throw IoError(label_src.string() + ": chip arrays of '" + id + "' differ in size");
      }
      LabelGrid labels(w, h, Label::NoData);
      for (std::size_t i = 0; i < labels.values.size(); ++i) {
        const float v = label_arr.values[i];
        labels.values[i] = v == 1.0f ? Label::Water : v == 0.0f ? Label::Dry : Label::NoData;
      }

      ManifestEntry entry{id, region, {data_root / "S1" / (id + "_S1.f32"), data_root / "S2" / (id + "_S2.f32")},
                          data_root / "Label" / (id + "_Label.i8")};
      fs::create_directories(data_root / "S1");
      fs::create_directories(data_root / "S2");
      fs::create_directories(data_root / "Label");
      const auto sar = sar_bands();
      const auto opt = optical_bands();
      write_raster(entry.rasters[0], {w, h, {sar.begin(), sar.end()}, id, region, "float32"}, s1);
      write_raster(entry.rasters[1], {w, h, {opt.begin(), opt.end()}, id, region, "float32"}, s2);
      write_labels(entry.label, labels, id, region);
      manifest.entries.push_back(std::move(entry));
    }
    fs::create_directories(data_root / "manifests");
    save_manifest(manifest, data_root / "manifests" / (std::string(split_name(split)) + ".json"), data_root);
    summary.tiles[static_cast<std::size_t>(split)] = manifest.entries.size();
  }
  return summary;
}

}  // namespace floodpix::io
