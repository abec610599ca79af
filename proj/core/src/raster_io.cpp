#include "floodpix/raster_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>

#include "floodpix/error.hpp"

namespace floodpix::io {
namespace fs = std::filesystem;

namespace {

constexpr std::array<std::string_view, kBandCount> kBandNames = {
    "B1", "B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8A", "B9", "B10", "B11", "B12", "VV", "VH"};

constexpr std::array<BandId, 13> kOptical = {
    BandId::B1, BandId::B2, BandId::B3,  BandId::B4,  BandId::B5,  BandId::B6, BandId::B7,
    BandId::B8, BandId::B8A, BandId::B9, BandId::B10, BandId::B11, BandId::B12};

constexpr std::array<BandId, 2> kSar = {BandId::VV, BandId::VH};

std::uint32_t byteswap32(std::uint32_t v) {
  return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) | (v >> 24);
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0);
  std::vector<char> bytes(size);
  if (size > 0 && !in.read(bytes.data(), static_cast<std::streamsize>(size))) {
    throw IoError("failed reading " + path.string());
  }
  return bytes;
}

void write_file_atomic(const fs::path& path, const char* data, std::size_t size) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(data, static_cast<std::streamsize>(size));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_sidecar(const fs::path& payload, const RasterHeader& header) {
  const std::string text = header.to_json().dump(2) + "\n";
  write_file_atomic(sidecar_path(payload), text.data(), text.size());
}

}  // namespace

std::string_view band_name(BandId band) { return kBandNames.at(channel_index(band)); }

BandId parse_band_id(std::string_view name) {
  for (std::size_t i = 0; i < kBandNames.size(); ++i) {
    if (kBandNames[i] == name) return static_cast<BandId>(i);
  }
  throw InvalidArgument("unknown band id '" + std::string(name) + "'");
}

std::span<const BandId> optical_bands() { return kOptical; }
std::span<const BandId> sar_bands() { return kSar; }
bool is_sar(BandId band) { return band == BandId::VV || band == BandId::VH; }

const FloatGrid& Tile::band(BandId id) const {
  auto it = bands.find(id);
  if (it == bands.end()) {
    throw InvalidArgument("tile '" + tile_id + "' has no band " + std::string(band_name(id)));
  }
  return it->second;
}

std::string_view split_name(SplitName split) {
  switch (split) {
    case SplitName::Train: return "train";
    case SplitName::Valid: return "valid";
    case SplitName::Test: return "test";
    case SplitName::BoliviaTest: return "bolivia";
  }
  return "unknown";
}

SplitName parse_split_name(std::string_view name) {
  if (name == "train") return SplitName::Train;
  if (name == "valid" || name == "validation") return SplitName::Valid;
  if (name == "test") return SplitName::Test;
  if (name == "bolivia" || name == "bolivia_test") return SplitName::BoliviaTest;
  throw InvalidArgument("unknown split '" + std::string(name) + "'");
}

fs::path resolve_data_root(const std::optional<fs::path>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("FLOODPIX_DATA_ROOT"); env != nullptr && *env != '\0') {
    return fs::path(env);
  }
  return fs::current_path();
}

SplitManifest parse_manifest(const nlohmann::json& doc, SplitName split, const fs::path& data_root) {
  if (!doc.is_array()) throw IoError("manifest must be a JSON array of entries");
  SplitManifest manifest;
  manifest.split = split;
  std::set<std::string> seen;
  for (const auto& item : doc) {
    ManifestEntry entry;
    try {
      entry.tile_id = item.at("tile_id").get<std::string>();
      entry.region = item.at("region").get<std::string>();
      for (const auto& r : item.at("rasters")) entry.rasters.push_back(data_root / r.get<std::string>());
      entry.label = data_root / item.at("label").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw IoError(std::string("malformed manifest entry: ") + e.what());
    }
    if (!seen.insert(entry.tile_id).second) {
      throw IoError("duplicate tile_id '" + entry.tile_id + "' in " + std::string(split_name(split)) +
                    " manifest");
    }
    for (const auto& p : entry.rasters) {
      if (!fs::exists(p)) throw IoError("manifest path does not exist: " + p.string());
    }
    if (!fs::exists(entry.label)) throw IoError("manifest path does not exist: " + entry.label.string());
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

SplitManifest load_manifest(const fs::path& file, SplitName split, const fs::path& data_root) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open manifest " + file.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest " + file.string() + " is not valid JSON: " + e.what());
  }
  return parse_manifest(doc, split, data_root);
}

void save_manifest(const SplitManifest& manifest, const fs::path& file, const fs::path& data_root) {
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& e : manifest.entries) {
    nlohmann::json rasters = nlohmann::json::array();
    for (const auto& r : e.rasters) rasters.push_back(fs::relative(r, data_root).generic_string());
    doc.push_back({{"tile_id", e.tile_id},
                   {"region", e.region},
                   {"rasters", rasters},
                   {"label", fs::relative(e.label, data_root).generic_string()}});
  }
  const std::string text = doc.dump(2) + "\n";
  write_file_atomic(file, text.data(), text.size());
}

nlohmann::json RasterHeader::to_json() const {
  nlohmann::json bands = nlohmann::json::array();
  for (BandId b : band_ids) bands.push_back(std::string(band_name(b)));
  return {{"width", width}, {"height", height}, {"band_ids", bands},
          {"tile_id", tile_id}, {"region", region}, {"dtype", dtype}};
}

RasterHeader RasterHeader::from_json(const nlohmann::json& j) {
  RasterHeader h;
  h.width = j.at("width").get<int>();
  h.height = j.at("height").get<int>();
  for (const auto& b : j.at("band_ids")) h.band_ids.push_back(parse_band_id(b.get<std::string>()));
  h.tile_id = j.value("tile_id", std::string{});
  h.region = j.value("region", std::string{});
  h.dtype = j.value("dtype", std::string("float32"));
  if (h.width <= 0 || h.height <= 0) throw IoError("non-positive raster dimensions");
  return h;
}

fs::path sidecar_path(const fs::path& payload) {
  fs::path p = payload;
  p.replace_extension(".json");
  return p;
}

RasterHeader read_header(const fs::path& payload) {
  const fs::path side = sidecar_path(payload);
  std::ifstream in(side);
  if (!in) throw IoError("missing sidecar header " + side.string());
  try {
    nlohmann::json j;
    in >> j;
    return RasterHeader::from_json(j);
  } catch (const IoError& e) {
    throw IoError(side.string() + ": " + e.what());
  } catch (const std::exception& e) {
    throw IoError("invalid sidecar header " + side.string() + ": " + e.what());
  }
}

std::vector<FloatGrid> read_raster(const fs::path& payload, RasterHeader* header_out) {
  const RasterHeader header = read_header(payload);
  if (header.dtype != "float32") throw IoError(payload.string() + ": expected float32 payload");
  const std::vector<char> bytes = read_file(payload);
  const std::size_t pixels = static_cast<std::size_t>(header.width) * header.height;
  const std::size_t expected = pixels * header.band_ids.size() * sizeof(float);
  if (bytes.size() != expected) {
    throw IoError(payload.string() + ": payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(expected));
  }
  std::vector<FloatGrid> grids;
  grids.reserve(header.band_ids.size());
  for (std::size_t b = 0; b < header.band_ids.size(); ++b) {
    FloatGrid g(header.width, header.height);
    std::memcpy(g.values.data(), bytes.data() + b * pixels * sizeof(float), pixels * sizeof(float));
    if constexpr (std::endian::native == std::endian::big) {
      for (float& v : g.values) v = std::bit_cast<float>(byteswap32(std::bit_cast<std::uint32_t>(v)));
    }
    grids.push_back(std::move(g));
  }
  if (header_out != nullptr) *header_out = header;
  return grids;
}

void write_raster(const fs::path& payload, const RasterHeader& header, std::span<const FloatGrid> bands) {
  if (bands.size() != header.band_ids.size()) {
    throw InvalidArgument("band count does not match header band_ids");
  }
  const std::size_t pixels = static_cast<std::size_t>(header.width) * header.height;
  std::vector<char> bytes(pixels * bands.size() * sizeof(float));
  for (std::size_t b = 0; b < bands.size(); ++b) {
    if (!bands[b].same_shape(header.width, header.height)) {
      throw InvalidArgument("band grid shape does not match header");
    }
    char* dst = bytes.data() + b * pixels * sizeof(float);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(dst, bands[b].values.data(), pixels * sizeof(float));
    } else {
      for (std::size_t i = 0; i < pixels; ++i) {
        const std::uint32_t v = byteswap32(std::bit_cast<std::uint32_t>(bands[b].values[i]));
        std::memcpy(dst + i * sizeof(float), &v, sizeof(float));
      }
    }
  }
  RasterHeader h = header;
  h.dtype = "float32";
  write_sidecar(payload, h);
  write_file_atomic(payload, bytes.data(), bytes.size());
}

LabelGrid read_labels(const fs::path& payload, RasterHeader* header_out) {
  const RasterHeader header = read_header(payload);
  if (header.dtype != "int8") throw IoError(payload.string() + ": expected int8 label payload");
  const std::vector<char> bytes = read_file(payload);
  const std::size_t pixels = static_cast<std::size_t>(header.width) * header.height;
  if (bytes.size() != pixels) {
    throw IoError(payload.string() + ": payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                  std::to_string(pixels));
  }
  LabelGrid labels(header.width, header.height);
  for (std::size_t i = 0; i < pixels; ++i) {
    const auto v = static_cast<std::int8_t>(bytes[i]);
    if (v < -1 || v > 1) {
      throw IoError(payload.string() + ": label value " + std::to_string(v) + " outside {-1, 0, 1}");
    }
    labels[i] = static_cast<Label>(v);
  }
  if (header_out != nullptr) *header_out = header;
  return labels;
}

void write_labels(const fs::path& payload, const LabelGrid& labels, const std::string& tile_id,
                  const std::string& region) {
  RasterHeader h;
  h.width = labels.width;
  h.height = labels.height;
  h.tile_id = tile_id;
  h.region = region;
  h.dtype = "int8";
  std::vector<char> bytes(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) bytes[i] = static_cast<char>(static_cast<std::int8_t>(labels[i]));
  write_sidecar(payload, h);
  write_file_atomic(payload, bytes.data(), bytes.size());
}

std::vector<std::uint8_t> compute_valid_mask(const Tile& tile, const LabelGrid& labels,
                                             std::span<const BandId> bands) {
  if (!labels.same_shape(tile.width, tile.height)) {
    throw InvalidArgument("label grid shape does not match tile '" + tile.tile_id + "'");
  }
  std::vector<const FloatGrid*> grids;
  if (bands.empty()) {
    for (const auto& [id, g] : tile.bands) grids.push_back(&g);
  } else {
    for (BandId id : bands) grids.push_back(&tile.band(id));
  }
  std::vector<std::uint8_t> mask(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    bool ok = labels[i] != Label::NoData;
    for (const FloatGrid* g : grids) ok = ok && std::isfinite((*g)[i]);
    mask[i] = ok ? 1 : 0;
  }
  return mask;
}

std::pair<Tile, LabelGrid> load_tile(const ManifestEntry& entry, std::span<const BandId> bands) {
  Tile tile;
  tile.tile_id = entry.tile_id;
  tile.region = entry.region;
  const std::set<BandId> wanted(bands.begin(), bands.end());

  for (const auto& path : entry.rasters) {
    RasterHeader header;
    std::vector<FloatGrid> grids;
    try {
      if (!wanted.empty()) {
        header = read_header(path);
        const bool needed = std::any_of(header.band_ids.begin(), header.band_ids.end(),
                                        [&](BandId b) { return wanted.contains(b); });
        if (!needed) continue;
      }
      grids = read_raster(path, &header);
    } catch (const InvalidArgument& e) {
      throw IoError(path.string() + ": " + e.what());
    }
    if (tile.width == 0) {
      tile.width = header.width;
      tile.height = header.height;
    } else if (header.width != tile.width || header.height != tile.height) {
      throw IoError(path.string() + ": dimension mismatch (" + std::to_string(header.width) + "x" +
                    std::to_string(header.height) + " vs " + std::to_string(tile.width) + "x" +
                    std::to_string(tile.height) + ")");
    }
    for (std::size_t b = 0; b < header.band_ids.size(); ++b) {
      const BandId id = header.band_ids[b];
      if (!wanted.empty() && !wanted.contains(id)) continue;
      if (tile.bands.contains(id)) {
        throw IoError(path.string() + ": band " + std::string(band_name(id)) + " provided twice");
      }
      tile.bands.emplace(id, std::move(grids[b]));
    }
  }
  for (BandId id : wanted) {
    if (!tile.bands.contains(id)) {
      throw IoError("tile '" + entry.tile_id + "' lacks requested band " + std::string(band_name(id)));
    }
  }

  LabelGrid labels = read_labels(entry.label);
  if (tile.width == 0) {
    tile.width = labels.width;
    tile.height = labels.height;
  } else if (!labels.same_shape(tile.width, tile.height)) {
    throw IoError(entry.label.string() + ": dimension mismatch (" + std::to_string(labels.width) + "x" +
                  std::to_string(labels.height) + " vs " + std::to_string(tile.width) + "x" +
                  std::to_string(tile.height) + ")");
  }
  tile.valid_mask = compute_valid_mask(tile, labels);
  return {std::move(tile), std::move(labels)};
}

std::vector<std::pair<Tile, LabelGrid>> load_tiles(const SplitManifest& manifest, std::span<const BandId> bands) {
  std::vector<std::pair<Tile, LabelGrid>> out;
  out.reserve(manifest.entries.size());
  for (const auto& e : manifest.entries) out.push_back(load_tile(e, bands));
  return out;
}

nlohmann::json DatasetStats::to_json() const {
  nlohmann::json regions = nlohmann::json::object();
  for (const auto& [r, f] : region_fractions) regions[r] = f;
  nlohmann::json region_pixels = nlohmann::json::object();
  for (const auto& [r, n] : region_valid_pixels) region_pixels[r] = n;
  return {{"class_fractions", {{"dry", dry_fraction}, {"water", water_fraction}, {"nodata", nodata_fraction}}},
          {"class_pixels", {{"dry", dry_pixels}, {"water", water_pixels}, {"nodata", nodata_pixels}}},
          {"region_fractions", regions},
          {"region_valid_pixels", region_pixels}};
}

void DatasetStatsAccumulator::add(const std::string& region, const LabelGrid& labels) {
  std::uint64_t valid = 0;
  for (Label l : labels.values) {
    switch (l) {
      case Label::Dry: ++dry_; ++valid; break;
      case Label::Water: ++water_; ++valid; break;
      case Label::NoData: ++nodata_; break;
    }
  }
  region_valid_[region] += valid;
  ++tiles_;
}

void DatasetStatsAccumulator::merge(const DatasetStatsAccumulator& other) {
  dry_ += other.dry_;
  water_ += other.water_;
  nodata_ += other.nodata_;
  tiles_ += other.tiles_;
  for (const auto& [r, n] : other.region_valid_) region_valid_[r] += n;
}

DatasetStats DatasetStatsAccumulator::finish() const {
  if (tiles_ == 0) throw InvalidArgument("dataset statistics need at least one tile");
  DatasetStats s;
  s.dry_pixels = dry_;
  s.water_pixels = water_;
  s.nodata_pixels = nodata_;
  s.region_valid_pixels = region_valid_;
  const double total = static_cast<double>(dry_ + water_ + nodata_);
  if (total > 0) {
    s.dry_fraction = static_cast<double>(dry_) / total;
    s.water_fraction = static_cast<double>(water_) / total;
    s.nodata_fraction = static_cast<double>(nodata_) / total;
  }
  const double valid = static_cast<double>(dry_ + water_);
  if (valid > 0) {
    for (const auto& [r, n] : region_valid_) s.region_fractions[r] = static_cast<double>(n) / valid;
  }
  return s;
}

DatasetStats dataset_statistics(std::span<const SplitManifest> manifests) {
  DatasetStatsAccumulator acc;
  for (const auto& m : manifests) {
    for (const auto& e : m.entries) acc.add(e.region, read_labels(e.label));
  }
  return acc.finish();
}

}  // namespace floodpix::io
