#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace floodpix::io {

/// Sentinel-2 optical bands followed by the two Sentinel-1 polarizations.
/// The enumerator value is the channel index used in stored files and in
/// every per-band array of the library; it never changes.
enum class BandId : std::uint8_t {
  B1 = 0,
  B2,
  B3,
  B4,
  B5,
  B6,
  B7,
  B8,
  B8A,
  B9,
  B10,
  B11,
  B12,
  VV,
  VH,
};

inline constexpr std::size_t kBandCount = 15;

constexpr std::size_t channel_index(BandId band) { return static_cast<std::size_t>(band); }

std::string_view band_name(BandId band);
/// Throws InvalidArgument for names outside {B1..B12, B8A, VV, VH}.
BandId parse_band_id(std::string_view name);
std::span<const BandId> optical_bands();
std::span<const BandId> sar_bands();
bool is_sar(BandId band);

template <typename T>
struct Grid {
  int width = 0;
  int height = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int w, int h, T fill = T{})
      : width(w), height(h), values(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::size_t size() const { return values.size(); }
  T& operator[](std::size_t i) { return values[i]; }
  const T& operator[](std::size_t i) const { return values[i]; }
  T& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  const T& at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool same_shape(int w, int h) const { return width == w && height == h; }

  bool operator==(const Grid&) const = default;
};

using FloatGrid = Grid<float>;

/// On disk: int8 with -1 = NoData, 0 = Dry, 1 = Water.
enum class Label : std::int8_t { NoData = -1, Dry = 0, Water = 1 };

using LabelGrid = Grid<Label>;

/// One multi-band raster chip. Grids are row-major and share width x height.
struct Tile {
  std::string tile_id;
  std::string region;
  int width = 0;
  int height = 0;
  std::map<BandId, FloatGrid> bands;
  /// 1 where the label is not NoData and every loaded band is finite.
  std::vector<std::uint8_t> valid_mask;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
  bool has_band(BandId band) const { return bands.contains(band); }
  /// Throws InvalidArgument naming the tile when the band is absent.
  const FloatGrid& band(BandId band) const;
};

enum class SplitName { Train, Valid, Test, BoliviaTest };

std::string_view split_name(SplitName split);
SplitName parse_split_name(std::string_view name);

struct ManifestEntry {
  std::string tile_id;
  std::string region;
  std::vector<std::filesystem::path> rasters;
  std::filesystem::path label;
};

struct SplitManifest {
  SplitName split = SplitName::Train;
  std::vector<ManifestEntry> entries;
};

/// Data root from an explicit flag, falling back to FLOODPIX_DATA_ROOT, then
/// to the current directory.
std::filesystem::path resolve_data_root(const std::optional<std::filesystem::path>& flag);

/// Parses a manifest JSON array. Paths are resolved against `data_root` and
/// must exist; tile ids must be unique.
SplitManifest parse_manifest(const nlohmann::json& doc, SplitName split,
                             const std::filesystem::path& data_root);
SplitManifest load_manifest(const std::filesystem::path& file, SplitName split,
                            const std::filesystem::path& data_root);
/// Writes `manifest` as a JSON array with paths relative to `data_root`.
void save_manifest(const SplitManifest& manifest, const std::filesystem::path& file,
                   const std::filesystem::path& data_root);

/// Sidecar header stored next to every binary payload as `<stem>.json`.
struct RasterHeader {
  int width = 0;
  int height = 0;
  std::vector<BandId> band_ids;  // empty for label files
  std::string tile_id;
  std::string region;
  std::string dtype = "float32";  // "float32" or "int8"

  nlohmann::json to_json() const;
  static RasterHeader from_json(const nlohmann::json& j);
};

std::filesystem::path sidecar_path(const std::filesystem::path& payload);

RasterHeader read_header(const std::filesystem::path& payload);

/// Band-sequential little-endian float32 payload, one grid per header band.
std::vector<FloatGrid> read_raster(const std::filesystem::path& payload, RasterHeader* header = nullptr);
void write_raster(const std::filesystem::path& payload, const RasterHeader& header,
                  std::span<const FloatGrid> bands);

LabelGrid read_labels(const std::filesystem::path& payload, RasterHeader* header = nullptr);
void write_labels(const std::filesystem::path& payload, const LabelGrid& labels,
                  const std::string& tile_id, const std::string& region);

/// valid = label != NoData and each of `bands` (all tile bands when empty)
/// is finite at the pixel.
std::vector<std::uint8_t> compute_valid_mask(const Tile& tile, const LabelGrid& labels,
                                             std::span<const BandId> bands = {});

/// Loads every raster of the entry (or only `bands` when non-empty) and the
/// label grid. Throws IoError naming the offending file on missing,
/// truncated, or dimensionally inconsistent input.
std::pair<Tile, LabelGrid> load_tile(const ManifestEntry& entry, std::span<const BandId> bands = {});

std::vector<std::pair<Tile, LabelGrid>> load_tiles(const SplitManifest& manifest,
                                                   std::span<const BandId> bands = {});

struct DatasetStats {
  double dry_fraction = 0.0;
  double water_fraction = 0.0;
  double nodata_fraction = 0.0;
  std::map<std::string, double> region_fractions;

  std::uint64_t dry_pixels = 0;
  std::uint64_t water_pixels = 0;
  std::uint64_t nodata_pixels = 0;
  std::map<std::string, std::uint64_t> region_valid_pixels;

  nlohmann::json to_json() const;
};

/// Pixel-count accumulator behind dataset_statistics(). Accumulators of
/// disjoint tile sets merge by addition.
class DatasetStatsAccumulator {
 public:
  void add(const std::string& region, const LabelGrid& labels);
  void merge(const DatasetStatsAccumulator& other);
  std::uint64_t tile_count() const { return tiles_; }
  /// Class fractions over all pixels; region fractions over non-NoData pixels.
  DatasetStats finish() const;

 private:
  std::uint64_t dry_ = 0;
  std::uint64_t water_ = 0;
  std::uint64_t nodata_ = 0;
  std::uint64_t tiles_ = 0;
  std::map<std::string, std::uint64_t> region_valid_;
};

/// Reads only the label files. Throws InvalidArgument if no tile is listed.
DatasetStats dataset_statistics(std::span<const SplitManifest> manifests);

}  // namespace floodpix::io
