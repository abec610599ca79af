#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "floodpix/model.hpp"
#include "floodpix/raster_io.hpp"

namespace floodpix::features {

using io::BandId;
using io::FloatGrid;
using io::LabelGrid;
using io::Tile;

// Bands used for the named spectral roles.
inline constexpr BandId kBlue = BandId::B2;
inline constexpr BandId kGreen = BandId::B3;
inline constexpr BandId kRed = BandId::B4;
inline constexpr BandId kNir = BandId::B8;
inline constexpr BandId kSwir1 = BandId::B11;
inline constexpr BandId kSwir2 = BandId::B12;

/// Stored optical values are reflectance scaled by this factor.
inline constexpr double kReflectanceScale = 10000.0;

enum class IndexKind { NDWI, MNDWI, AWEI, AWEISH };

std::string_view index_name(IndexKind kind);
std::vector<BandId> index_bands(IndexKind kind);

// Per-pixel formulas on reflectance. The normalized differences return 0 for
// a zero denominator.
inline double ndwi(double green, double nir) {
  const double den = green + nir;
  return den == 0.0 ? 0.0 : (green - nir) / den;
}
inline double mndwi(double green, double swir1) {
  const double den = green + swir1;
  return den == 0.0 ? 0.0 : (green - swir1) / den;
}
inline double awei(double green, double swir1, double nir, double swir2) {
  return 4.0 * (green - swir1) - 0.25 * (nir + 11.0 * swir2);
}
inline double aweish(double blue, double green, double nir, double swir1, double swir2) {
  return blue + 2.5 * green - 1.5 * (nir + swir1) - 0.25 * swir2;
}

/// Index grid of a tile. Inputs are divided by kReflectanceScale without
/// clamping. Throws InvalidArgument when a required band is missing.
FloatGrid compute_index(IndexKind kind, const Tile& tile);

struct Hsv {
  double h = 0.0;  // [0, 1), fraction of a full turn
  double s = 0.0;
  double v = 0.0;
};

/// Hexcone conversion of an RGB triple in [0, 1]. Gray maps to H = 0.
Hsv rgb_to_hsv(double r, double g, double b);
std::array<double, 3> hsv_to_rgb(const Hsv& hsv);

/// Throws InvalidArgument if any input leaves [0, 1] by more than 1e-6 or the
/// grids differ in shape.
std::array<FloatGrid, 3> hsv_transform(const FloatGrid& r, const FloatGrid& g, const FloatGrid& b);

enum class Modality { Optical, SAR };

struct NormalizationBounds {
  double optical_scale = kReflectanceScale;
  double sar_lo_db = -30.0;
  double sar_hi_db = 0.0;
};

/// Optical: value / optical_scale; SAR: (dB - lo) / (hi - lo). Both clamped
/// to [0, 1].
FloatGrid normalize_band(const FloatGrid& band, Modality modality, const NormalizationBounds& bounds = {});

struct LeeSigmaParams {
  int window = 7;
  double sigma_range = 0.9;
  int target_window = 3;
  double looks = 1.0;
  /// Minimum count of pixels above the 98th percentile in the 3x3
  /// neighbourhood for the centre to be kept as a point target.
  int point_target_count = 5;
};

/// Speckle sigma range [lower, upper] (multiples of the a priori mean) that
/// holds `sigma_range` of an L-look intensity speckle distribution with unit
/// mean inside the interval, plus the speckle standard deviation `eta`
/// of the distribution truncated to that interval.
struct SigmaRange {
  double lower = 0.0;
  double upper = 0.0;
  double eta = 0.0;
};
SigmaRange speckle_sigma_range(double looks, double sigma_range);

/// Improved Lee sigma filter on a linear-intensity grid, with edge-replication
/// padding. Throws InvalidArgument for even or inconsistent window sizes.
FloatGrid lee_sigma_filter(const FloatGrid& intensity, const LeeSigmaParams& params = {});

/// dB -> linear -> lee_sigma_filter -> dB.
FloatGrid lee_sigma_filter_db(const FloatGrid& db, const LeeSigmaParams& params = {});

/// One element of a feature space composition.
enum class Block { SAR, OPT, O3, S2, RGB, RGBN, HSV_RGB, HSV_O3, cNDWI, cAWEI };

std::string_view block_name(Block block);
int block_width(Block block);
std::vector<std::string> block_columns(Block block);
std::vector<BandId> block_bands(Block block);

/// Parsed composition such as "SAR_HSV(O3)+cAWEI+cNDWI".
struct FeatureSpaceSpec {
  std::vector<Block> blocks;

  std::string name() const;
  int dimensionality() const;
  std::vector<std::string> column_names() const;
  std::vector<BandId> required_bands() const;
  bool operator==(const FeatureSpaceSpec&) const = default;
};

/// Grammar: `[SAR_] block (+ block)*`. Throws InvalidArgument for unknown
/// blocks and repeated blocks (including a doubled SAR prefix).
FeatureSpaceSpec parse_feature_space(std::string_view name);
std::string format_feature_space(const FeatureSpaceSpec& spec);

/// The 23 feature spaces compared in the study, in listing order.
std::span<const std::string_view> canonical_feature_spaces();

struct FeatureOptions {
  bool speckle_filter = false;
  LeeSigmaParams lee;
  NormalizationBounds bounds;

  nlohmann::json to_json() const;
  static FeatureOptions from_json(const nlohmann::json& j);
};

/// Dense features for every pixel of a tile; `finite[i]` is 0 where an input
/// band was non-finite (those rows hold zeros).
struct TileFeatures {
  std::size_t cols = 0;
  std::size_t pixels = 0;
  std::vector<float> values;
  std::vector<std::uint8_t> finite;

  FeatureView view() const { return {values, pixels, cols}; }
};

TileFeatures compute_tile_features(const FeatureSpaceSpec& spec, const Tile& tile, const FeatureOptions& options);

struct TileRef {
  std::string tile_id;
  std::string region;
};

struct PixelRef {
  std::uint32_t tile = 0;   // index into FeatureMatrix::tiles
  std::uint32_t pixel = 0;  // row-major pixel index within the tile
};

/// N x d training/evaluation matrix over valid pixels only.
struct FeatureMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;
  std::vector<std::string> column_names;
  std::vector<TileRef> tiles;
  std::vector<PixelRef> provenance;
  std::vector<io::Label> labels;  // Dry or Water

  FeatureView view() const { return {values, rows, cols}; }
  std::span<const float> row(std::size_t i) const { return std::span<const float>(values).subspan(i * cols, cols); }
};

/// Rows are the pixels whose label is not NoData and whose required bands are
/// finite, tile by tile in input order, pixels in row-major order.
FeatureMatrix build_feature_matrix(const FeatureSpaceSpec& spec,
                                   std::span<const std::pair<Tile, LabelGrid>> tiles,
                                   const FeatureOptions& options = {});

}  // namespace floodpix::features
