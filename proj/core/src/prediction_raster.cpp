#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include <png.h>

#include "floodpix/error.hpp"
#include "floodpix/harness.hpp"

namespace floodpix::harness {
namespace fs = std::filesystem;
using io::BandId;
using io::Label;

namespace {

constexpr double kBackdropMax = 200.0;
constexpr double kReflectanceDisplayMax = 3000.0;

// Backdrop intensity in [0, 1] for a band, NaN where the band is not finite.
std::vector<double> display_band(const io::Tile& tile, BandId id) {
  const auto& g = tile.band(id).values;
  std::vector<double> out(g.size());
  if (io::is_sar(id)) {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::clamp((g[i] + 30.0) / 30.0, 0.0, 1.0);
  } else {
    for (std::size_t i = 0; i < g.size(); ++i) out[i] = std::clamp(g[i] / kReflectanceDisplayMax, 0.0, 1.0);
  }
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) out[i] = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::uint8_t shade(double v) {
  if (!std::isfinite(v)) return 0;
  return static_cast<std::uint8_t>(std::lround(v * kBackdropMax));
}

}  // namespace

PredictionRaster render_prediction(const Model& model, const features::FeatureSpaceSpec& spec,
                                   const features::FeatureOptions& options, const io::Tile& tile,
                                   const io::LabelGrid& truth) {
  if (truth.width != tile.width || truth.height != tile.height) {
    throw InvalidArgument("label grid does not match tile '" + tile.tile_id + "'");
  }
  const auto feats = features::compute_tile_features(spec, tile, options);
  const auto pred = model.predict(feats.view());
  const std::size_t n = tile.pixel_count();

  PredictionRaster out;
  out.width = tile.width;
  out.height = tile.height;
  out.labels.assign(n, -1);
  out.rgb.assign(n * 3, 0);

  if (tile.has_band(BandId::B4) && tile.has_band(BandId::B3) && tile.has_band(BandId::B2)) {
    const auto r = display_band(tile, BandId::B4);
    const auto g = display_band(tile, BandId::B3);
    const auto b = display_band(tile, BandId::B2);
    for (std::size_t i = 0; i < n; ++i) {
      out.rgb[3 * i] = shade(r[i]);
      out.rgb[3 * i + 1] = shade(g[i]);
      out.rgb[3 * i + 2] = shade(b[i]);
    }
  } else if (!tile.bands.empty()) {
    const BandId first = tile.has_band(BandId::VV) ? BandId::VV : tile.bands.begin()->first;
    const auto v = display_band(tile, first);
    for (std::size_t i = 0; i < n; ++i) std::memset(&out.rgb[3 * i], shade(v[i]), 3);
  }

  for (std::size_t i = 0; i < n; ++i) {
    const Label t = truth.values[i];
    std::array<std::uint8_t, 3> const* color = nullptr;
    if (t == Label::NoData || !feats.finite[i]) {
      color = &kColorNoData;
    } else {
      const bool p = pred[i] == Label::Water;
      out.labels[i] = static_cast<std::int8_t>(pred[i]);
      if (p && t == Label::Water) color = &kColorTruePositive;
      else if (!p && t == Label::Water) color = &kColorFalseNegative;
      else if (p) color = &kColorFalsePositive;
    }
    if (color) std::copy(color->begin(), color->end(), out.rgb.begin() + static_cast<std::ptrdiff_t>(3 * i));
  }
  return out;
}

void write_png(const fs::path& file, int width, int height, std::span<const std::uint8_t> rgb) {
  if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3) {
    throw InvalidArgument("PNG buffer does not match its dimensions");
  }
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(width);
  image.height = static_cast<png_uint_32>(height);
  image.format = PNG_FORMAT_RGB;
  const fs::path tmp = file.string() + ".tmp";
  if (!png_image_write_to_file(&image, tmp.c_str(), 0, rgb.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(file.string() + ": " + msg);
  }
  fs::rename(tmp, file);
}

std::vector<std::uint8_t> read_png_rgb(const fs::path& file, int* width, int* height) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, file.c_str())) throw IoError(file.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(file.string() + ": " + msg);
  }
  if (width) *width = static_cast<int>(image.width);
  if (height) *height = static_cast<int>(image.height);
  return buf;
}

void export_prediction_raster(const Model& model, const features::FeatureSpaceSpec& spec,
                              const features::FeatureOptions& options, const io::Tile& tile,
                              const io::LabelGrid& truth, const fs::path& stem) {
  const auto r = render_prediction(model, spec, options, tile, truth);
  write_png(stem.string() + ".png", r.width, r.height, r.rgb);
  io::LabelGrid grid;
  grid.width = r.width;
  grid.height = r.height;
  grid.values.resize(r.labels.size());
  for (std::size_t i = 0; i < r.labels.size(); ++i) grid.values[i] = static_cast<Label>(r.labels[i]);
  io::write_labels(stem.string() + ".i8", grid, tile.tile_id, tile.region);
}

}  // namespace floodpix::harness
