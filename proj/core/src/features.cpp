#include "floodpix/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "floodpix/error.hpp"

namespace floodpix::features {
namespace {

constexpr std::array<std::string_view, 23> kCanonical = {
    "SAR",
    "OPT",
    "O3",
    "S2",
    "RGB",
    "RGBN",
    "HSV(RGB)",
    "HSV(O3)",
    "cNDWI",
    "cAWEI",
    "cAWEI+cNDWI",
    "HSV(O3)+cAWEI+cNDWI",
    "SAR_OPT",
    "SAR_O3",
    "SAR_S2",
    "SAR_RGB",
    "SAR_RGBN",
    "SAR_HSV(RGB)",
    "SAR_HSV(O3)",
    "SAR_cNDWI",
    "SAR_cAWEI",
    "SAR_cAWEI+cNDWI",
    "SAR_HSV(O3)+cAWEI+cNDWI",
};

constexpr std::array<Block, 10> kAllBlocks = {Block::SAR, Block::OPT,     Block::O3,     Block::S2,    Block::RGB,
                                              Block::RGBN, Block::HSV_RGB, Block::HSV_O3, Block::cNDWI, Block::cAWEI};

// S2 without the three 60 m bands (B1, B9, B10).
const std::vector<BandId> kOptBands = {BandId::B2, BandId::B3, BandId::B4,  BandId::B5,  BandId::B6,
                                       BandId::B7, BandId::B8, BandId::B8A, BandId::B11, BandId::B12};
// (SWIR-2, NIR, Red) fill the (R, G, B) slots of the HSV transform.
const std::vector<BandId> kO3Bands = {kSwir2, kNir, kRed};
const std::vector<BandId> kRgbBands = {kRed, kGreen, kBlue};
const std::vector<BandId> kRgbnBands = {kRed, kGreen, kBlue, kNir};

void require_same_shape(const FloatGrid& a, const FloatGrid& b) {
  if (a.width != b.width || a.height != b.height) throw InvalidArgument("grid shapes differ");
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace

std::string_view index_name(IndexKind kind) {
  switch (kind) {
    case IndexKind::NDWI: return "NDWI";
    case IndexKind::MNDWI: return "MNDWI";
    case IndexKind::AWEI: return "AWEI";
    case IndexKind::AWEISH: return "AWEISH";
  }
  return "?";
}

std::vector<BandId> index_bands(IndexKind kind) {
  switch (kind) {
    case IndexKind::NDWI: return {kGreen, kNir};
    case IndexKind::MNDWI: return {kGreen, kSwir1};
    case IndexKind::AWEI: return {kGreen, kNir, kSwir1, kSwir2};
    case IndexKind::AWEISH: return {kBlue, kGreen, kNir, kSwir1, kSwir2};
  }
  return {};
}

FloatGrid compute_index(IndexKind kind, const Tile& tile) {
  for (BandId b : index_bands(kind)) {
    if (!tile.has_band(b)) {
      throw InvalidArgument(std::string(index_name(kind)) + " needs band " + std::string(io::band_name(b)) +
                            ", missing in tile '" + tile.tile_id + "'");
    }
  }
  FloatGrid out(tile.width, tile.height);
  const double s = 1.0 / kReflectanceScale;
  auto px = [&](BandId b, std::size_t i) { return static_cast<double>(tile.band(b)[i]) * s; };
  const std::size_t n = tile.pixel_count();
  switch (kind) {
    case IndexKind::NDWI: {
      const auto& g = tile.band(kGreen);
      const auto& nir = tile.band(kNir);
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(ndwi(g[i] * s, nir[i] * s));
      break;
    }
    case IndexKind::MNDWI: {
      const auto& g = tile.band(kGreen);
      const auto& sw1 = tile.band(kSwir1);
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(mndwi(g[i] * s, sw1[i] * s));
      break;
    }
    case IndexKind::AWEI:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(awei(px(kGreen, i), px(kSwir1, i), px(kNir, i), px(kSwir2, i)));
      }
      break;
    case IndexKind::AWEISH:
      for (std::size_t i = 0; i < n; ++i) {
        out[i] = static_cast<float>(
            aweish(px(kBlue, i), px(kGreen, i), px(kNir, i), px(kSwir1, i), px(kSwir2, i)));
      }
      break;
  }
  return out;
}

Hsv rgb_to_hsv(double r, double g, double b) {
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out;
  out.v = mx;
  out.s = mx > 0.0 ? delta / mx : 0.0;
  if (delta <= 0.0) return out;
  double h;
  if (mx == r) {
    h = (g - b) / delta;
  } else if (mx == g) {
    h = (b - r) / delta + 2.0;
  } else {
    h = (r - g) / delta + 4.0;
  }
  h /= 6.0;
  if (h < 0.0) h += 1.0;
  if (h >= 1.0) h -= 1.0;
  out.h = h;
  return out;
}

std::array<double, 3> hsv_to_rgb(const Hsv& hsv) {
  const double h6 = hsv.h * 6.0;
  const double c = hsv.v * hsv.s;
  const int sector = static_cast<int>(std::floor(h6)) % 6;
  const double f = h6 - std::floor(h6);
  const double p = hsv.v - c;
  const double q = hsv.v - c * f;
  const double t = hsv.v - c * (1.0 - f);
  switch (sector) {
    case 0: return {hsv.v, t, p};
    case 1: return {q, hsv.v, p};
    case 2: return {p, hsv.v, t};
    case 3: return {p, q, hsv.v};
    case 4: return {t, p, hsv.v};
    default: return {hsv.v, p, q};
  }
}

std::array<FloatGrid, 3> hsv_transform(const FloatGrid& r, const FloatGrid& g, const FloatGrid& b) {
  require_same_shape(r, g);
  require_same_shape(r, b);
  constexpr double kTol = 1e-6;
  std::array<FloatGrid, 3> out{FloatGrid(r.width, r.height), FloatGrid(r.width, r.height),
                               FloatGrid(r.width, r.height)};
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double rv = r[i], gv = g[i], bv = b[i];
    if (std::isnan(rv) || std::isnan(gv) || std::isnan(bv)) {
      // Non-finite pixels are masked by the caller.
      out[0][i] = out[1][i] = out[2][i] = std::numeric_limits<float>::quiet_NaN();
      continue;
    }
    for (double v : {rv, gv, bv}) {
      if (!(v >= -kTol && v <= 1.0 + kTol)) {
        throw InvalidArgument("hsv_transform input " + std::to_string(v) + " outside [0, 1]");
      }
    }
    const Hsv hsv = rgb_to_hsv(clamp01(rv), clamp01(gv), clamp01(bv));
    out[0][i] = static_cast<float>(hsv.h);
    out[1][i] = static_cast<float>(hsv.s);
    out[2][i] = static_cast<float>(hsv.v);
  }
  return out;
}

FloatGrid normalize_band(const FloatGrid& band, Modality modality, const NormalizationBounds& bounds) {
  FloatGrid out(band.width, band.height);
  if (modality == Modality::Optical) {
    const double inv = 1.0 / bounds.optical_scale;
    for (std::size_t i = 0; i < band.size(); ++i) out[i] = static_cast<float>(clamp01(band[i] * inv));
  } else {
    const double lo = bounds.sar_lo_db;
    const double span = bounds.sar_hi_db - bounds.sar_lo_db;
    if (!(span > 0.0)) throw InvalidArgument("SAR normalization needs hi > lo");
    for (std::size_t i = 0; i < band.size(); ++i) out[i] = static_cast<float>(clamp01((band[i] - lo) / span));
  }
  return out;
}

std::string_view block_name(Block block) {
  switch (block) {
    case Block::SAR: return "SAR";
    case Block::OPT: return "OPT";
    case Block::O3: return "O3";
    case Block::S2: return "S2";
    case Block::RGB: return "RGB";
    case Block::RGBN: return "RGBN";
    case Block::HSV_RGB: return "HSV(RGB)";
    case Block::HSV_O3: return "HSV(O3)";
    case Block::cNDWI: return "cNDWI";
    case Block::cAWEI: return "cAWEI";
  }
  return "?";
}

std::vector<BandId> block_bands(Block block) {
  switch (block) {
    case Block::SAR: return {BandId::VV, BandId::VH};
    case Block::OPT: return kOptBands;
    case Block::O3:
    case Block::HSV_O3: return kO3Bands;
    case Block::S2: {
      auto s2 = io::optical_bands();
      return {s2.begin(), s2.end()};
    }
    case Block::RGB:
    case Block::HSV_RGB: return kRgbBands;
    case Block::RGBN: return kRgbnBands;
    case Block::cNDWI: return {kGreen, kNir, kSwir1};
    case Block::cAWEI: return {kBlue, kGreen, kNir, kSwir1, kSwir2};
  }
  return {};
}

std::vector<std::string> block_columns(Block block) {
  switch (block) {
    case Block::HSV_RGB: return {"H(RGB)", "S(RGB)", "V(RGB)"};
    case Block::HSV_O3: return {"H(O3)", "S(O3)", "V(O3)"};
    case Block::cNDWI: return {"NDWI", "MNDWI"};
    case Block::cAWEI: return {"AWEI", "AWEISH"};
    default: {
      std::vector<std::string> names;
      for (BandId b : block_bands(block)) names.emplace_back(io::band_name(b));
      return names;
    }
  }
}

int block_width(Block block) { return static_cast<int>(block_columns(block).size()); }

std::string FeatureSpaceSpec::name() const { return format_feature_space(*this); }

int FeatureSpaceSpec::dimensionality() const {
  int d = 0;
  for (Block b : blocks) d += block_width(b);
  return d;
}

std::vector<std::string> FeatureSpaceSpec::column_names() const {
  std::vector<std::string> names;
  for (Block b : blocks) {
    auto cols = block_columns(b);
    names.insert(names.end(), cols.begin(), cols.end());
  }
  return names;
}

std::vector<BandId> FeatureSpaceSpec::required_bands() const {
  std::set<BandId> bands;
  for (Block b : blocks) {
    for (BandId id : block_bands(b)) bands.insert(id);
  }
  return {bands.begin(), bands.end()};
}

FeatureSpaceSpec parse_feature_space(std::string_view name) {
  FeatureSpaceSpec spec;
  std::string_view rest = name;
  constexpr std::string_view kPrefix = "SAR_";
  if (rest.starts_with(kPrefix)) {
    spec.blocks.push_back(Block::SAR);
    rest.remove_prefix(kPrefix.size());
    if (rest.starts_with(kPrefix)) {
      throw InvalidArgument("duplicate SAR prefix in feature space '" + std::string(name) + "'");
    }
  }
  if (rest.empty()) throw InvalidArgument("empty feature space '" + std::string(name) + "'");
  while (true) {
    const auto plus = rest.find('+');
    const std::string_view token = rest.substr(0, plus);
    const auto it = std::find_if(kAllBlocks.begin(), kAllBlocks.end(),
                                 [&](Block b) { return block_name(b) == token; });
    if (it == kAllBlocks.end()) {
      throw InvalidArgument("unknown feature block '" + std::string(token) + "' in '" + std::string(name) + "'");
    }
    if (std::find(spec.blocks.begin(), spec.blocks.end(), *it) != spec.blocks.end()) {
      throw InvalidArgument("duplicate feature block '" + std::string(token) + "' in '" + std::string(name) + "'");
    }
    spec.blocks.push_back(*it);
    if (plus == std::string_view::npos) break;
    rest.remove_prefix(plus + 1);
  }
  return spec;
}

std::string format_feature_space(const FeatureSpaceSpec& spec) {
  std::string out;
  std::size_t start = 0;
  if (spec.blocks.size() > 1 && spec.blocks.front() == Block::SAR) {
    out = "SAR_";
    start = 1;
  }
  for (std::size_t i = start; i < spec.blocks.size(); ++i) {
    if (i > start) out += '+';
    out += block_name(spec.blocks[i]);
  }
  return out;
}

std::span<const std::string_view> canonical_feature_spaces() { return kCanonical; }

nlohmann::json FeatureOptions::to_json() const {
  return {{"speckle_filter", speckle_filter},
          {"lee_sigma",
           {{"window", lee.window},
            {"sigma_range", lee.sigma_range},
            {"target_window", lee.target_window},
            {"looks", lee.looks},
            {"point_target_count", lee.point_target_count}}},
          {"normalization",
           {{"optical_scale", bounds.optical_scale}, {"sar_lo_db", bounds.sar_lo_db}, {"sar_hi_db", bounds.sar_hi_db}}}};
}

FeatureOptions FeatureOptions::from_json(const nlohmann::json& j) {
  FeatureOptions o;
  o.speckle_filter = j.value("speckle_filter", false);
  if (j.contains("lee_sigma")) {
    const auto& l = j["lee_sigma"];
    o.lee.window = l.value("window", o.lee.window);
    o.lee.sigma_range = l.value("sigma_range", o.lee.sigma_range);
    o.lee.target_window = l.value("target_window", o.lee.target_window);
    o.lee.looks = l.value("looks", o.lee.looks);
    o.lee.point_target_count = l.value("point_target_count", o.lee.point_target_count);
  }
  if (j.contains("normalization")) {
    const auto& n = j["normalization"];
    o.bounds.optical_scale = n.value("optical_scale", o.bounds.optical_scale);
    o.bounds.sar_lo_db = n.value("sar_lo_db", o.bounds.sar_lo_db);
    o.bounds.sar_hi_db = n.value("sar_hi_db", o.bounds.sar_hi_db);
  }
  return o;
}

TileFeatures compute_tile_features(const FeatureSpaceSpec& spec, const Tile& tile, const FeatureOptions& options) {
  const auto bands = spec.required_bands();
  for (BandId b : bands) {
    if (!tile.has_band(b)) {
      throw InvalidArgument("feature space " + spec.name() + " needs band " + std::string(io::band_name(b)) +
                            ", missing in tile '" + tile.tile_id + "'");
    }
  }
  const std::size_t n = tile.pixel_count();
  TileFeatures out;
  out.cols = static_cast<std::size_t>(spec.dimensionality());
  out.pixels = n;
  out.values.assign(n * out.cols, 0.0f);
  out.finite.assign(n, 1);
  for (BandId b : bands) {
    const auto& g = tile.band(b);
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(g[i])) out.finite[i] = 0;
    }
  }

  // Normalized raw bands, computed once per band.
  std::map<BandId, FloatGrid> normalized;
  auto norm = [&](BandId b) -> const FloatGrid& {
    auto it = normalized.find(b);
    if (it != normalized.end()) return it->second;
    FloatGrid g;
    if (io::is_sar(b)) {
      g = options.speckle_filter ? normalize_band(lee_sigma_filter_db(tile.band(b), options.lee), Modality::SAR,
                                                  options.bounds)
                                 : normalize_band(tile.band(b), Modality::SAR, options.bounds);
    } else {
      g = normalize_band(tile.band(b), Modality::Optical, options.bounds);
    }
    return normalized.emplace(b, std::move(g)).first->second;
  };

  std::size_t col = 0;
  auto put = [&](const FloatGrid& g) {
    for (std::size_t i = 0; i < n; ++i) {
      if (out.finite[i]) out.values[i * out.cols + col] = g[i];
    }
    ++col;
  };

  for (Block block : spec.blocks) {
    switch (block) {
      case Block::SAR:
      case Block::OPT:
      case Block::O3:
      case Block::S2:
      case Block::RGB:
      case Block::RGBN:
        for (BandId b : block_bands(block)) put(norm(b));
        break;
      case Block::HSV_RGB:
      case Block::HSV_O3: {
        const auto src = block_bands(block);
        const auto hsv = hsv_transform(norm(src[0]), norm(src[1]), norm(src[2]));
        for (const auto& g : hsv) put(g);
        break;
      }
      case Block::cNDWI:
        put(compute_index(IndexKind::NDWI, tile));
        put(compute_index(IndexKind::MNDWI, tile));
        break;
      case Block::cAWEI:
        put(compute_index(IndexKind::AWEI, tile));
        put(compute_index(IndexKind::AWEISH, tile));
        break;
    }
  }
  return out;
}

FeatureMatrix build_feature_matrix(const FeatureSpaceSpec& spec, std::span<const std::pair<Tile, LabelGrid>> tiles,
                                   const FeatureOptions& options) {
  FeatureMatrix m;
  m.cols = static_cast<std::size_t>(spec.dimensionality());
  m.column_names = spec.column_names();
  for (std::size_t t = 0; t < tiles.size(); ++t) {
    const auto& [tile, labels] = tiles[t];
    if (!labels.same_shape(tile.width, tile.height)) {
      throw InvalidArgument("label grid shape does not match tile '" + tile.tile_id + "'");
    }
    const TileFeatures tf = compute_tile_features(spec, tile, options);
    m.tiles.push_back({tile.tile_id, tile.region});
    for (std::size_t i = 0; i < tf.pixels; ++i) {
      if (!tf.finite[i] || labels[i] == io::Label::NoData) continue;
      const float* src = tf.values.data() + i * tf.cols;
      bool finite = true;
      for (std::size_t c = 0; c < tf.cols; ++c) finite = finite && std::isfinite(src[c]);
      if (!finite) continue;
      m.values.insert(m.values.end(), src, src + tf.cols);
      m.provenance.push_back({static_cast<std::uint32_t>(t), static_cast<std::uint32_t>(i)});
      m.labels.push_back(labels[i]);
    }
  }
  m.rows = m.labels.size();
  return m;
}

}  // namespace floodpix::features
