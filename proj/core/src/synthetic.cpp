#include "floodpix/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "floodpix/error.hpp"
#include "floodpix/rng.hpp"

namespace floodpix::synthetic {
namespace fs = std::filesystem;
using io::Label;

namespace {

constexpr std::size_t idx(BandId b) { return io::channel_index(b); }

void set_band(PixelModel& m, BandId b, double water, double dry, double sigma) {
  m.water_mean[idx(b)] = water;
  m.dry_mean[idx(b)] = dry;
  m.sigma[idx(b)] = sigma;
}

// Typical surface reflectances (x 10000): water is dark beyond the red edge.
void optical_defaults(PixelModel& m, double sigma, double separation) {
  struct Row {
    BandId band;
    double water, dry;
  };
  const Row rows[] = {{BandId::B1, 1200, 1300}, {BandId::B2, 1000, 900},  {BandId::B3, 900, 1000},
                      {BandId::B4, 700, 1100},  {BandId::B5, 600, 1400},  {BandId::B6, 500, 2000},
                      {BandId::B7, 450, 2300},  {BandId::B8, 400, 2500},  {BandId::B8A, 350, 2600},
                      {BandId::B9, 150, 900},   {BandId::B10, 20, 30},    {BandId::B11, 200, 2200},
                      {BandId::B12, 150, 1500}};
  for (const auto& r : rows) {
    const double mid = 0.5 * (r.water + r.dry);
    const double half = 0.5 * (r.dry - r.water) * separation;
    set_band(m, r.band, mid - half, mid + half, sigma);
  }
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// Split membership of the main tiles in the 60:20:20 ratio.
std::vector<io::SplitName> assign_splits(int tiles, Rng& rng) {
  std::vector<int> order(static_cast<std::size_t>(tiles));
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(std::span<int>(order));
  const int n_train = static_cast<int>(std::lround(0.6 * tiles));
  const int n_valid = static_cast<int>(std::lround(0.2 * tiles));
  std::vector<io::SplitName> split(static_cast<std::size_t>(tiles));
  for (int k = 0; k < tiles; ++k) {
    const int t = order[static_cast<std::size_t>(k)];
    split[static_cast<std::size_t>(t)] = k < n_train ? io::SplitName::Train
                                         : k < n_train + n_valid ? io::SplitName::Valid
                                                                 : io::SplitName::Test;
  }
  return split;
}

}  // namespace

SyntheticSpec separable_fixture(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  set_band(s.pixels, BandId::VV, -20.0, -9.0, 3.0);
  set_band(s.pixels, BandId::VH, -26.0, -15.0, 3.0);
  optical_defaults(s.pixels, 300.0, 1.0);
  return s;
}

SyntheticSpec correlated_fixture(std::uint64_t seed) {
  SyntheticSpec s;
  s.seed = seed;
  s.water_fraction_min = 0.05;
  s.water_fraction_max = 0.25;
  // Within a modality every band moves by the same number of sigmas, so the
  // correlated bands repeat one piece of evidence.
  set_band(s.pixels, BandId::VV, -16.0, -12.0, 3.0);
  set_band(s.pixels, BandId::VH, -22.0, -18.0, 3.0);
  for (auto b : io::optical_bands()) set_band(s.pixels, b, 1200.0, 1500.0, 300.0);
  s.pixels.correlation = 0.9;
  return s;
}

SyntheticDataset generate_dataset(const SyntheticSpec& spec, const fs::path& root) {
  if (spec.tiles < 5 || spec.width <= 0 || spec.height <= 0 || spec.regions < 1 || spec.bolivia_tiles < 0) {
    throw InvalidArgument("synthetic spec needs at least 5 tiles, positive size and one region");
  }
  const double rho = spec.pixels.correlation;
  if (!(rho >= 0.0 && rho < 1.0)) throw InvalidArgument("correlation must lie in [0, 1)");

  Rng split_rng(spec.seed);
  const auto main_split = assign_splits(spec.tiles, split_rng);
  std::array<io::SplitManifest, 4> manifests;
  for (std::size_t s = 0; s < 4; ++s) manifests[s].split = static_cast<io::SplitName>(s);

  const auto optical = io::optical_bands();
  const auto sar = io::sar_bands();
  const int total = spec.tiles + spec.bolivia_tiles;
  const std::size_t n = static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height);

  for (int t = 0; t < total; ++t) {
    const bool bolivia = t >= spec.tiles;
    const int region_index = bolivia ? spec.regions : t % spec.regions;
    const std::string region = bolivia ? "Bolivia" : "Region" + std::to_string(region_index);
    const std::string tile_id = region + "_" + std::to_string(100000 + t);
    Rng rng(spec.seed * 1000003ULL + static_cast<std::uint64_t>(t) + 1);

    // Regions differ in their typical water share.
    const double span = spec.water_fraction_max - spec.water_fraction_min;
    const double base = spec.regions > 1 && !bolivia
                            ? spec.water_fraction_min + span * region_index / (spec.regions - 1)
                            : spec.water_fraction_min + 0.5 * span;
    const double fraction = std::clamp(base + 0.1 * span * (rng.uniform() - 0.5), 0.01, 0.99);

    // Water occupies the low side of a random direction, with a wavy shore.
    const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> proj(n);
    for (int y = 0; y < spec.height; ++y) {
      for (int x = 0; x < spec.width; ++x) {
        const double u = x * std::cos(theta) + y * std::sin(theta);
        const double v = -x * std::sin(theta) + y * std::cos(theta);
        proj[static_cast<std::size_t>(y) * spec.width + x] = u + 3.0 * std::sin(v / 6.0 + phase);
      }
    }
    std::vector<double> sorted = proj;
    const auto cut = static_cast<std::size_t>(fraction * static_cast<double>(n - 1));
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(cut), sorted.end());
    const double level = sorted[cut];

    io::LabelGrid labels(spec.width, spec.height, Label::Dry);
    for (std::size_t i = 0; i < n; ++i) labels.values[i] = proj[i] <= level ? Label::Water : Label::Dry;
    if (rng.uniform() < spec.nodata_tile_fraction) {
      const int w = std::max(1, spec.width / 4), h = std::max(1, spec.height / 4);
      const int x0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.width - w + 1)));
      const int y0 = static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.height - h + 1)));
      for (int y = y0; y < y0 + h; ++y) {
        for (int x = x0; x < x0 + w; ++x) labels.at(x, y) = Label::NoData;
      }
    }

    std::vector<io::FloatGrid> s2(optical.size(), io::FloatGrid(spec.width, spec.height));
    std::vector<io::FloatGrid> s1(sar.size(), io::FloatGrid(spec.width, spec.height));
    const double a = std::sqrt(rho), b = std::sqrt(1.0 - rho);
    for (std::size_t i = 0; i < n; ++i) {
      // NoData pixels still get plausible values, drawn as dry land.
      const bool water = labels.values[i] == Label::Water;
      const auto& mean = water ? spec.pixels.water_mean : spec.pixels.dry_mean;
      const double shared_opt = rng.normal();
      for (std::size_t k = 0; k < optical.size(); ++k) {
        const std::size_t c = idx(optical[k]);
        const double v = mean[c] + spec.pixels.sigma[c] * (a * shared_opt + b * rng.normal());
        s2[k].values[i] = static_cast<float>(std::max(v, 0.0));
      }
      const double shared_sar = rng.normal();
      for (std::size_t k = 0; k < sar.size(); ++k) {
        const std::size_t c = idx(sar[k]);
        s1[k].values[i] = static_cast<float>(mean[c] + spec.pixels.sigma[c] * (a * shared_sar + b * rng.normal()));
      }
    }

    io::ManifestEntry entry;
    entry.tile_id = tile_id;
    entry.region = region;
    const fs::path s1_path = root / "S1" / (tile_id + "_S1.f32");
    const fs::path s2_path = root / "S2" / (tile_id + "_S2.f32");
    const fs::path label_path = root / "Label" / (tile_id + "_Label.i8");
    fs::create_directories(s1_path.parent_path());
    fs::create_directories(s2_path.parent_path());
    fs::create_directories(label_path.parent_path());
    io::RasterHeader h1{spec.width, spec.height, {sar.begin(), sar.end()}, tile_id, region, "float32"};
    io::RasterHeader h2{spec.width, spec.height, {optical.begin(), optical.end()}, tile_id, region, "float32"};
    io::write_raster(s1_path, h1, s1);
    io::write_raster(s2_path, h2, s2);
    io::write_labels(label_path, labels, tile_id, region);
    entry.rasters = {s1_path, s2_path};
    entry.label = label_path;

    const io::SplitName split = bolivia ? io::SplitName::BoliviaTest : main_split[static_cast<std::size_t>(t)];
    manifests[static_cast<std::size_t>(split)].entries.push_back(std::move(entry));
  }

  SyntheticDataset out;
  out.root = root;
  fs::create_directories(root / "manifests");
  for (std::size_t s = 0; s < 4; ++s) {
    io::save_manifest(manifests[s], root / "manifests" / (std::string(io::split_name(manifests[s].split)) + ".json"),
                      root);
    out.tiles_per_split[s] = manifests[s].entries.size();
  }
  return out;
}

double bayes_iou(const PixelModel& model, std::span<const BandId> bands, double water_fraction) {
  if (bands.empty()) throw InvalidArgument("bayes_iou needs at least one band");
  if (!(water_fraction > 0.0 && water_fraction < 1.0)) throw InvalidArgument("water fraction must lie in (0, 1)");
  const auto d = static_cast<Eigen::Index>(bands.size());
  Eigen::VectorXd delta(d);
  Eigen::MatrixXd cov(d, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    const std::size_t ci = idx(bands[static_cast<std::size_t>(i)]);
    delta[i] = model.water_mean[ci] - model.dry_mean[ci];
    for (Eigen::Index j = 0; j < d; ++j) {
      const std::size_t cj = idx(bands[static_cast<std::size_t>(j)]);
      const bool same_modality = io::is_sar(bands[static_cast<std::size_t>(i)]) == io::is_sar(bands[static_cast<std::size_t>(j)]);
      const double r = i == j ? 1.0 : (same_modality ? model.correlation : 0.0);
      cov(i, j) = r * model.sigma[ci] * model.sigma[cj];
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw InvalidArgument("pixel model covariance is not positive definite");
  const double mahalanobis = std::sqrt(delta.dot(llt.solve(delta)));
  const double c = std::log(water_fraction / (1.0 - water_fraction));
  // The log-likelihood ratio is N(+D^2/2, D^2) for water and N(-D^2/2, D^2) for dry.
  const double hit = normal_cdf((0.5 * mahalanobis * mahalanobis + c) / mahalanobis);
  const double false_alarm = normal_cdf((-0.5 * mahalanobis * mahalanobis + c) / mahalanobis);
  const double tp = water_fraction * hit;
  const double fn = water_fraction * (1.0 - hit);
  const double fp = (1.0 - water_fraction) * false_alarm;
  return tp / (tp + fn + fp);
}

}  // namespace floodpix::synthetic
