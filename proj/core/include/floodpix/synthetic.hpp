#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "floodpix/raster_io.hpp"

namespace floodpix::synthetic {

using io::BandId;

/// Class-conditional Gaussian pixel model. Within one modality (optical or
/// SAR) every band pair has correlation `correlation`; the modalities are
/// independent. Covariances are equal for both classes, so the Bayes rule
/// is linear and its IoU has a closed form.
struct PixelModel {
  std::array<double, io::kBandCount> water_mean{};
  std::array<double, io::kBandCount> dry_mean{};
  std::array<double, io::kBandCount> sigma{};
  double correlation = 0.0;
};

struct SyntheticSpec {
  int tiles = 20;          // split 60:20:20 into train, valid, test
  int bolivia_tiles = 4;   // held-out region
  int width = 64;
  int height = 64;
  int regions = 5;
  std::uint64_t seed = 0;
  double water_fraction_min = 0.1;
  double water_fraction_max = 0.5;
  /// Fraction of tiles that receive a NoData rectangle.
  double nodata_tile_fraction = 0.25;
  PixelModel pixels;
};

/// Well separated SAR classes (Bayes IoU on SAR about 0.98).
SyntheticSpec separable_fixture(std::uint64_t seed = 0);
/// Strongly correlated bands that shift together, water the minority class.
SyntheticSpec correlated_fixture(std::uint64_t seed = 0);

struct SyntheticDataset {
  std::filesystem::path root;
  std::array<std::size_t, 4> tiles_per_split{};  // train, valid, test, bolivia
};

/// Writes rasters, labels and the four split manifests under `root`
/// (`manifests/<split>.json`). Identical specs give identical files.
SyntheticDataset generate_dataset(const SyntheticSpec& spec, const std::filesystem::path& root);

/// IoU of the Bayes-optimal classifier restricted to `bands`, for a pixel
/// population with the given water fraction.
double bayes_iou(const PixelModel& model, std::span<const BandId> bands, double water_fraction);

}  // namespace floodpix::synthetic
