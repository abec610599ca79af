#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "floodpix/raster_io.hpp"

namespace floodpix::io {

/// Layout written by tools/export_sen1floods11.py:
///   <source>/S1/<id>_S1Hand.npy     (2, H, W) float, VV and VH in dB
///   <source>/S2/<id>_S2Hand.npy     (13, H, W) reflectance x 10000
///   <source>/Label/<id>_LabelHand.npy (H, W) with -1 / 0 / 1
/// plus the dataset's split CSV files, whose first column names the S1 chip.
struct ImportOptions {
  std::filesystem::path source;
  std::filesystem::path csv_dir;  // defaults to `source`
  std::map<SplitName, std::string> csv_names = {{SplitName::Train, "flood_train_data.csv"},
                                                {SplitName::Valid, "flood_valid_data.csv"},
                                                {SplitName::Test, "flood_test_data.csv"},
                                                {SplitName::BoliviaTest, "flood_bolivia_data.csv"}};
};

struct ImportSummary {
  std::array<std::size_t, 4> tiles{};
  std::vector<std::string> missing_splits;
};

/// Region of a chip id: the text before the first underscore.
std::string region_of(std::string_view tile_id);

/// Chip id from a CSV cell such as "Ghana_103272_S1Hand.tif".
std::string chip_id_from_csv_cell(std::string_view cell);

/// Converts every listed chip into the canonical format under `data_root`
/// and writes `manifests/<split>.json`. A split whose CSV is absent is
/// skipped and reported; a listed chip with missing or malformed arrays
/// throws IoError naming the file.
ImportSummary import_sen1floods11(const ImportOptions& options, const std::filesystem::path& data_root);

}  // namespace floodpix::io
