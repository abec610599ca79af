#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace floodpix::io {

/// A NumPy .npy array widened to float. Used by the `import` path, which
/// reads arrays exported from the source GeoTIFFs by an external script.
struct NpyArray {
  std::vector<std::size_t> shape;
  std::vector<float> values;  // C order
};

/// Supports little-endian or byte-order-free f4, f8, i1, u1, i2, u2, i4, u4
/// in C order. Throws IoError otherwise.
NpyArray read_npy(const std::filesystem::path& path);

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& values);

}  // namespace floodpix::io
