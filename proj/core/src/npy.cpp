#include "floodpix/npy.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <regex>
#include <string>

#include "floodpix/error.hpp"

namespace floodpix::io {
namespace {

template <typename T>
void widen(const char* src, std::size_t n, std::vector<float>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, src + i * sizeof(T), sizeof(T));
    out[i] = static_cast<float>(v);
  }
}

}  // namespace

NpyArray read_npy(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, "\x93NUMPY", 6) != 0) {
    throw IoError(path.string() + ": not a .npy file");
  }
  const int major = static_cast<unsigned char>(magic[6]);
  std::size_t header_len = 0;
  if (major == 1) {
    unsigned char b[2];
    in.read(reinterpret_cast<char*>(b), 2);
    header_len = b[0] | (b[1] << 8);
  } else {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    header_len = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::size_t>(b[3]) << 24);
  }
  std::string header(header_len, '\0');
  if (!in.read(header.data(), static_cast<std::streamsize>(header_len))) {
    throw IoError(path.string() + ": truncated .npy header");
  }

  std::smatch m;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([<>|=])([a-z])(\d+)')"))) {
    throw IoError(path.string() + ": .npy header lacks descr");
  }
  const char order = m[1].str()[0];
  const char kind = m[2].str()[0];
  const int width = std::stoi(m[3].str());
  if (order == '>' && width > 1) throw IoError(path.string() + ": big-endian .npy is not supported");
  if (header.find("'fortran_order': True") != std::string::npos) {
    throw IoError(path.string() + ": Fortran-ordered .npy is not supported");
  }
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))"))) {
    throw IoError(path.string() + ": .npy header lacks shape");
  }
  NpyArray arr;
  const std::string dims = m[1].str();
  const std::regex num(R"(\d+)");
  for (auto it = std::sregex_iterator(dims.begin(), dims.end(), num); it != std::sregex_iterator(); ++it) {
    arr.shape.push_back(std::stoull(it->str()));
  }
  std::size_t n = 1;
  for (auto d : arr.shape) n *= d;

  std::vector<char> payload(n * static_cast<std::size_t>(width));
  if (!in.read(payload.data(), static_cast<std::streamsize>(payload.size()))) {
    throw IoError(path.string() + ": truncated .npy payload");
  }
  const char* p = payload.data();
  if (kind == 'f' && width == 4) widen<float>(p, n, arr.values);
  else if (kind == 'f' && width == 8) widen<double>(p, n, arr.values);
  else if (kind == 'i' && width == 1) widen<std::int8_t>(p, n, arr.values);
  else if (kind == 'u' && width == 1) widen<std::uint8_t>(p, n, arr.values);
  else if (kind == 'i' && width == 2) widen<std::int16_t>(p, n, arr.values);
  else if (kind == 'u' && width == 2) widen<std::uint16_t>(p, n, arr.values);
  else if (kind == 'i' && width == 4) widen<std::int32_t>(p, n, arr.values);
  else if (kind == 'u' && width == 4) widen<std::uint32_t>(p, n, arr.values);
  else throw IoError(path.string() + ": unsupported .npy dtype");
  return arr;
}

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& values) {
  std::string dims;
  for (auto d : shape) dims += std::to_string(d) + ", ";
  if (shape.size() > 1) dims.resize(dims.size() - 1);
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header += '\n';
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  const char lb[2] = {static_cast<char>(len & 0xFF), static_cast<char>(len >> 8)};
  out.write(lb, 2);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

}  // namespace floodpix::io
