#include <cstring>
#include <fstream>

#include <gtest/gtest.h>

#include "floodpix/error.hpp"
#include "floodpix/import.hpp"
#include "floodpix/npy.hpp"
#include "floodpix/synthetic.hpp"
#include "test_support.hpp"

namespace floodpix::io {
namespace {

using floodpix::testing::TempDir;
namespace fs = std::filesystem;

// Version 1.0 .npy with an arbitrary dtype string and raw payload.
void write_raw_npy(const fs::path& p, const std::string& descr, const std::string& shape, const void* data,
                   std::size_t bytes) {
  std::string header = "{'descr': '" + descr + "', 'fortran_order': False, 'shape': " + shape + ", }";
  while ((10 + header.size() + 1) % 64 != 0) header += ' ';
  header += '\n';
  std::ofstream out(p, std::ios::binary);
  out.write("\x93NUMPY\x01\x00", 8);
  const auto len = static_cast<std::uint16_t>(header.size());
  out.put(static_cast<char>(len & 0xff));
  out.put(static_cast<char>(len >> 8));
  out << header;
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

TEST(Npy, FloatRoundTrip) {
  TempDir dir("npy");
  const std::vector<float> v = {1.5f, -2.0f, 3.25f, 0.0f, 7.0f, 8.0f};
  write_npy(dir / "a.npy", {2, 3}, v);
  const auto a = read_npy(dir / "a.npy");
  EXPECT_EQ(a.shape, (std::vector<std::size_t>{2, 3}));
  EXPECT_EQ(a.values, v);
}

TEST(Npy, IntegerDtypes) {
  TempDir dir("npy");
  const std::int8_t i8[4] = {-1, 0, 1, 1};
  write_raw_npy(dir / "l.npy", "|i1", "(2, 2)", i8, sizeof i8);
  EXPECT_EQ(read_npy(dir / "l.npy").values, (std::vector<float>{-1, 0, 1, 1}));
  const std::int16_t i16[3] = {-300, 5, 1000};
  write_raw_npy(dir / "s.npy", "<i2", "(3,)", i16, sizeof i16);
  EXPECT_EQ(read_npy(dir / "s.npy").values, (std::vector<float>{-300, 5, 1000}));
  const double f8[2] = {0.5, -1e3};
  write_raw_npy(dir / "d.npy", "<f8", "(2,)", f8, sizeof f8);
  EXPECT_EQ(read_npy(dir / "d.npy").values, (std::vector<float>{0.5f, -1000.0f}));
}

TEST(Npy, Rejections) {
  TempDir dir("npy");
  const float f[2] = {1, 2};
  write_raw_npy(dir / "big.npy", ">f4", "(2,)", f, sizeof f);
  EXPECT_THROW(read_npy(dir / "big.npy"), IoError);
  write_raw_npy(dir / "short.npy", "<f4", "(3,)", f, sizeof f);
  EXPECT_THROW(read_npy(dir / "short.npy"), IoError);
  std::ofstream(dir / "junk.npy") << "not numpy";
  EXPECT_THROW(read_npy(dir / "junk.npy"), IoError);
}

TEST(Import, ChipNames) {
  EXPECT_EQ(chip_id_from_csv_cell("Ghana_103272_S1Hand.tif"), "Ghana_103272");
  EXPECT_EQ(chip_id_from_csv_cell("USA_1010394_S1Hand.tif"), "USA_1010394");
  EXPECT_EQ(region_of("Sri-Lanka_85652"), "Sri-Lanka");
}

void write_chip(const fs::path& src, const std::string& id, int w, int h) {
  std::vector<float> s1(2 * static_cast<std::size_t>(w * h)), s2(13 * static_cast<std::size_t>(w * h)),
      label(static_cast<std::size_t>(w * h));
  for (std::size_t i = 0; i < s1.size(); ++i) s1[i] = -10.0f - static_cast<float>(i % 7);
  for (std::size_t i = 0; i < s2.size(); ++i) s2[i] = static_cast<float>(i % 3000);
  for (std::size_t i = 0; i < label.size(); ++i) label[i] = static_cast<float>(static_cast<int>(i % 3) - 1);
  fs::create_directories(src / "S1");
  fs::create_directories(src / "S2");
  fs::create_directories(src / "Label");
  const auto W = static_cast<std::size_t>(w), H = static_cast<std::size_t>(h);
  write_npy(src / "S1" / (id + "_S1Hand.npy"), {2, H, W}, s1);
  write_npy(src / "S2" / (id + "_S2Hand.npy"), {13, H, W}, s2);
  write_npy(src / "Label" / (id + "_LabelHand.npy"), {H, W}, label);
}

TEST(Import, ConvertsListedChips) {
  TempDir src("import_src"), root("import_root");
  write_chip(src.path(), "Ghana_1", 6, 4);
  write_chip(src.path(), "USA_2", 6, 4);
  std::ofstream(src / "flood_train_data.csv") << "Ghana_1_S1Hand.tif,Ghana_1_LabelHand.tif\n"
                                              << "USA_2_S1Hand.tif,USA_2_LabelHand.tif\n";
  std::ofstream(src / "flood_test_data.csv") << "USA_2_S1Hand.tif,USA_2_LabelHand.tif\n";
  ImportOptions opts;
  opts.source = src.path();
  const auto summary = import_sen1floods11(opts, root.path());
  EXPECT_EQ(summary.tiles[0], 2u);
  EXPECT_EQ(summary.tiles[2], 1u);
  EXPECT_EQ(summary.missing_splits.size(), 2u);

  const auto m = load_manifest(root / "manifests/train.json", SplitName::Train, root.path());
  ASSERT_EQ(m.entries.size(), 2u);
  const auto [tile, labels] = load_tile(m.entries[0]);
  EXPECT_EQ(tile.region, "Ghana");
  EXPECT_EQ(tile.bands.size(), 15u);
  EXPECT_EQ(tile.width, 6);
  EXPECT_EQ(tile.band(BandId::VH).values[0], -10.0f - static_cast<float>(24 % 7));
  EXPECT_EQ(labels.values[0], Label::NoData);
  EXPECT_EQ(labels.values[2], Label::Water);
}

TEST(Import, MissingArrayNamesTheFile) {
  TempDir src("import_src"), root("import_root");
  write_chip(src.path(), "Ghana_1", 4, 4);
  fs::remove(src / "S2" / "Ghana_1_S2Hand.npy");
  std::ofstream(src / "flood_valid_data.csv") << "Ghana_1_S1Hand.tif,Ghana_1_LabelHand.tif\n";
  ImportOptions opts;
  opts.source = src.path();
  try {
    import_sen1floods11(opts, root.path());
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("Ghana_1_S2Hand.npy"), std::string::npos);
  }
}

TEST(Synthetic, DatasetIsReproducible) {
  TempDir a("synth_a"), b("synth_b");
  auto spec = synthetic::correlated_fixture(4);
  spec.tiles = 6;
  spec.bolivia_tiles = 1;
  spec.width = spec.height = 8;
  const auto ds = synthetic::generate_dataset(spec, a.path());
  synthetic::generate_dataset(spec, b.path());
  EXPECT_EQ(ds.tiles_per_split[0] + ds.tiles_per_split[1] + ds.tiles_per_split[2], 6u);
  EXPECT_EQ(ds.tiles_per_split[3], 1u);
  for (const auto& e : fs::recursive_directory_iterator(a.path())) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a.path());
    std::ifstream fa(e.path(), std::ios::binary), fb(b.path() / rel, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_EQ(sa, sb) << rel;
  }
}

TEST(Synthetic, BayesIoUClosedForm) {
  synthetic::PixelModel m;
  const auto vv = channel_index(BandId::VV);
  m.water_mean[vv] = -2.0;
  m.dry_mean[vv] = 2.0;
  m.sigma[vv] = 1.0;
  const std::vector<BandId> bands = {BandId::VV};
  // Equal priors: threshold at 0, hit rate Phi(2).
  const double hit = 0.5 * std::erfc(-2.0 / std::sqrt(2.0));
  EXPECT_NEAR(synthetic::bayes_iou(m, bands, 0.5), hit / (hit + 2 * (1 - hit)), 1e-12);
  EXPECT_GE(synthetic::bayes_iou(synthetic::separable_fixture().pixels, sar_bands(), 0.3), 0.97);
}

}  // namespace
}  // namespace floodpix::io
