#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

#include <jpeglib.h>

#include "crackseg/data/dataset.hpp"
#include "crackseg/data/transforms.hpp"
#include "fixtures.hpp"

using namespace crackseg;
namespace fs = std::filesystem;

namespace {

std::size_t count_ones(const Image& m) {
  std::size_t n = 0;
  for (auto v : m.pixels) n += v ? 1 : 0;
  return n;
}

void write_jpeg(const fs::path& path, const Image& img) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  ASSERT_NE(f, nullptr);
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = img.width;
  cinfo.image_height = img.height;
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, 100, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPROW>(img.pixels.data() + cinfo.next_scanline * img.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

}  // namespace

// --- image IO -------------------------------------------------------------

TEST(ImageIo, PngRoundTrip) {
  const auto dir = fixtures::temp_dir("png");
  const auto s = fixtures::synthetic_crack(37, 23, 1);
  write_png(dir / "rgb.png", s.image);
  EXPECT_EQ(read_rgb(dir / "rgb.png"), s.image);
  Image m = s.mask;
  for (auto& v : m.pixels) v *= 255;
  write_png(dir / "mask.png", m);
  EXPECT_EQ(read_mask(dir / "mask.png"), s.mask);
  // A grey PNG read as RGB replicates the channel.
  const auto grey = read_rgb(dir / "mask.png");
  EXPECT_EQ(grey.channels, 3);
  EXPECT_EQ(grey.at(5, 5, 0), grey.at(5, 5, 2));
}

TEST(ImageIo, SixteenBitMaskIsRescaled) {
  const auto dir = fixtures::temp_dir("png16");
  std::vector<std::uint16_t> v{0, 65535, 32896, 32639};
  write_png16(dir / "m.png", 2, 2, v);
  const auto m = read_mask(dir / "m.png");
  EXPECT_EQ(m.pixels, (std::vector<std::uint8_t>{0, 1, 1, 0}));
}

TEST(ImageIo, JpegIsDecoded) {
  const auto dir = fixtures::temp_dir("jpeg");
  Image img(16, 8, 3, 0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 16; ++x) {
      img.at(y, x, 0) = 200;
      img.at(y, x, 1) = 100;
      img.at(y, x, 2) = 50;
    }
  write_jpeg(dir / "a.jpg", img);
  EXPECT_TRUE(probe_image(dir / "a.jpg"));
  const auto back = read_rgb(dir / "a.jpg");
  ASSERT_EQ(back.width, 16);
  ASSERT_EQ(back.height, 8);
  for (std::size_t i = 0; i < back.pixels.size(); ++i) EXPECT_NEAR(back.pixels[i], img.pixels[i], 3);
}

TEST(ImageIo, UnreadableFiles) {
  const auto dir = fixtures::temp_dir("bad");
  std::ofstream(dir / "junk.png") << "not an image";
  EXPECT_FALSE(probe_image(dir / "junk.png"));
  EXPECT_FALSE(probe_image(dir / "absent.png"));
  EXPECT_THROW(read_rgb(dir / "absent.png"), DataError);
}

// --- dataset layout -------------------------------------------------------

TEST(Dataset, IndexesSplitsAndFlagsSubset) {
  const auto root = fixtures::temp_dir("layout");
  fixtures::write_dataset(root, {fixtures::synthetic_crack(32, 32, 1), fixtures::synthetic_crack(32, 32, 2),
                                 fixtures::synthetic_crack(32, 32, 3, 3, Split::val),
                                 fixtures::synthetic_crack(32, 32, 4, 3, Split::test)});
  const auto ds = load_dataset(root, "crack500");
  EXPECT_EQ(ds.manifest.count(Split::train), 2u);
  EXPECT_EQ(ds.manifest.count(Split::val), 1u);
  EXPECT_EQ(ds.manifest.count(Split::test), 1u);
  EXPECT_TRUE(ds.manifest.subset);
  ASSERT_FALSE(ds.manifest.warnings.empty());
  EXPECT_NE(ds.manifest.warnings[0].find("subset"), std::string::npos);
  EXPECT_EQ(ds.split(Split::train)[0].id, "train/synthetic_1");
  const auto s = load_sample(ds.split(Split::val)[0]);
  EXPECT_EQ(s.mask, fixtures::synthetic_crack(32, 32, 3, 3, Split::val).mask);
  const auto j = manifest_json(ds);
  EXPECT_EQ(j["counts"]["train"], 2);
  EXPECT_EQ(j["samples"].size(), 4u);
  EXPECT_EQ(j["subset"], true);
}

TEST(Dataset, EmptyRootWarns) {
  const auto root = fixtures::temp_dir("empty");
  const auto ds = load_dataset(root, "deepcrack");
  EXPECT_TRUE(ds.samples.empty());
  ASSERT_EQ(ds.manifest.warnings.size(), 1u);
  EXPECT_NE(ds.manifest.warnings[0].find("empty"), std::string::npos);
}

TEST(Dataset, ReportsEveryProblemAtOnce) {
  const auto root = fixtures::temp_dir("broken");
  fixtures::write_dataset(root, {fixtures::synthetic_crack(16, 16, 1), fixtures::synthetic_crack(16, 16, 2)});
  fs::remove(root / "train" / "masks" / "synthetic_1.png");
  std::ofstream(root / "train" / "images" / "synthetic_3.png") << "garbage";
  write_png(root / "train" / "masks" / "synthetic_3.png", Image(16, 16, 1));
  try {
    load_dataset(root, "crack500");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2 dataset problem"), std::string::npos) << msg;
    EXPECT_NE(msg.find("synthetic_1"), std::string::npos);
    EXPECT_NE(msg.find("unreadable image"), std::string::npos);
  }
}

TEST(Dataset, UnknownNameAndMissingRoot) {
  EXPECT_THROW(load_dataset("/tmp", "cracktree"), ConfigError);
  EXPECT_THROW(load_dataset("/nonexistent/crackseg", "crack500"), DataError);
  EXPECT_EQ(parse_split("val"), Split::val);
  EXPECT_THROW(parse_split("validation"), ConfigError);
}

// --- boundary label -------------------------------------------------------

TEST(BoundaryLabel, DilatesSinglePixel) {
  Image m(7, 7, 1);
  m.at(3, 3) = 1;
  const auto b = make_boundary_label(m);
  EXPECT_EQ(count_ones(b), 9u);
  EXPECT_EQ(b.at(2, 2), 1);
  EXPECT_EQ(b.at(1, 3), 0);
  EXPECT_EQ(count_ones(make_boundary_label(m, 5)), 25u);
  EXPECT_EQ(count_ones(make_boundary_label(m, 3, 2)), 25u);
  EXPECT_EQ(count_ones(make_boundary_label(m, 3, 1, true)), 8u);
}

TEST(BoundaryLabel, ClipsAtImageEdge) {
  Image m(4, 4, 1);
  m.at(0, 0) = 1;
  EXPECT_EQ(count_ones(make_boundary_label(m)), 4u);
}

TEST(BoundaryLabel, EmptyMaskStaysEmptyAndKernelValidated) {
  Image m(5, 5, 1);
  EXPECT_EQ(count_ones(make_boundary_label(m)), 0u);
  EXPECT_THROW(make_boundary_label(m, 4), ConfigError);
  EXPECT_THROW(make_boundary_label(m, 1), ConfigError);
}

TEST(BoundaryLabel, MatchesBruteForceDilation) {
  const auto s = fixtures::synthetic_crack(40, 30, 9);
  const auto b = make_boundary_label(s.mask, 5);
  for (int y = 0; y < 30; ++y)
    for (int x = 0; x < 40; ++x) {
      int hit = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy >= 0 && yy < 30 && xx >= 0 && xx < 40) hit |= s.mask.at(yy, xx);
        }
      ASSERT_EQ(b.at(y, x), hit) << y << "," << x;
    }
}

// --- augmentation ---------------------------------------------------------

TEST(Geometry, RotationAndFlipsCompose) {
  Image img(3, 2, 1);
  for (int i = 0; i < 6; ++i) img.pixels[i] = static_cast<std::uint8_t>(i);
  const auto r = rotate90(img, 1);
  ASSERT_EQ(r.width, 2);
  ASSERT_EQ(r.height, 3);
  // Counter-clockwise: the top-right pixel moves to the top-left.
  EXPECT_EQ(r.at(0, 0), img.at(0, 2));
  EXPECT_EQ(r.at(2, 0), img.at(0, 0));
  EXPECT_EQ(rotate90(rotate90(img, 1), 3), img);
  EXPECT_EQ(rotate90(img, 2), flip_vertical(flip_horizontal(img)));
  EXPECT_EQ(flip_horizontal(flip_horizontal(img)), img);
}

TEST(Augment, DeterministicPerSeed) {
  const auto s = fixtures::synthetic_crack(48, 32, 5);
  const auto a = augment(s, sample_seed(7, 3, 11));
  const auto b = augment(s, sample_seed(7, 3, 11));
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.mask, b.mask);
  EXPECT_EQ(a.boundary, b.boundary);
  bool differs = false;
  for (std::uint64_t i = 0; i < 8 && !differs; ++i) differs = augment(s, sample_seed(7, 3, i)).image != a.image;
  EXPECT_TRUE(differs);
}

TEST(Augment, GeometryIsSharedAndMaskIsNotJittered) {
  const auto s = fixtures::synthetic_crack(48, 32, 6);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = augment(s, seed);
    EXPECT_EQ(count_ones(a.mask), count_ones(s.mask));
    EXPECT_EQ(count_ones(a.boundary), count_ones(s.boundary));
    for (auto v : a.mask.pixels) EXPECT_LE(v, 1);
    // Boundary remains the dilation of the transformed mask.
    EXPECT_EQ(a.boundary, make_boundary_label(a.mask));
    // Crack pixels stay darker than background after jitter.
    double crack = 0, bg = 0;
    for (std::size_t i = 0; i < a.mask.plane(); ++i) (a.mask.pixels[i] ? crack : bg) += a.image.pixels[3 * i];
    EXPECT_LT(crack / count_ones(a.mask), bg / (a.mask.plane() - count_ones(a.mask)));
  }
}

TEST(Augment, RejectsEvaluationSplits) {
  const auto s = fixtures::synthetic_crack(16, 16, 1, 3, Split::test);
  EXPECT_THROW(augment(s, 0), DataError);
}

TEST(ColorJitter, IdentityFactorsPreserveImage) {
  const auto s = fixtures::synthetic_crack(20, 20, 2);
  EXPECT_EQ(color_jitter(s.image, {}), s.image);
}

// --- tensors --------------------------------------------------------------

TEST(TrainingTensor, ResizesNonSquareInputs) {
  const auto s = fixtures::synthetic_crack(640, 360, 3);
  const auto t = to_training_tensor<float>(s, 256);
  EXPECT_EQ(t.image.shape(), (Shape{1, 3, 256, 256}));
  EXPECT_EQ(t.mask.shape(), (Shape{1, 1, 256, 256}));
  std::size_t ones = 0;
  for (std::size_t i = 0; i < t.mask.size(); ++i) {
    ASSERT_TRUE(t.mask[i] == 0.0f || t.mask[i] == 1.0f);
    ASSERT_TRUE(t.boundary[i] == 0.0f || t.boundary[i] == 1.0f);
    if (t.mask[i] == 1.0f) EXPECT_EQ(t.boundary[i], 1.0f);
    ones += t.mask[i] == 1.0f;
  }
  EXPECT_GT(ones, 0u);
  for (std::size_t i = 0; i < t.image.size(); ++i) {
    ASSERT_GE(t.image[i], -1.0f);
    ASSERT_LE(t.image[i], 1.0f);
  }
}

TEST(TrainingTensor, SameSizeIsExact) {
  const auto s = fixtures::synthetic_crack(32, 32, 4);
  const auto t = to_training_tensor<double>(s, 32);
  const auto n = image_to_tensor<double>(s.image);
  for (std::size_t i = 0; i < n.size(); ++i) ASSERT_NEAR(t.image[i], n[i], 1e-12);
  EXPECT_EQ(t.mask.storage(), mask_to_tensor<double>(s.mask).storage());
}

TEST(Normalize, RoundTrip) {
  for (int v = 0; v < 256; ++v) {
    const double x = v / 255.0;
    EXPECT_NEAR(denormalize_value(normalize_value<float>(x)), x, 1e-7);
  }
  EXPECT_EQ(normalize_value<double>(0.5), 0.0);
  EXPECT_EQ(normalize_value<double>(1.0), 1.0);
}
