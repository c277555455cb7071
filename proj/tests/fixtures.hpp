#pragma once

// Synthetic crack images and on-disk dataset layouts for tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "crackseg/data/dataset.hpp"
#include "crackseg/data/image_io.hpp"

namespace fixtures {

using crackseg::Image;

// Grey textured background with a dark meandering crack of the given width.
// The mask marks exactly the darkened pixels.
inline crackseg::CrackSample synthetic_crack(int width, int height, unsigned seed, int crack_width = 3,
                                             crackseg::Split split = crackseg::Split::train) {
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> noise(-18, 18);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  crackseg::CrackSample s;
  s.id = std::string(crackseg::split_name(split)) + "/synthetic_" + std::to_string(seed);
  s.split = split;
  s.image = Image(width, height, 3);
  s.mask = Image(width, height, 1);
  const int base = 150 + static_cast<int>(unit(rng) * 40);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int v = base + noise(rng);
      for (int c = 0; c < 3; ++c) s.image.at(y, x, c) = static_cast<std::uint8_t>(std::clamp(v + 4 * c, 0, 255));
    }
  // Crack path: a random walk from the top edge to the bottom edge.
  double cx = width * (0.25 + 0.5 * unit(rng));
  const double phase = unit(rng) * 6.283;
  const double amp = width * (0.05 + 0.1 * unit(rng));
  for (int y = 0; y < height; ++y) {
    const double x = cx + amp * std::sin(phase + y * 0.07);
    const int x0 = static_cast<int>(std::lround(x)) - crack_width / 2;
    for (int k = 0; k < crack_width; ++k) {
      const int xx = x0 + k;
      if (xx < 0 || xx >= width) continue;
      s.mask.at(y, xx) = 1;
      for (int c = 0; c < 3; ++c) s.image.at(y, xx, c) = static_cast<std::uint8_t>(40 + noise(rng) / 3);
    }
    cx += (unit(rng) - 0.5) * 0.8;
  }
  s.boundary = crackseg::make_boundary_label(s.mask);
  return s;
}

// Writes <root>/<split>/{images,masks}/<stem>.png for each sample.
inline void write_dataset(const std::filesystem::path& root, const std::vector<crackseg::CrackSample>& samples) {
  namespace fs = std::filesystem;
  for (const auto& s : samples) {
    const std::string split = crackseg::split_name(s.split);
    const std::string stem = s.id.substr(s.id.find('/') + 1);
    fs::create_directories(root / split / "images");
    fs::create_directories(root / split / "masks");
    crackseg::write_png(root / split / "images" / (stem + ".png"), s.image);
    Image m = s.mask;
    for (auto& v : m.pixels) v = v ? 255 : 0;
    crackseg::write_png(root / split / "masks" / (stem + ".png"), m);
  }
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("crackseg_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace fixtures
