#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "crackseg/data/image_io.hpp"

namespace crackseg {

enum class Split { train, val, test };

inline constexpr std::array<Split, 3> kSplits{Split::train, Split::val, Split::test};

inline const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train, val or test)");
}

struct BoundaryOptions {
  int kernel = 3;
  int iterations = 1;
  bool ring = false;  // dilation minus the mask instead of the full dilation
};

struct CrackSample {
  Image image;     // RGB
  Image mask;      // 1 channel, {0,1}
  Image boundary;  // 1 channel, {0,1}
  std::string id;
  Split split = Split::train;
};

// Square-kernel binary dilation, repeated `iterations` times. With
// `ring` the original mask is removed afterwards.
inline Image make_boundary_label(const Image& mask, int kernel = 3, int iterations = 1, bool ring = false) {
  if (kernel < 3 || kernel % 2 == 0) throw ConfigError("boundary kernel must be odd and >= 3");
  if (iterations < 0) throw ConfigError("boundary iterations must be >= 0");
  if (mask.channels != 1) throw DataError("boundary label needs a single-channel mask");
  const int r = kernel / 2;
  const int w = mask.width, h = mask.height;
  Image cur = mask;
  Image tmp(w, h, 1);
  for (int it = 0; it < iterations; ++it) {
    // separable: rows then columns
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = 0;
        for (int d = std::max(0, x - r); d <= std::min(w - 1, x + r) && !v; ++d) v = cur.at(y, d);
        tmp.at(y, x) = v;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        std::uint8_t v = 0;
        for (int d = std::max(0, y - r); d <= std::min(h - 1, y + r) && !v; ++d) v = tmp.at(d, x);
        cur.at(y, x) = v;
      }
  }
  if (ring)
    for (std::size_t i = 0; i < cur.pixels.size(); ++i) cur.pixels[i] = cur.pixels[i] && !mask.pixels[i];
  return cur;
}

// Where a sample lives on disk; pixels are read lazily by load_sample.
struct SampleRef {
  std::string id;
  Split split = Split::train;
  std::filesystem::path image;
  std::filesystem::path mask;
};

struct DatasetManifest {
  std::string name;
  std::filesystem::path root;
  std::array<std::size_t, 3> counts{};
  bool subset = false;  // fewer samples than the published split sizes
  std::vector<std::string> warnings;

  std::size_t count(Split s) const { return counts[static_cast<int>(s)]; }
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<SampleRef> samples;

  std::vector<SampleRef> split(Split s) const {
    std::vector<SampleRef> out;
    for (const auto& r : samples)
      if (r.split == s) out.push_back(r);
    return out;
  }
};

// Published split sizes (train, val, test).
inline std::optional<std::array<std::size_t, 3>> published_counts(const std::string& name) {
  if (name == "crack500") return std::array<std::size_t, 3>{1896, 348, 1124};
  if (name == "deepcrack") return std::array<std::size_t, 3>{300, 0, 237};
  return std::nullopt;
}

namespace detail {

inline bool is_image_ext(std::string ext) {
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

}  // namespace detail

// Indexes <root>/<split>/images/*.{jpg,png} against <root>/<split>/masks/<stem>.png.
// Every missing mask and unreadable file is collected and reported in one
// DataError. Sample ids are "<split>/<stem>".
inline Dataset load_dataset(const std::filesystem::path& root, const std::string& name) {
  namespace fs = std::filesystem;
  const auto expected = published_counts(name);
  if (!expected) throw ConfigError("unknown dataset '" + name + "' (expected crack500 or deepcrack)");
  if (!fs::is_directory(root)) throw DataError("dataset root not found: " + root.string());
  Dataset ds;
  ds.manifest.name = name;
  ds.manifest.root = root;
  std::vector<std::string> problems;
  std::set<std::string> stems_seen;
  for (Split s : kSplits) {
    const fs::path dir = root / split_name(s) / "images";
    if (!fs::is_directory(dir)) continue;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file() && detail::is_image_ext(e.path().extension().string())) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& img : files) {
      const std::string stem = img.stem().string();
      const fs::path mask = root / split_name(s) / "masks" / (stem + ".png");
      bool ok = true;
      if (!fs::exists(mask)) {
        problems.push_back("missing mask for " + img.string() + " (expected " + mask.string() + ")");
        ok = false;
      } else if (!probe_image(mask)) {
        problems.push_back("unreadable mask " + mask.string());
        ok = false;
      }
      if (!probe_image(img)) {
        problems.push_back("unreadable image " + img.string());
        ok = false;
      }
      if (!stems_seen.insert(stem).second)
        ds.manifest.warnings.push_back("stem '" + stem + "' appears in more than one split");
      if (ok) ds.samples.push_back({std::string(split_name(s)) + "/" + stem, s, img, mask});
      ++ds.manifest.counts[static_cast<int>(s)];
    }
  }
  if (!problems.empty()) {
    std::string msg = std::to_string(problems.size()) + " dataset problem(s): ";
    for (std::size_t i = 0; i < problems.size(); ++i) msg += (i ? "; " : "") + problems[i];
    throw DataError(msg);
  }
  const auto& c = ds.manifest.counts;
  if (c[0] + c[1] + c[2] == 0) {
    ds.manifest.warnings.push_back("empty dataset: no images under " + root.string());
    ds.manifest.subset = true;
  } else if (c != *expected) {
    const bool smaller = c[0] <= (*expected)[0] && c[1] <= (*expected)[1] && c[2] <= (*expected)[2];
    ds.manifest.subset = smaller;
    ds.manifest.warnings.push_back(std::string(smaller ? "subset" : "unexpected split sizes") + ": found (" +
                                   std::to_string(c[0]) + ", " + std::to_string(c[1]) + ", " + std::to_string(c[2]) +
                                   "), full " + name + " has (" + std::to_string((*expected)[0]) + ", " +
                                   std::to_string((*expected)[1]) + ", " + std::to_string((*expected)[2]) + ")");
  }
  return ds;
}

inline CrackSample load_sample(const SampleRef& ref, const BoundaryOptions& b = {}) {
  CrackSample s;
  s.id = ref.id;
  s.split = ref.split;
  s.image = read_rgb(ref.image);
  s.mask = read_mask(ref.mask);
  if (s.mask.width != s.image.width || s.mask.height != s.image.height)
    throw DataError("mask size differs from image for " + ref.id);
  s.boundary = make_boundary_label(s.mask, b.kernel, b.iterations, b.ring);
  return s;
}

inline nlohmann::json manifest_json(const Dataset& ds) {
  nlohmann::json samples = nlohmann::json::array();
  for (const auto& r : ds.samples)
    samples.push_back({{"id", r.id}, {"split", split_name(r.split)}, {"image", r.image.string()}, {"mask", r.mask.string()}});
  const auto& m = ds.manifest;
  return {{"name", m.name},
          {"root", m.root.string()},
          {"counts", {{"train", m.counts[0]}, {"val", m.counts[1]}, {"test", m.counts[2]}}},
          {"subset", m.subset},
          {"warnings", m.warnings},
          {"samples", samples}};
}

inline void write_manifest(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write manifest " + path.string());
  os << manifest_json(ds).dump(2) << '\n';
}

}  // namespace crackseg
