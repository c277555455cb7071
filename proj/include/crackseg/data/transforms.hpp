#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "crackseg/core/random.hpp"
#include "crackseg/core/tensor.hpp"
#include "crackseg/data/dataset.hpp"

namespace crackseg {

inline constexpr double kNormMean = 0.5;
inline constexpr double kNormStd = 0.5;

template <typename T>
T normalize_value(double v01) {
  return static_cast<T>((v01 - kNormMean) / kNormStd);
}

template <typename T>
double denormalize_value(T v) {
  return static_cast<double>(v) * kNormStd + kNormMean;
}

// Seed for one sample in one epoch; independent of visiting order.
inline std::uint64_t sample_seed(std::uint64_t global_seed, std::uint64_t epoch, std::uint64_t index) {
  return mix_seed(global_seed, epoch, index);
}

inline Image flip_horizontal(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(y, in.width - 1 - x, c);
  return out;
}

inline Image flip_vertical(const Image& in) {
  Image out(in.width, in.height, in.channels);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(in.height - 1 - y, x, c);
  return out;
}

// Counter-clockwise by quarter turns.
inline Image rotate90(const Image& in, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return in;
  Image out = k == 2 ? Image(in.width, in.height, in.channels) : Image(in.height, in.width, in.channels);
  for (int y = 0; y < in.height; ++y)
    for (int x = 0; x < in.width; ++x)
      for (int c = 0; c < in.channels; ++c) {
        const std::uint8_t v = in.at(y, x, c);
        if (k == 1) out.at(in.width - 1 - x, y, c) = v;
        else if (k == 2) out.at(in.height - 1 - y, in.width - 1 - x, c) = v;
        else out.at(x, in.height - 1 - y, c) = v;
      }
  return out;
}

struct JitterFactors {
  double brightness = 1, contrast = 1, saturation = 1;
};

// Brightness scales, contrast blends with the mean grey level, saturation
// blends with the per-pixel grey value.
inline Image color_jitter(const Image& in, const JitterFactors& f) {
  if (in.channels != 3) throw DataError("color_jitter needs an RGB image");
  const std::size_t n = in.plane();
  std::vector<double> px(n * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = std::clamp(in.pixels[i] * f.brightness, 0.0, 255.0);
  auto grey = [&](std::size_t i) { return 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2]; };
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += grey(i);
  mean /= static_cast<double>(n);
  for (auto& v : px) v = std::clamp(mean + (v - mean) * f.contrast, 0.0, 255.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grey(i);
    for (int c = 0; c < 3; ++c) px[3 * i + c] = std::clamp(g + (px[3 * i + c] - g) * f.saturation, 0.0, 255.0);
  }
  Image out(in.width, in.height, 3);
  for (std::size_t i = 0; i < px.size(); ++i) out.pixels[i] = static_cast<std::uint8_t>(std::lround(px[i]));
  return out;
}

// Random flips, a random multiple of 90 degrees and +-20% colour jitter. The
// same geometry is applied to image, mask and boundary; jitter touches the
// image only.
inline CrackSample augment(const CrackSample& s, std::uint64_t seed) {
  if (s.split != Split::train) throw DataError("augment is for training samples only (" + s.id + ")");
  Rng rng(seed);
  std::bernoulli_distribution coin(0.5);
  std::uniform_int_distribution<int> quarter(0, 3);
  std::uniform_real_distribution<double> jitter(0.8, 1.2);
  const bool hflip = coin(rng);
  const bool vflip = coin(rng);
  const int turns = quarter(rng);
  JitterFactors f;
  f.brightness = jitter(rng);
  f.contrast = jitter(rng);
  f.saturation = jitter(rng);
  auto geom = [&](const Image& img) {
    Image out = img;
    if (hflip) out = flip_horizontal(out);
    if (vflip) out = flip_vertical(out);
    return rotate90(out, turns);
  };
  CrackSample out;
  out.id = s.id;
  out.split = s.split;
  out.image = color_jitter(geom(s.image), f);
  out.mask = geom(s.mask);
  out.boundary = geom(s.boundary);
  return out;
}

// Bilinear with half-pixel centres, values in [0,1].
inline std::vector<double> resize_bilinear(const Image& in, int out_w, int out_h) {
  std::vector<double> out(static_cast<std::size_t>(out_w) * out_h * in.channels);
  const double sy = static_cast<double>(in.height) / out_h;
  const double sx = static_cast<double>(in.width) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::max(0.0, (y + 0.5) * sy - 0.5);
    const int y0 = std::min(static_cast<int>(fy), in.height - 1);
    const int y1 = std::min(y0 + 1, in.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::max(0.0, (x + 0.5) * sx - 0.5);
      const int x0 = std::min(static_cast<int>(fx), in.width - 1);
      const int x1 = std::min(x0 + 1, in.width - 1);
      const double ax = fx - x0;
      for (int c = 0; c < in.channels; ++c) {
        const double top = in.at(y0, x0, c) * (1 - ax) + in.at(y0, x1, c) * ax;
        const double bot = in.at(y1, x0, c) * (1 - ax) + in.at(y1, x1, c) * ax;
        out[(static_cast<std::size_t>(y) * out_w + x) * in.channels + c] = (top * (1 - ay) + bot * ay) / 255.0;
      }
    }
  }
  return out;
}

inline Image resize_nearest(const Image& in, int out_w, int out_h) {
  Image out(out_w, out_h, in.channels);
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(static_cast<int>((y + 0.5) * in.height / out_h), in.height - 1);
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(static_cast<int>((x + 0.5) * in.width / out_w), in.width - 1);
      for (int c = 0; c < in.channels; ++c) out.at(y, x, c) = in.at(sy, sx, c);
    }
  }
  return out;
}

// RGB image -> normalized (1, 3, H, W) tensor at native resolution.
template <typename T>
Tensor<T> image_to_tensor(const Image& img) {
  if (img.channels != 3) throw DataError("image_to_tensor needs an RGB image");
  Tensor<T> t(1, 3, img.height, img.width);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) t(0, c, y, x) = normalize_value<T>(img.at(y, x, c) / 255.0);
  return t;
}

template <typename T>
Tensor<T> mask_to_tensor(const Image& mask) {
  Tensor<T> t(1, 1, mask.height, mask.width);
  for (std::size_t i = 0; i < mask.plane(); ++i) t[i] = mask.pixels[i] ? T{1} : T{0};
  return t;
}

template <typename T>
struct TrainingTensors {
  Tensor<T> image;     // (1, 3, S, S), normalized
  Tensor<T> mask;      // (1, 1, S, S), {0,1}
  Tensor<T> boundary;  // (1, 1, S, S), {0,1}
};

template <typename T>
TrainingTensors<T> to_training_tensor(const CrackSample& s, int size = 256) {
  if (size < 1) throw ConfigError("training size must be positive");
  TrainingTensors<T> out;
  const auto rgb = resize_bilinear(s.image, size, size);
  out.image = Tensor<T>(1, 3, size, size);
  for (int c = 0; c < 3; ++c)
    for (int i = 0; i < size * size; ++i) out.image(0, c, i / size, i % size) = normalize_value<T>(rgb[i * 3 + c]);
  out.mask = mask_to_tensor<T>(resize_nearest(s.mask, size, size));
  out.boundary = mask_to_tensor<T>(resize_nearest(s.boundary, size, size));
  return out;
}

}  // namespace crackseg
