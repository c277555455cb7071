#pragma once

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "crackseg/metrics.hpp"
#include "crackseg/network.hpp"
#include "crackseg/nn/activation.hpp"

namespace crackseg {

struct TileGrid {
  int original_h = 0, original_w = 0;
  int padded_h = 0, padded_w = 0;
  int tile = 256;
  int overlap = 0;
  std::vector<std::pair<int, int>> origins;  // (row, col), row-major

  int stride() const noexcept { return tile - overlap; }
};

// Index into [0, n) under reflect padding (edge pixel not repeated); repeats
// the reflection for pads longer than the image.
inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

namespace detail {

// Smallest canvas >= n that is covered by whole tiles at the given stride.
inline int padded_extent(int n, int tile, int stride) {
  if (n <= tile) return tile;
  return tile + (n - tile + stride - 1) / stride * stride;
}

}  // namespace detail

inline TileGrid make_tile_grid(int h, int w, int tile = 256, int overlap = 0) {
  if (tile < 1 || overlap < 0 || overlap >= tile) throw ConfigError("tiling: need tile > overlap >= 0");
  TileGrid g;
  g.original_h = h;
  g.original_w = w;
  g.tile = tile;
  g.overlap = overlap;
  g.padded_h = detail::padded_extent(h, tile, g.stride());
  g.padded_w = detail::padded_extent(w, tile, g.stride());
  for (int r = 0; r + tile <= g.padded_h; r += g.stride())
    for (int c = 0; c + tile <= g.padded_w; c += g.stride()) g.origins.emplace_back(r, c);
  return g;
}

// Reflect-pads (1, C, H, W) up to the grid canvas and cuts it into tiles.
template <typename T>
std::pair<TileGrid, std::vector<Tensor<T>>> tile_image(const Tensor<T>& image, int tile = 256, int overlap = 0) {
  if (image.n() != 1) throw ShapeError("tile_image expects a single image");
  TileGrid g = make_tile_grid(image.h(), image.w(), tile, overlap);
  std::vector<Tensor<T>> tiles;
  tiles.reserve(g.origins.size());
  for (auto [r0, c0] : g.origins) {
    Tensor<T> t(1, image.c(), tile, tile);
    for (int c = 0; c < image.c(); ++c)
      for (int y = 0; y < tile; ++y) {
        const int sy = reflect_index(r0 + y, image.h());
        for (int x = 0; x < tile; ++x) t(0, c, y, x) = image(0, c, sy, reflect_index(c0 + x, image.w()));
      }
    tiles.push_back(std::move(t));
  }
  return {std::move(g), std::move(tiles)};
}

namespace detail {

// Blend weight along one tile axis: a linear ramp across each overlap band.
inline double ramp(int i, int tile, int overlap) {
  if (overlap == 0) return 1.0;
  const double up = (i + 0.5) / overlap;
  const double down = (tile - i - 0.5) / overlap;
  return std::min({1.0, up, down});
}

}  // namespace detail

// Places tile outputs on the canvas and crops to the original size. With
// overlap, overlapping pixels are a weighted mean under linear ramps.
template <typename T>
Tensor<T> stitch(const TileGrid& g, const std::vector<Tensor<T>>& outputs) {
  if (outputs.size() != g.origins.size())
    throw ShapeError("stitch: got " + std::to_string(outputs.size()) + " tiles, grid has " +
                     std::to_string(g.origins.size()));
  if (outputs.empty()) throw ShapeError("stitch: empty grid");
  const int channels = outputs.front().c();
  for (const auto& t : outputs)
    if (t.n() != 1 || t.c() != channels || t.h() != g.tile || t.w() != g.tile)
      throw ShapeError("stitch: tile output has shape " + t.shape().str());
  Tensor<T> out(1, channels, g.original_h, g.original_w);
  if (g.overlap == 0) {
    for (std::size_t k = 0; k < outputs.size(); ++k) {
      const auto [r0, c0] = g.origins[k];
      for (int c = 0; c < channels; ++c)
        for (int y = 0; y < g.tile && r0 + y < g.original_h; ++y)
          for (int x = 0; x < g.tile && c0 + x < g.original_w; ++x) out(0, c, r0 + y, c0 + x) = outputs[k](0, c, y, x);
    }
    return out;
  }
  std::vector<double> acc(out.size(), 0.0), wsum(static_cast<std::size_t>(g.original_h) * g.original_w, 0.0);
  for (std::size_t k = 0; k < outputs.size(); ++k) {
    const auto [r0, c0] = g.origins[k];
    for (int y = 0; y < g.tile && r0 + y < g.original_h; ++y)
      for (int x = 0; x < g.tile && c0 + x < g.original_w; ++x) {
        const double w = detail::ramp(y, g.tile, g.overlap) * detail::ramp(x, g.tile, g.overlap);
        const std::size_t p = static_cast<std::size_t>(r0 + y) * g.original_w + (c0 + x);
        wsum[p] += w;
        for (int c = 0; c < channels; ++c)
          acc[static_cast<std::size_t>(c) * wsum.size() + p] += w * static_cast<double>(outputs[k](0, c, y, x));
      }
  }
  for (int c = 0; c < channels; ++c)
    for (std::size_t p = 0; p < wsum.size(); ++p)
      out[static_cast<std::size_t>(c) * wsum.size() + p] =
          static_cast<T>(acc[static_cast<std::size_t>(c) * wsum.size() + p] / wsum[p]);
  return out;
}

struct InferenceOptions {
  int tile = 256;
  int overlap = 0;
  int batch = 1;  // tiles per forward call
  double threshold = 0.5;
};

struct PredictionRecord {
  int height = 0, width = 0;
  std::vector<float> probability;    // row-major, in [0,1]
  std::vector<std::uint8_t> mask;    // {0,1}
  double seconds = 0;
};

// Maps a batch of normalized tiles (B, 3, t, t) to logits (B, 1, t, t).
template <typename T>
using TilePredictor = std::function<Tensor<T>(const Tensor<T>&)>;

template <typename T>
PredictionRecord predict_image(const TilePredictor<T>& predictor, const Tensor<T>& image,
                               const InferenceOptions& opt = {}) {
  if (opt.batch < 1) throw ConfigError("inference batch must be >= 1");
  const auto start = std::chrono::steady_clock::now();
  auto [grid, tiles] = tile_image(image, opt.tile, opt.overlap);
  std::vector<Tensor<T>> probs;
  probs.reserve(tiles.size());
  for (std::size_t k = 0; k < tiles.size(); k += opt.batch) {
    const std::size_t count = std::min<std::size_t>(opt.batch, tiles.size() - k);
    std::vector<Tensor<T>> group(tiles.begin() + k, tiles.begin() + k + count);
    Tensor<T> logits = predictor(stack_batch(group));
    if (logits.n() != static_cast<int>(count) || logits.c() != 1)
      throw ShapeError("predictor returned " + logits.shape().str());
    for (std::size_t i = 0; i < logits.size(); ++i) logits[i] = nn::sigmoid(logits[i]);
    for (std::size_t i = 0; i < count; ++i) probs.push_back(slice_batch(logits, static_cast<int>(i), 1));
  }
  const Tensor<T> full = stitch(grid, probs);
  PredictionRecord rec;
  rec.height = image.h();
  rec.width = image.w();
  rec.probability.resize(full.size());
  for (std::size_t i = 0; i < full.size(); ++i) rec.probability[i] = static_cast<float>(full[i]);
  rec.mask = binarize(std::span<const float>(rec.probability), opt.threshold);
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rec;
}

// Switches the model to evaluation mode and predicts with it.
template <typename T>
PredictionRecord predict_image(CrackSegNet<T>& model, const Tensor<T>& image, const InferenceOptions& opt = {}) {
  if (opt.tile % model.config().required_divisor() != 0)
    throw ConfigError("tile size " + std::to_string(opt.tile) + " is not a multiple of " +
                      std::to_string(model.config().required_divisor()));
  model.set_training(false);
  TilePredictor<T> fn = [&model](const Tensor<T>& batch) { return model.forward(batch).seg_logits; };
  return predict_image(fn, image, opt);
}

}  // namespace crackseg
