#pragma once

#include <algorithm>
#include <utility>
#include <vector>

#include "crackseg/core/error.hpp"

namespace crackseg::blocks {

struct LayerSpec {
  int kernel = 3;
  int dilation = 1;
  int stride = 1;
};

struct Footprint {
  int size = 0;          // side of the bounding box of influencing input pixels
  bool gap_free = false; // every pixel inside that box influences the output
};

// Brute-force receptive field: starting from the centre output pixel, walk
// the stack backwards marking every input position each kernel tap reads.
inline Footprint rf_footprint(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) throw ConfigError("rf_footprint: empty layer list");
  int extent = 0;
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    if (it->kernel < 1 || it->dilation < 1 || it->stride < 1)
      throw ConfigError("rf_footprint: invalid layer spec");
    extent = extent * it->stride + (it->kernel - 1) * it->dilation;
  }
  const int side = 2 * extent + 1;
  const int centre = extent;
  std::vector<char> mask(static_cast<std::size_t>(side) * side, 0);
  mask[static_cast<std::size_t>(centre) * side + centre] = 1;
  // Outermost layer first; positions are relative to the centre pixel on the
  // current layer's input grid.
  for (auto it = layers.rbegin(); it != layers.rend(); ++it) {
    std::vector<char> next(mask.size(), 0);
    const int half = (it->kernel - 1) / 2;
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        if (!mask[static_cast<std::size_t>(y) * side + x]) continue;
        for (int i = -half; i <= it->kernel - 1 - half; ++i)
          for (int j = -half; j <= it->kernel - 1 - half; ++j) {
            const int yy = centre + (y - centre) * it->stride + i * it->dilation;
            const int xx = centre + (x - centre) * it->stride + j * it->dilation;
            if (yy >= 0 && yy < side && xx >= 0 && xx < side) next[static_cast<std::size_t>(yy) * side + xx] = 1;
          }
      }
    mask = std::move(next);
  }
  int y0 = side, y1 = -1, x0 = side, x1 = -1;
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x)
      if (mask[static_cast<std::size_t>(y) * side + x]) {
        y0 = std::min(y0, y);
        y1 = std::max(y1, y);
        x0 = std::min(x0, x);
        x1 = std::max(x1, x);
      }
  Footprint fp;
  fp.size = std::max(y1 - y0, x1 - x0) + 1;
  fp.gap_free = true;
  for (int y = y0; y <= y1 && fp.gap_free; ++y)
    for (int x = x0; x <= x1; ++x)
      if (!mask[static_cast<std::size_t>(y) * side + x]) {
        fp.gap_free = false;
        break;
      }
  return fp;
}

}  // namespace crackseg::blocks
