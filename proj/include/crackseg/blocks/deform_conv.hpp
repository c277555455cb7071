#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "crackseg/core/blas.hpp"
#include "crackseg/core/random.hpp"
#include "crackseg/nn/module.hpp"

namespace crackseg::blocks {

namespace detail {

// Bilinear sample of a plane at fractional (y, x); out-of-range corners read
// as zero and points at or beyond one pixel outside the plane return zero.
template <typename T>
T bilinear(const T* plane, int height, int width, T y, T x) {
  if (y <= T{-1} || y >= height || x <= T{-1} || x >= width) return T{0};
  const int y0 = static_cast<int>(std::floor(y));
  const int x0 = static_cast<int>(std::floor(x));
  const T ly = y - y0;
  const T lx = x - x0;
  auto at = [&](int yy, int xx) {
    return (yy >= 0 && yy < height && xx >= 0 && xx < width) ? plane[static_cast<std::size_t>(yy) * width + xx]
                                                              : T{0};
  };
  return (1 - ly) * (1 - lx) * at(y0, x0) + (1 - ly) * lx * at(y0, x0 + 1) + ly * (1 - lx) * at(y0 + 1, x0) +
         ly * lx * at(y0 + 1, x0 + 1);
}

}  // namespace detail

// Deformable 3x3 (or k x k) convolution, stride 1, "same" padding. The
// offsets map has 2*k*k channels laid out as (dy, dx) pairs per kernel tap
// in row-major tap order; tap (i, j) at output (y, x) samples the input at
// (y - pad + i*dilation + dy, x - pad + j*dilation + dx).
template <typename T>
class DeformConv2d : public nn::Module<T> {
 public:
  DeformConv2d(int in_channels, int out_channels, int kernel, bool bias, Rng& rng)
      : in_(in_channels), out_(out_channels), kernel_(kernel), has_bias_(bias),
        weight_(Shape{out_channels, in_channels, kernel, kernel}) {
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("DeformConv2d: kernel must be odd");
    init_fan_in_uniform(weight_.value, rng, in_channels * kernel * kernel);
    this->register_parameter("weight", weight_);
    if (bias) {
      bias_ = nn::Parameter<T>(Shape{out_channels, 1, 1, 1});
      init_fan_in_uniform(bias_.value, rng, in_channels * kernel * kernel);
      this->register_parameter("bias", bias_);
    }
  }

  int offset_channels() const noexcept { return 2 * kernel_ * kernel_; }
  nn::Parameter<T>& weight() noexcept { return weight_; }
  nn::Parameter<T>& bias() noexcept { return bias_; }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& offsets) {
    if (x.c() != in_) throw ConfigError("DeformConv2d: input channel mismatch");
    if (offsets.c() != offset_channels())
      throw ConfigError("DeformConv2d: offsets need " + std::to_string(offset_channels()) + " channels, got " +
                        std::to_string(offsets.c()));
    if (offsets.n() != x.n() || offsets.h() != x.h() || offsets.w() != x.w())
      throw ShapeError("DeformConv2d: offsets spatial/batch dims must match the output");
    const int hw = x.h() * x.w();
    const int patch = in_ * kernel_ * kernel_;
    Tensor<T> y(x.n(), out_, x.h(), x.w());
    std::vector<T> cols(static_cast<std::size_t>(patch) * hw);
    for (int n = 0; n < x.n(); ++n) {
      deformable_im2col(x, offsets, n, cols.data());
      blas::gemm<T>(false, false, out_, hw, patch, weight_.value.data(), cols.data(), y.sample(n));
      if (has_bias_)
        for (int o = 0; o < out_; ++o) {
          T* p = y.plane(n, o);
          for (int i = 0; i < hw; ++i) p[i] += bias_.value[o];
        }
    }
    if (this->training()) {
      input_ = x;
      offsets_ = offsets;
    }
    return y;
  }

  // Returns (d input, d offsets).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& dy) {
    this->require_training("DeformConv2d");
    const Tensor<T>& x = input_;
    const int hw = x.h() * x.w();
    const int patch = in_ * kernel_ * kernel_;
    Tensor<T> dx(x.shape());
    Tensor<T> doff(offsets_.shape());
    std::vector<T> cols(static_cast<std::size_t>(patch) * hw);
    std::vector<T> dcols(static_cast<std::size_t>(patch) * hw);
    for (int n = 0; n < x.n(); ++n) {
      const T* g = dy.sample(n);
      deformable_im2col(x, offsets_, n, cols.data());
      blas::gemm<T>(false, true, out_, patch, hw, T{1}, g, hw, cols.data(), hw, T{1}, weight_.grad.data(), patch);
      if (has_bias_)
        for (int o = 0; o < out_; ++o) {
          const T* p = g + static_cast<std::size_t>(o) * hw;
          T s{0};
          for (int i = 0; i < hw; ++i) s += p[i];
          bias_.grad[o] += s;
        }
      blas::gemm<T>(true, false, patch, hw, out_, weight_.value.data(), g, dcols.data());
      deformable_col2im(x, offsets_, n, dcols.data(), dx, doff);
    }
    return {std::move(dx), std::move(doff)};
  }

 private:
  int pad() const noexcept { return (kernel_ - 1) / 2; }

  void deformable_im2col(const Tensor<T>& x, const Tensor<T>& off, int n, T* cols) const {
    const int H = x.h(), W = x.w();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < in_; ++c) {
      const T* plane = x.plane(n, c);
      for (int i = 0; i < kernel_; ++i)
        for (int j = 0; j < kernel_; ++j) {
          const int tap = i * kernel_ + j;
          const T* oy = off.plane(n, 2 * tap);
          const T* ox = off.plane(n, 2 * tap + 1);
          T* row = cols + (static_cast<std::size_t>(c) * kernel_ * kernel_ + tap) * hw;
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
              const std::size_t p = static_cast<std::size_t>(y) * W + xx;
              const T sy = static_cast<T>(y - pad() + i) + oy[p];
              const T sx = static_cast<T>(xx - pad() + j) + ox[p];
              row[p] = detail::bilinear(plane, H, W, sy, sx);
            }
        }
    }
  }

  // Adjoint of deformable_im2col w.r.t. both the input values and the
  // sampling offsets.
  void deformable_col2im(const Tensor<T>& x, const Tensor<T>& off, int n, const T* dcols, Tensor<T>& dx,
                         Tensor<T>& doff) const {
    const int H = x.h(), W = x.w();
    const std::size_t hw = static_cast<std::size_t>(H) * W;
    for (int c = 0; c < in_; ++c) {
      const T* plane = x.plane(n, c);
      T* dplane = dx.plane(n, c);
      for (int i = 0; i < kernel_; ++i)
        for (int j = 0; j < kernel_; ++j) {
          const int tap = i * kernel_ + j;
          const T* oy = off.plane(n, 2 * tap);
          const T* ox = off.plane(n, 2 * tap + 1);
          T* doy = doff.plane(n, 2 * tap);
          T* dox = doff.plane(n, 2 * tap + 1);
          const T* row = dcols + (static_cast<std::size_t>(c) * kernel_ * kernel_ + tap) * hw;
          for (int y = 0; y < H; ++y)
            for (int xx = 0; xx < W; ++xx) {
              const std::size_t p = static_cast<std::size_t>(y) * W + xx;
              const T g = row[p];
              if (g == T{0}) continue;
              const T sy = static_cast<T>(y - pad() + i) + oy[p];
              const T sx = static_cast<T>(xx - pad() + j) + ox[p];
              if (sy <= T{-1} || sy >= H || sx <= T{-1} || sx >= W) continue;
              const int y0 = static_cast<int>(std::floor(sy));
              const int x0 = static_cast<int>(std::floor(sx));
              const T ly = sy - y0, lx = sx - x0;
              const T hy = 1 - ly, hx = 1 - lx;
              auto inside = [&](int yy, int xq) { return yy >= 0 && yy < H && xq >= 0 && xq < W; };
              auto val = [&](int yy, int xq) {
                return inside(yy, xq) ? plane[static_cast<std::size_t>(yy) * W + xq] : T{0};
              };
              auto scatter = [&](int yy, int xq, T wgt) {
                if (inside(yy, xq)) dplane[static_cast<std::size_t>(yy) * W + xq] += g * wgt;
              };
              scatter(y0, x0, hy * hx);
              scatter(y0, x0 + 1, hy * lx);
              scatter(y0 + 1, x0, ly * hx);
              scatter(y0 + 1, x0 + 1, ly * lx);
              const T v00 = val(y0, x0), v01 = val(y0, x0 + 1), v10 = val(y0 + 1, x0), v11 = val(y0 + 1, x0 + 1);
              doy[p] += g * (hx * (v10 - v00) + lx * (v11 - v01));
              dox[p] += g * (hy * (v01 - v00) + ly * (v11 - v10));
            }
        }
    }
  }

  int in_, out_, kernel_;
  bool has_bias_;
  nn::Parameter<T> weight_;
  nn::Parameter<T> bias_;
  Tensor<T> input_, offsets_;
};

}  // namespace crackseg::blocks
