#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "crackseg/core/blas.hpp"
#include "crackseg/core/random.hpp"
#include "crackseg/nn/module.hpp"

namespace crackseg::nn {

// Unrolls a (channels, height, width) plane stack into a
// (channels * k * k, height * width) matrix for a stride-1 convolution whose
// output has the same spatial size as its input.
template <typename T>
void im2col(const T* x, int channels, int height, int width, int kernel, int dilation, int pad, T* cols) {
  const int hw = height * width;
  for (int c = 0; c < channels; ++c) {
    const T* plane = x + static_cast<std::size_t>(c) * hw;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        T* row = cols + (static_cast<std::size_t>(c) * kernel * kernel + ki * kernel + kj) * hw;
        const int dy = ki * dilation - pad;
        const int dx = kj * dilation - pad;
        for (int y = 0; y < height; ++y) {
          const int iy = y + dy;
          T* out = row + static_cast<std::size_t>(y) * width;
          if (iy < 0 || iy >= height) {
            std::fill_n(out, width, T{0});
            continue;
          }
          const T* in = plane + static_cast<std::size_t>(iy) * width;
          const int x0 = std::max(0, -dx);
          const int x1 = std::min(width, width - dx);
          std::fill_n(out, std::max(0, std::min(x0, width)), T{0});
          for (int x = x0; x < x1; ++x) out[x] = in[x + dx];
          if (x1 < width) std::fill(out + std::max(x1, 0), out + width, T{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatters-adds columns back into planes.
template <typename T>
void col2im(const T* cols, int channels, int height, int width, int kernel, int dilation, int pad, T* dx) {
  const int hw = height * width;
  for (int c = 0; c < channels; ++c) {
    T* plane = dx + static_cast<std::size_t>(c) * hw;
    for (int ki = 0; ki < kernel; ++ki) {
      for (int kj = 0; kj < kernel; ++kj) {
        const T* row = cols + (static_cast<std::size_t>(c) * kernel * kernel + ki * kernel + kj) * hw;
        const int dy = ki * dilation - pad;
        const int dxo = kj * dilation - pad;
        for (int y = 0; y < height; ++y) {
          const int iy = y + dy;
          if (iy < 0 || iy >= height) continue;
          const T* in = row + static_cast<std::size_t>(y) * width;
          T* out = plane + static_cast<std::size_t>(iy) * width;
          const int x0 = std::max(0, -dxo);
          const int x1 = std::min(width, width - dxo);
          for (int x = x0; x < x1; ++x) out[x + dxo] += in[x];
        }
      }
    }
  }
}

// Stride-1 2-D convolution with zero padding that preserves spatial size
// (padding = dilation * (kernel - 1) / 2, kernel odd).
template <typename T>
class Conv2d : public Layer<T> {
 public:
  Conv2d(int in_channels, int out_channels, int kernel, int dilation, bool bias, Rng& rng)
      : in_(in_channels), out_(out_channels), kernel_(kernel), dilation_(dilation), has_bias_(bias),
        weight_(Shape{out_channels, in_channels, kernel, kernel}) {
    if (in_channels < 1 || out_channels < 1) throw ConfigError("Conv2d: channel counts must be positive");
    if (kernel < 1 || kernel % 2 == 0) throw ConfigError("Conv2d: kernel must be odd");
    if (dilation < 1) throw ConfigError("Conv2d: dilation must be >= 1");
    init_fan_in_uniform(weight_.value, rng, in_channels * kernel * kernel);
    this->register_parameter("weight", weight_);
    if (has_bias_) {
      bias_ = Parameter<T>(Shape{out_channels, 1, 1, 1});
      init_fan_in_uniform(bias_.value, rng, in_channels * kernel * kernel);
      this->register_parameter("bias", bias_);
    }
  }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  int kernel() const noexcept { return kernel_; }
  int dilation() const noexcept { return dilation_; }
  int padding() const noexcept { return dilation_ * (kernel_ - 1) / 2; }
  bool has_bias() const noexcept { return has_bias_; }

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != in_)
      throw ConfigError("Conv2d: expected " + std::to_string(in_) + " input channels, got " +
                        std::to_string(x.c()));
    const int hw = x.h() * x.w();
    const int patch = in_ * kernel_ * kernel_;
    Tensor<T> y(x.n(), out_, x.h(), x.w());
    for (int n = 0; n < x.n(); ++n) {
      const T* cols = columns(x.sample(n), x.h(), x.w());
      blas::gemm<T>(false, false, out_, hw, patch, weight_.value.data(), cols, y.sample(n));
      if (has_bias_) {
        for (int o = 0; o < out_; ++o) {
          T* p = y.plane(n, o);
          const T b = bias_.value[o];
          for (int i = 0; i < hw; ++i) p[i] += b;
        }
      }
    }
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("Conv2d");
    const Tensor<T>& x = input_;
    const int hw = x.h() * x.w();
    const int patch = in_ * kernel_ * kernel_;
    Tensor<T> dx(x.shape());
    std::vector<T> dcols(static_cast<std::size_t>(patch) * hw);
    for (int n = 0; n < x.n(); ++n) {
      const T* g = dy.sample(n);
      const T* cols = columns(x.sample(n), x.h(), x.w());
      blas::gemm<T>(false, true, out_, patch, hw, T{1}, g, hw, cols, hw, T{1}, weight_.grad.data(), patch);
      if (has_bias_) {
        for (int o = 0; o < out_; ++o) {
          const T* p = g + static_cast<std::size_t>(o) * hw;
          T s{0};
          for (int i = 0; i < hw; ++i) s += p[i];
          bias_.grad[o] += s;
        }
      }
      if (kernel_ == 1) {
        blas::gemm<T>(true, false, patch, hw, out_, weight_.value.data(), g, dx.sample(n));
      } else {
        blas::gemm<T>(true, false, patch, hw, out_, weight_.value.data(), g, dcols.data());
        col2im(dcols.data(), in_, x.h(), x.w(), kernel_, dilation_, padding(), dx.sample(n));
      }
    }
    return dx;
  }

 private:
  const T* columns(const T* sample, int h, int w) {
    if (kernel_ == 1) return sample;
    scratch_.resize(static_cast<std::size_t>(in_) * kernel_ * kernel_ * h * w);
    im2col(sample, in_, h, w, kernel_, dilation_, padding(), scratch_.data());
    return scratch_.data();
  }

  int in_, out_, kernel_, dilation_;
  bool has_bias_;
  Parameter<T> weight_;
  Parameter<T> bias_;
  Tensor<T> input_;
  std::vector<T> scratch_;
};

}  // namespace crackseg::nn
