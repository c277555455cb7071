#pragma once

#include <cmath>
#include <vector>

#include "crackseg/nn/module.hpp"

namespace crackseg::nn {

// Per-channel batch normalization over (N, H, W). Training mode normalizes
// with batch statistics and updates running estimates (unbiased variance);
// evaluation mode uses the running estimates.
template <typename T>
class BatchNorm2d : public Layer<T> {
 public:
  explicit BatchNorm2d(int channels, T momentum = T(0.1), T eps = T(1e-5))
      : channels_(channels), momentum_(momentum), eps_(eps), gamma_(Shape{channels, 1, 1, 1}),
        beta_(Shape{channels, 1, 1, 1}), running_mean_(Shape{channels, 1, 1, 1}),
        running_var_(Shape{channels, 1, 1, 1}, T{1}) {
    gamma_.value.fill(T{1});
    this->register_parameter("weight", gamma_);
    this->register_parameter("bias", beta_);
    this->register_buffer("running_mean", running_mean_);
    this->register_buffer("running_var", running_var_);
  }

  Parameter<T>& gamma() noexcept { return gamma_; }
  Parameter<T>& beta() noexcept { return beta_; }
  Tensor<T>& running_mean() noexcept { return running_mean_; }
  Tensor<T>& running_var() noexcept { return running_var_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != channels_) throw ConfigError("BatchNorm2d: channel mismatch");
    const int hw = x.h() * x.w();
    const double count = static_cast<double>(x.n()) * hw;
    Tensor<T> y(x.shape());
    if (!this->training()) {
      for (int c = 0; c < channels_; ++c) {
        const T inv = T{1} / std::sqrt(running_var_[c] + eps_);
        const T scale = gamma_.value[c] * inv;
        const T shift = beta_.value[c] - running_mean_[c] * scale;
        for (int n = 0; n < x.n(); ++n) {
          const T* in = x.plane(n, c);
          T* out = y.plane(n, c);
          for (int i = 0; i < hw; ++i) out[i] = in[i] * scale + shift;
        }
      }
      return y;
    }

    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, T{0});
    for (int c = 0; c < channels_; ++c) {
      double sum = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* in = x.plane(n, c);
        for (int i = 0; i < hw; ++i) sum += in[i];
      }
      const double mean = sum / count;
      double sq = 0.0;
      for (int n = 0; n < x.n(); ++n) {
        const T* in = x.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          const double d = in[i] - mean;
          sq += d * d;
        }
      }
      const double var = sq / count;
      const T inv = static_cast<T>(1.0 / std::sqrt(var + static_cast<double>(eps_)));
      inv_std_[c] = inv;
      for (int n = 0; n < x.n(); ++n) {
        const T* in = x.plane(n, c);
        T* xh = xhat_.plane(n, c);
        T* out = y.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          xh[i] = static_cast<T>((in[i] - mean)) * inv;
          out[i] = xh[i] * gamma_.value[c] + beta_.value[c];
        }
      }
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = static_cast<T>((1 - momentum_) * running_mean_[c] + momentum_ * mean);
      running_var_[c] = static_cast<T>((1 - momentum_) * running_var_[c] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("BatchNorm2d");
    const int hw = dy.h() * dy.w();
    const T count = static_cast<T>(dy.n()) * hw;
    Tensor<T> dx(dy.shape());
    for (int c = 0; c < channels_; ++c) {
      T sum_dy{0};
      T sum_dy_xhat{0};
      for (int n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        for (int i = 0; i < hw; ++i) {
          sum_dy += g[i];
          sum_dy_xhat += g[i] * xh[i];
        }
      }
      gamma_.grad[c] += sum_dy_xhat;
      beta_.grad[c] += sum_dy;
      const T k = gamma_.value[c] * inv_std_[c] / count;
      for (int n = 0; n < dy.n(); ++n) {
        const T* g = dy.plane(n, c);
        const T* xh = xhat_.plane(n, c);
        T* out = dx.plane(n, c);
        for (int i = 0; i < hw; ++i) out[i] = k * (count * g[i] - sum_dy - xh[i] * sum_dy_xhat);
      }
    }
    return dx;
  }

 private:
  int channels_;
  T momentum_, eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

}  // namespace crackseg::nn
