#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "crackseg/core/random.hpp"
#include "crackseg/nn/activation.hpp"
#include "crackseg/nn/module.hpp"

namespace crackseg::blocks {

// Width of the squeezed descriptor: channels / reduction, but never below 4.
inline int se_hidden_width(int channels, int reduction) {
  if (reduction < 1 || channels % reduction != 0)
    throw ConfigError("squeeze-excite: reduction " + std::to_string(reduction) + " does not divide " +
                      std::to_string(channels) + " channels");
  return std::max(channels / reduction, 4);
}

// Channel attention: global average pool -> FC (C -> hidden) -> ReLU ->
// FC (hidden -> C) -> sigmoid gate, then per-channel rescaling of the input.
template <typename T>
class SqueezeExcite : public nn::Layer<T> {
 public:
  SqueezeExcite(int channels, int reduction, Rng& rng)
      : channels_(channels), hidden_(se_hidden_width(channels, reduction)),
        w1_(Shape{hidden_, channels, 1, 1}), b1_(Shape{hidden_, 1, 1, 1}), w2_(Shape{channels, hidden_, 1, 1}),
        b2_(Shape{channels, 1, 1, 1}) {
    init_kaiming_uniform(w1_.value, rng, channels);
    init_xavier_uniform(w2_.value, rng, hidden_, channels);
    this->register_parameter("fc1.weight", w1_);
    this->register_parameter("fc1.bias", b1_);
    this->register_parameter("fc2.weight", w2_);
    this->register_parameter("fc2.bias", b2_);
  }

  int channels() const noexcept { return channels_; }
  int hidden() const noexcept { return hidden_; }
  nn::Parameter<T>& fc1_weight() noexcept { return w1_; }
  nn::Parameter<T>& fc1_bias() noexcept { return b1_; }
  nn::Parameter<T>& fc2_weight() noexcept { return w2_; }
  nn::Parameter<T>& fc2_bias() noexcept { return b2_; }

  // Gates from the most recent forward, shape (N, C).
  const std::vector<T>& last_gates() const noexcept { return gates_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != channels_) throw ConfigError("squeeze-excite: channel mismatch");
    const int n = x.n();
    const int hw = x.h() * x.w();
    pooled_.assign(static_cast<std::size_t>(n) * channels_, T{0});
    hidden_act_.assign(static_cast<std::size_t>(n) * hidden_, T{0});
    gates_.assign(static_cast<std::size_t>(n) * channels_, T{0});
    for (int b = 0; b < n; ++b) {
      T* s = pooled_.data() + static_cast<std::size_t>(b) * channels_;
      for (int c = 0; c < channels_; ++c) {
        const T* p = x.plane(b, c);
        T acc{0};
        for (int i = 0; i < hw; ++i) acc += p[i];
        s[c] = acc / hw;
      }
      T* z = hidden_act_.data() + static_cast<std::size_t>(b) * hidden_;
      for (int j = 0; j < hidden_; ++j) {
        T acc = b1_.value[j];
        for (int c = 0; c < channels_; ++c) acc += w1_.value[static_cast<std::size_t>(j) * channels_ + c] * s[c];
        z[j] = acc > T{0} ? acc : T{0};
      }
      T* g = gates_.data() + static_cast<std::size_t>(b) * channels_;
      for (int c = 0; c < channels_; ++c) {
        T acc = b2_.value[c];
        for (int j = 0; j < hidden_; ++j) acc += w2_.value[static_cast<std::size_t>(c) * hidden_ + j] * z[j];
        g[c] = nn::sigmoid(acc);
      }
    }
    Tensor<T> y(x.shape());
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < channels_; ++c) {
        const T g = gates_[static_cast<std::size_t>(b) * channels_ + c];
        const T* in = x.plane(b, c);
        T* out = y.plane(b, c);
        for (int i = 0; i < hw; ++i) out[i] = in[i] * g;
      }
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("SqueezeExcite");
    const Tensor<T>& x = input_;
    const int n = x.n();
    const int hw = x.h() * x.w();
    Tensor<T> dx(x.shape());
    std::vector<T> dz(channels_), dh(hidden_), ds(channels_);
    for (int b = 0; b < n; ++b) {
      const T* g = gates_.data() + static_cast<std::size_t>(b) * channels_;
      const T* s = pooled_.data() + static_cast<std::size_t>(b) * channels_;
      const T* h = hidden_act_.data() + static_cast<std::size_t>(b) * hidden_;
      for (int c = 0; c < channels_; ++c) {
        const T* gy = dy.plane(b, c);
        const T* in = x.plane(b, c);
        T dgate{0};
        for (int i = 0; i < hw; ++i) dgate += gy[i] * in[i];
        dz[c] = dgate * g[c] * (T{1} - g[c]);
      }
      std::fill(dh.begin(), dh.end(), T{0});
      for (int c = 0; c < channels_; ++c) {
        b2_.grad[c] += dz[c];
        for (int j = 0; j < hidden_; ++j) {
          w2_.grad[static_cast<std::size_t>(c) * hidden_ + j] += dz[c] * h[j];
          dh[j] += dz[c] * w2_.value[static_cast<std::size_t>(c) * hidden_ + j];
        }
      }
      std::fill(ds.begin(), ds.end(), T{0});
      for (int j = 0; j < hidden_; ++j) {
        if (h[j] <= T{0}) continue;
        b1_.grad[j] += dh[j];
        for (int c = 0; c < channels_; ++c) {
          w1_.grad[static_cast<std::size_t>(j) * channels_ + c] += dh[j] * s[c];
          ds[c] += dh[j] * w1_.value[static_cast<std::size_t>(j) * channels_ + c];
        }
      }
      for (int c = 0; c < channels_; ++c) {
        const T* gy = dy.plane(b, c);
        T* out = dx.plane(b, c);
        const T pooled_grad = ds[c] / hw;
        for (int i = 0; i < hw; ++i) out[i] = gy[i] * g[c] + pooled_grad;
      }
    }
    return dx;
  }

 private:
  int channels_, hidden_;
  nn::Parameter<T> w1_, b1_, w2_, b2_;
  Tensor<T> input_;
  std::vector<T> pooled_, hidden_act_, gates_;
};

}  // namespace crackseg::blocks
