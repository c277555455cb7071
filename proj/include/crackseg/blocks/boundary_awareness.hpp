#pragma once

#include <string>

#include "crackseg/blocks/deform_conv.hpp"
#include "crackseg/nn/activation.hpp"
#include "crackseg/nn/conv2d.hpp"

namespace crackseg::blocks {

template <typename T>
struct BamOutput {
  Tensor<T> features;  // x1 + B broadcast over channels
  Tensor<T> boundary;  // B, one channel, in (0, 1)
};

// Boundary awareness module on the E1 -> D4 shortcut:
//   B   = sigmoid(conv1x1(deform_conv3x3(x1)))
//   x1' = x1 + B repeated across every channel of x1
// Deformable offsets come from an ordinary 3x3 conv over x1 that starts at
// zero, so an untrained module samples the regular grid.
template <typename T>
class BoundaryAwareness : public nn::Module<T> {
 public:
  static constexpr int kChannels = 32;

  explicit BoundaryAwareness(Rng& rng, int channels = kChannels)
      : channels_(channels), offset_conv_(channels, 18, 3, 1, true, rng), dconv_(channels, channels, 3, true, rng),
        head_(channels, 1, 1, 1, true, rng) {
    offset_conv_.weight().value.zero();
    offset_conv_.bias().value.zero();
    this->register_module("offset", offset_conv_);
    this->register_module("dconv", dconv_);
    this->register_module("head", head_);
  }

  nn::Conv2d<T>& offset_conv() noexcept { return offset_conv_; }
  DeformConv2d<T>& dconv() noexcept { return dconv_; }
  nn::Conv2d<T>& head() noexcept { return head_; }

  BamOutput<T> forward(const Tensor<T>& x1) {
    if (x1.c() != channels_)
      throw ConfigError("BAM: expected " + std::to_string(channels_) + " channels, got " + std::to_string(x1.c()));
    Tensor<T> offsets = offset_conv_.forward(x1);
    Tensor<T> logits = head_.forward(dconv_.forward(x1, offsets));
    BamOutput<T> out{x1, Tensor<T>(logits.shape())};
    const int hw = x1.h() * x1.w();
    for (int n = 0; n < x1.n(); ++n) {
      const T* z = logits.plane(n, 0);
      T* b = out.boundary.plane(n, 0);
      for (int i = 0; i < hw; ++i) b[i] = nn::sigmoid(z[i]);
      for (int c = 0; c < channels_; ++c) {
        T* f = out.features.plane(n, c);
        for (int i = 0; i < hw; ++i) f[i] += b[i];
      }
    }
    if (this->training()) boundary_ = out.boundary;
    return out;
  }

  // d_features flows from the decoder; d_boundary from the boundary loss and
  // may be empty when the boundary head is unsupervised.
  Tensor<T> backward(const Tensor<T>& d_features, const Tensor<T>& d_boundary) {
    this->require_training("BAM");
    const int hw = d_features.h() * d_features.w();
    Tensor<T> dz(boundary_.shape());
    for (int n = 0; n < d_features.n(); ++n) {
      T* g = dz.plane(n, 0);
      if (!d_boundary.empty()) std::copy_n(d_boundary.plane(n, 0), hw, g);
      for (int c = 0; c < channels_; ++c) {
        const T* f = d_features.plane(n, c);
        for (int i = 0; i < hw; ++i) g[i] += f[i];
      }
      const T* b = boundary_.plane(n, 0);
      for (int i = 0; i < hw; ++i) g[i] *= b[i] * (T{1} - b[i]);
    }
    auto [dx_dconv, doffsets] = dconv_.backward(head_.backward(dz));
    Tensor<T> dx = d_features;
    dx += dx_dconv;
    dx += offset_conv_.backward(doffsets);
    return dx;
  }

 private:
  int channels_;
  nn::Conv2d<T> offset_conv_;
  DeformConv2d<T> dconv_;
  nn::Conv2d<T> head_;
  Tensor<T> boundary_;
};

}  // namespace crackseg::blocks
