#pragma once

#include "crackseg/blocks/conv_bn_relu.hpp"
#include "crackseg/nn/resample.hpp"

namespace crackseg::blocks {

// Dense upsampling convolution: a 3x3 ConvBnRelu predicts out * 4 channels
// which pixel_shuffle rearranges into an (out, 2H, 2W) map.
template <typename T>
class DenseUpsampling : public nn::Layer<T> {
 public:
  static constexpr int kFactor = 2;

  DenseUpsampling(int in_channels, int out_channels, Rng& rng)
      : out_(out_channels), conv_(in_channels, out_channels * kFactor * kFactor, 3, 1, rng) {
    this->register_module("conv", conv_);
  }

  ConvBnRelu<T>& conv() noexcept { return conv_; }

  Tensor<T> forward(const Tensor<T>& x) override { return nn::pixel_shuffle(conv_.forward(x), kFactor); }
  Tensor<T> backward(const Tensor<T>& dy) override {
    return conv_.backward(nn::pixel_unshuffle(dy, kFactor));
  }

 private:
  int out_;
  ConvBnRelu<T> conv_;
};

}  // namespace crackseg::blocks
