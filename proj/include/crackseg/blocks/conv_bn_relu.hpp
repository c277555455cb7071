#pragma once

#include "crackseg/nn/activation.hpp"
#include "crackseg/nn/batchnorm.hpp"
#include "crackseg/nn/conv2d.hpp"

namespace crackseg::blocks {

// conv (no bias) -> batch norm -> ReLU, the unit every convolution in the
// network is wrapped in.
template <typename T>
class ConvBnRelu : public nn::Layer<T> {
 public:
  ConvBnRelu(int in_channels, int out_channels, int kernel, int dilation, Rng& rng)
      : conv_(in_channels, out_channels, kernel, dilation, false, rng), bn_(out_channels) {
    this->register_module("conv", conv_);
    this->register_module("bn", bn_);
    this->register_module("relu", relu_);
  }

  nn::Conv2d<T>& conv() noexcept { return conv_; }
  nn::BatchNorm2d<T>& bn() noexcept { return bn_; }

  Tensor<T> forward(const Tensor<T>& x) override { return relu_.forward(bn_.forward(conv_.forward(x))); }
  Tensor<T> backward(const Tensor<T>& dy) override {
    return conv_.backward(bn_.backward(relu_.backward(dy)));
  }

 private:
  nn::Conv2d<T> conv_;
  nn::BatchNorm2d<T> bn_;
  nn::ReLU<T> relu_;
};

// Two 3x3 ConvBnRelu units: the plain U-Net stage used when DRBs are ablated.
template <typename T>
class DoubleConv : public nn::Layer<T> {
 public:
  DoubleConv(int in_channels, int out_channels, Rng& rng)
      : first_(in_channels, out_channels, 3, 1, rng), second_(out_channels, out_channels, 3, 1, rng) {
    this->register_module("conv1", first_);
    this->register_module("conv2", second_);
  }

  Tensor<T> forward(const Tensor<T>& x) override { return second_.forward(first_.forward(x)); }
  Tensor<T> backward(const Tensor<T>& dy) override { return first_.backward(second_.backward(dy)); }

 private:
  ConvBnRelu<T> first_;
  ConvBnRelu<T> second_;
};

}  // namespace crackseg::blocks
