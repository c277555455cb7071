#pragma once

#include <array>
#include <memory>
#include <string>

#include "crackseg/blocks/conv_bn_relu.hpp"
#include "crackseg/blocks/squeeze_excite.hpp"

namespace crackseg::blocks {

struct DrbConfig {
  int in_channels = 32;
  int out_channels = 32;
  std::array<int, 3> dilation_rates{1, 2, 5};
  int se_reduction = 16;
};

// Dilated residual block: three 3x3 ConvBnRelu units at increasing dilation
// (hybrid dilated convolution), squeeze-excite, then a residual add. The
// first conv changes the channel count; the identity path gets a 1x1
// projection when in != out. No activation follows the add, so a zeroed
// branch makes the block an exact identity.
template <typename T>
class DilatedResidualBlock : public nn::Layer<T> {
 public:
  DilatedResidualBlock(const DrbConfig& cfg, Rng& rng)
      : cfg_(cfg),
        conv1_(cfg.in_channels, cfg.out_channels, 3, cfg.dilation_rates[0], rng),
        conv2_(cfg.out_channels, cfg.out_channels, 3, cfg.dilation_rates[1], rng),
        conv3_(cfg.out_channels, cfg.out_channels, 3, cfg.dilation_rates[2], rng),
        se_(cfg.out_channels, cfg.se_reduction, rng) {
    this->register_module("conv1", conv1_);
    this->register_module("conv2", conv2_);
    this->register_module("conv3", conv3_);
    this->register_module("se", se_);
    if (cfg.in_channels != cfg.out_channels) {
      shortcut_ = std::make_unique<nn::Conv2d<T>>(cfg.in_channels, cfg.out_channels, 1, 1, true, rng);
      this->register_module("shortcut", *shortcut_);
    }
  }

  const DrbConfig& config() const noexcept { return cfg_; }
  ConvBnRelu<T>& conv(int i) { return i == 0 ? conv1_ : i == 1 ? conv2_ : conv3_; }
  SqueezeExcite<T>& se() noexcept { return se_; }
  bool has_projection() const noexcept { return shortcut_ != nullptr; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != cfg_.in_channels)
      throw ConfigError("DRB: expected " + std::to_string(cfg_.in_channels) + " channels, got " +
                        std::to_string(x.c()));
    Tensor<T> y = se_.forward(conv3_.forward(conv2_.forward(conv1_.forward(x))));
    if (shortcut_) {
      y += shortcut_->forward(x);
    } else {
      y += x;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> dx = conv1_.backward(conv2_.backward(conv3_.backward(se_.backward(dy))));
    if (shortcut_) {
      dx += shortcut_->backward(dy);
    } else {
      dx += dy;
    }
    return dx;
  }

 private:
  DrbConfig cfg_;
  ConvBnRelu<T> conv1_, conv2_, conv3_;
  SqueezeExcite<T> se_;
  std::unique_ptr<nn::Conv2d<T>> shortcut_;
};

}  // namespace crackseg::blocks
