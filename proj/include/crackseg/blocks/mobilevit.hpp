#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "crackseg/blocks/conv_bn_relu.hpp"
#include "crackseg/nn/transformer.hpp"

namespace crackseg::blocks {

struct MvbConfig {
  int channels = 32;
  int transformer_depth = 2;
  int patch_size = 4;
  int transformer_dim = 92;
  double mlp_ratio = 2.0;
  int heads = 4;
};

// Transformer width for a stage: ratio * channels rounded to a multiple of
// the head count.
inline int mvb_transformer_dim(int channels, double ratio, int heads) {
  const int units = static_cast<int>(std::lround(ratio * channels / heads));
  return std::max(units, 1) * heads;
}

// Splits (N, D, H, W) into non-overlapping p x p patches. The result is a
// token matrix of shape (N * p * p * num_patches, D, 1, 1): rows are grouped
// by (batch, pixel-within-patch), and each group lists the num_patches
// patches in row-major order, so attention over a group mixes information
// across patches at one intra-patch position.
template <typename T>
Tensor<T> unfold_patches(const Tensor<T>& x, int p) {
  if (p < 1 || x.h() % p != 0 || x.w() % p != 0)
    throw ShapeError("unfold: spatial dims " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                     " are not divisible by patch size " + std::to_string(p) + "; pad the input");
  const int nh = x.h() / p, nw = x.w() / p;
  const int d = x.c();
  Tensor<T> tokens(x.n() * p * p * nh * nw, d, 1, 1);
  std::size_t row = 0;
  for (int n = 0; n < x.n(); ++n)
    for (int py = 0; py < p; ++py)
      for (int px = 0; px < p; ++px)
        for (int iy = 0; iy < nh; ++iy)
          for (int ix = 0; ix < nw; ++ix, ++row) {
            T* out = tokens.data() + row * d;
            for (int c = 0; c < d; ++c) out[c] = x(n, c, iy * p + py, ix * p + px);
          }
  return tokens;
}

template <typename T>
Tensor<T> fold_patches(const Tensor<T>& tokens, Shape shape, int p) {
  if (tokens.size() != shape.numel() || tokens.c() != shape.c) throw ShapeError("fold: token/shape mismatch");
  const int nh = shape.h / p, nw = shape.w / p;
  Tensor<T> x(shape);
  std::size_t row = 0;
  for (int n = 0; n < shape.n; ++n)
    for (int py = 0; py < p; ++py)
      for (int px = 0; px < p; ++px)
        for (int iy = 0; iy < nh; ++iy)
          for (int ix = 0; ix < nw; ++ix, ++row) {
            const T* in = tokens.data() + row * shape.c;
            for (int c = 0; c < shape.c; ++c) x(n, c, iy * p + py, ix * p + px) = in[c];
          }
  return x;
}

// MobileViT block: local 3x3 ConvBnRelu -> 1x1 projection to the
// transformer width -> unfold -> transformer layers -> LayerNorm -> fold ->
// 1x1 ConvBnRelu back to C -> concat with the block input -> 3x3
// ConvBnRelu (2C -> C).
template <typename T>
class MobileViTBlock : public nn::Layer<T> {
 public:
  MobileViTBlock(const MvbConfig& cfg, Rng& rng)
      : cfg_(cfg), local_(cfg.channels, cfg.channels, 3, 1, rng),
        to_tokens_(cfg.channels, cfg.transformer_dim, 1, 1, true, rng), norm_(cfg.transformer_dim),
        from_tokens_(cfg.transformer_dim, cfg.channels, 1, 1, rng), fuse_(2 * cfg.channels, cfg.channels, 3, 1, rng) {
    if (cfg.transformer_depth < 1) throw ConfigError("MVB: transformer depth must be >= 1");
    if (cfg.patch_size < 1) throw ConfigError("MVB: patch size must be >= 1");
    const int mlp_dim = static_cast<int>(std::lround(cfg.mlp_ratio * cfg.transformer_dim));
    this->register_module("local", local_);
    this->register_module("to_tokens", to_tokens_);
    for (int i = 0; i < cfg.transformer_depth; ++i) {
      layers_.push_back(std::make_unique<nn::TransformerLayer<T>>(cfg.transformer_dim, cfg.heads, mlp_dim, rng));
      this->register_module("transformer." + std::to_string(i), *layers_.back());
    }
    this->register_module("norm", norm_);
    this->register_module("from_tokens", from_tokens_);
    this->register_module("fuse", fuse_);
  }

  const MvbConfig& config() const noexcept { return cfg_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != cfg_.channels) throw ConfigError("MVB: channel mismatch");
    if (x.h() % cfg_.patch_size != 0 || x.w() % cfg_.patch_size != 0)
      throw ShapeError("MVB: input " + std::to_string(x.h()) + "x" + std::to_string(x.w()) +
                       " is not divisible by patch size " + std::to_string(cfg_.patch_size) +
                       "; pad the input to a multiple of the patch size");
    Tensor<T> proj = to_tokens_.forward(local_.forward(x));
    const Shape proj_shape = proj.shape();
    const int group = (x.h() / cfg_.patch_size) * (x.w() / cfg_.patch_size);
    Tensor<T> tokens = unfold_patches(proj, cfg_.patch_size);
    for (auto& layer : layers_) tokens = layer->forward(tokens, group);
    tokens = norm_.forward(tokens);
    Tensor<T> global = from_tokens_.forward(fold_patches(tokens, proj_shape, cfg_.patch_size));
    if (this->training()) proj_shape_ = proj_shape;
    return fuse_.forward(concat_channels(x, global));
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    auto [dx_skip, dglobal] = split_channels(fuse_.backward(dy), cfg_.channels);
    Tensor<T> dtokens = norm_.backward(unfold_patches(from_tokens_.backward(dglobal), cfg_.patch_size));
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) dtokens = (*it)->backward(dtokens);
    Tensor<T> dx = local_.backward(to_tokens_.backward(fold_patches(dtokens, proj_shape_, cfg_.patch_size)));
    dx += dx_skip;
    return dx;
  }

 private:
  MvbConfig cfg_;
  ConvBnRelu<T> local_;
  nn::Conv2d<T> to_tokens_;
  std::vector<std::unique_ptr<nn::TransformerLayer<T>>> layers_;
  nn::LayerNorm<T> norm_;
  ConvBnRelu<T> from_tokens_;
  ConvBnRelu<T> fuse_;
  Shape proj_shape_{};
};

}  // namespace crackseg::blocks
