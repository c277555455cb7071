#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "crackseg/core/blas.hpp"
#include "crackseg/core/fastmath.hpp"
#include "crackseg/core/random.hpp"
#include "crackseg/nn/activation.hpp"
#include "crackseg/nn/module.hpp"

// Token-level layers. A token matrix is a Tensor of shape (rows, features, 1, 1).

namespace crackseg::nn {

template <typename T>
class Linear : public Layer<T> {
 public:
  Linear(int in_features, int out_features, Rng& rng)
      : in_(in_features), out_(out_features), weight_(Shape{out_features, in_features, 1, 1}),
        bias_(Shape{out_features, 1, 1, 1}) {
    init_xavier_uniform(weight_.value, rng, in_features, out_features);
    this->register_parameter("weight", weight_);
    this->register_parameter("bias", bias_);
  }

  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>& bias() noexcept { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != in_) throw ConfigError("Linear: expected " + std::to_string(in_) + " features");
    const int rows = x.n();
    Tensor<T> y(rows, out_, 1, 1);
    blas::gemm<T>(false, true, rows, out_, in_, T{1}, x.data(), in_, weight_.value.data(), in_, T{0}, y.data(),
                  out_);
    for (int r = 0; r < rows; ++r) {
      T* row = y.data() + static_cast<std::size_t>(r) * out_;
      for (int o = 0; o < out_; ++o) row[o] += bias_.value[o];
    }
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("Linear");
    const int rows = dy.n();
    blas::gemm<T>(true, false, out_, in_, rows, T{1}, dy.data(), out_, input_.data(), in_, T{1},
                  weight_.grad.data(), in_);
    for (int r = 0; r < rows; ++r) {
      const T* row = dy.data() + static_cast<std::size_t>(r) * out_;
      for (int o = 0; o < out_; ++o) bias_.grad[o] += row[o];
    }
    Tensor<T> dx(rows, in_, 1, 1);
    blas::gemm<T>(false, false, rows, in_, out_, dy.data(), weight_.value.data(), dx.data());
    return dx;
  }

 private:
  int in_, out_;
  Parameter<T> weight_, bias_;
  Tensor<T> input_;
};

// Normalizes each row over its features.
template <typename T>
class LayerNorm : public Layer<T> {
 public:
  explicit LayerNorm(int features, T eps = T(1e-5))
      : features_(features), eps_(eps), gamma_(Shape{features, 1, 1, 1}), beta_(Shape{features, 1, 1, 1}) {
    gamma_.value.fill(T{1});
    this->register_parameter("weight", gamma_);
    this->register_parameter("bias", beta_);
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.c() != features_) throw ConfigError("LayerNorm: feature mismatch");
    const int rows = x.n();
    const int d = features_;
    Tensor<T> y(x.shape());
    if (this->training()) {
      xhat_ = Tensor<T>(x.shape());
      inv_std_.assign(rows, T{0});
    }
    for (int r = 0; r < rows; ++r) {
      const T* in = x.data() + static_cast<std::size_t>(r) * d;
      T* out = y.data() + static_cast<std::size_t>(r) * d;
      T mean{0};
      for (int i = 0; i < d; ++i) mean += in[i];
      mean /= d;
      T var{0};
      for (int i = 0; i < d; ++i) var += (in[i] - mean) * (in[i] - mean);
      var /= d;
      const T inv = T{1} / std::sqrt(var + eps_);
      for (int i = 0; i < d; ++i) {
        const T xh = (in[i] - mean) * inv;
        out[i] = xh * gamma_.value[i] + beta_.value[i];
        if (this->training()) xhat_[static_cast<std::size_t>(r) * d + i] = xh;
      }
      if (this->training()) inv_std_[r] = inv;
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("LayerNorm");
    const int rows = dy.n();
    const int d = features_;
    Tensor<T> dx(dy.shape());
    std::vector<T> g(d);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * d;
      T sum_g{0};
      T sum_gx{0};
      for (int i = 0; i < d; ++i) {
        gamma_.grad[i] += dy[off + i] * xhat_[off + i];
        beta_.grad[i] += dy[off + i];
        g[i] = dy[off + i] * gamma_.value[i];
        sum_g += g[i];
        sum_gx += g[i] * xhat_[off + i];
      }
      const T k = inv_std_[r] / d;
      for (int i = 0; i < d; ++i) dx[off + i] = k * (d * g[i] - sum_g - xhat_[off + i] * sum_gx);
    }
    return dx;
  }

 private:
  int features_;
  T eps_;
  Parameter<T> gamma_, beta_;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

// Multi-head self-attention applied independently to consecutive groups of
// `group_size` rows. Attention probabilities are recomputed in backward
// rather than stored, since the per-group score matrices dominate memory.
template <typename T>
class MultiHeadSelfAttention : public Module<T> {
 public:
  MultiHeadSelfAttention(int dim, int heads, Rng& rng) : dim_(dim), heads_(heads), qkv_(dim, 3 * dim, rng),
                                                       proj_(dim, dim, rng) {
    if (heads < 1 || dim % heads != 0) throw ConfigError("attention: dim must be divisible by heads");
    this->register_module("qkv", qkv_);
    this->register_module("proj", proj_);
  }

  int heads() const noexcept { return heads_; }

  Tensor<T> forward(const Tensor<T>& x, int group_size) {
    check_groups(x, group_size);
    Tensor<T> qkv = qkv_.forward(x);
    Tensor<T> attended(x.n(), dim_, 1, 1);
    const int g = group_size;
    const int ld = 3 * dim_;
    std::vector<T> probs(static_cast<std::size_t>(kBlockRows) * g);
    for_each_head(x.n(), g, qkv, [&](const T* q, const T* k, const T* v, std::size_t row0, int col) {
      for (int r0 = 0; r0 < g; r0 += kBlockRows) {
        const int rows = std::min(kBlockRows, g - r0);
        attention_probs(q + static_cast<std::size_t>(r0) * ld, k, rows, g, probs.data());
        blas::gemm<T>(false, false, rows, head_dim(), g, T{1}, probs.data(), g, v, ld, T{0},
                      attended.data() + (row0 + r0) * dim_ + col, dim_);
      }
    });
    if (this->training()) {
      qkv_out_ = std::move(qkv);
      group_size_ = group_size;
    }
    return proj_.forward(attended);
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    this->require_training("MultiHeadSelfAttention");
    const int g = group_size_;
    const int dh = head_dim();
    const int ld = 3 * dim_;
    Tensor<T> dattended = proj_.backward(dy);
    Tensor<T> dqkv(qkv_out_.n(), ld, 1, 1);
    std::vector<T> probs(static_cast<std::size_t>(kBlockRows) * g);
    std::vector<T> dprobs(static_cast<std::size_t>(kBlockRows) * g);
    const T scale = T{1} / std::sqrt(static_cast<T>(dh));
    for_each_head(qkv_out_.n(), g, qkv_out_, [&](const T* q, const T* k, const T* v, std::size_t row0, int col) {
      T* dk = dqkv.data() + row0 * ld + col + dim_;
      T* dv = dk + dim_;
      for (int r0 = 0; r0 < g; r0 += kBlockRows) {
        const int rows = std::min(kBlockRows, g - r0);
        const T* qb = q + static_cast<std::size_t>(r0) * ld;
        const T* dout = dattended.data() + (row0 + r0) * dim_ + col;
        T* dq = dqkv.data() + (row0 + r0) * ld + col;
        attention_probs(qb, k, rows, g, probs.data());
        // dV += A^T dO ; dA = dO V^T
        blas::gemm<T>(true, false, g, dh, rows, T{1}, probs.data(), g, dout, dim_, T{1}, dv, ld);
        blas::gemm<T>(false, true, rows, g, dh, T{1}, dout, dim_, v, ld, T{0}, dprobs.data(), g);
        // softmax backward, folded with the score scale
        for (int i = 0; i < rows; ++i) {
          T* da = dprobs.data() + static_cast<std::size_t>(i) * g;
          const T* a = probs.data() + static_cast<std::size_t>(i) * g;
          const T dot = fastmath::dot(da, a, g);
          for (int j = 0; j < g; ++j) da[j] = a[j] * (da[j] - dot) * scale;
        }
        blas::gemm<T>(false, false, rows, dh, g, T{1}, dprobs.data(), g, k, ld, T{0}, dq, ld);
        blas::gemm<T>(true, false, g, dh, rows, T{1}, dprobs.data(), g, qb, ld, T{1}, dk, ld);
      }
    });
    return qkv_.backward(dqkv);
  }

 private:
  // Query rows processed at a time, so a block of probabilities stays in cache.
  static constexpr int kBlockRows = 256;

  int head_dim() const noexcept { return dim_ / heads_; }

  void check_groups(const Tensor<T>& x, int group_size) const {
    if (group_size < 1 || x.n() % group_size != 0)
      throw ShapeError("attention: row count not divisible by group size");
  }

  template <typename F>
  void for_each_head(int rows, int group_size, const Tensor<T>& qkv, F&& fn) const {
    const int groups = rows / group_size;
    for (int grp = 0; grp < groups; ++grp) {
      const std::size_t row0 = static_cast<std::size_t>(grp) * group_size;
      for (int h = 0; h < heads_; ++h) {
        const int col = h * head_dim();
        const T* q = qkv.data() + row0 * 3 * dim_ + col;
        fn(q, q + dim_, q + 2 * dim_, row0, col);
      }
    }
  }

  // Softmax(scale * Q K^T) for `rows` queries against `g` keys.
  void attention_probs(const T* q, const T* k, int rows, int g, T* probs) const {
    const T scale = T{1} / std::sqrt(static_cast<T>(head_dim()));
    blas::gemm<T>(false, true, rows, g, head_dim(), scale, q, 3 * dim_, k, 3 * dim_, T{0}, probs, g);
    for (int i = 0; i < rows; ++i) fastmath::softmax_row(probs + static_cast<std::size_t>(i) * g, g);
  }

  int dim_, heads_;
  Linear<T> qkv_;
  Linear<T> proj_;
  Tensor<T> qkv_out_;
  int group_size_ = 0;
};

// Pre-norm transformer encoder layer: x + MHSA(LN(x)), then x + MLP(LN(x)).
template <typename T>
class TransformerLayer : public Module<T> {
 public:
  TransformerLayer(int dim, int heads, int mlp_dim, Rng& rng)
      : norm1_(dim), attn_(dim, heads, rng), norm2_(dim), fc1_(dim, mlp_dim, rng), fc2_(mlp_dim, dim, rng) {
    this->register_module("norm1", norm1_);
    this->register_module("attn", attn_);
    this->register_module("norm2", norm2_);
    this->register_module("fc1", fc1_);
    this->register_module("act", act_);
    this->register_module("fc2", fc2_);
  }

  Tensor<T> forward(const Tensor<T>& x, int group_size) {
    Tensor<T> h = attn_.forward(norm1_.forward(x), group_size);
    h += x;
    Tensor<T> y = fc2_.forward(act_.forward(fc1_.forward(norm2_.forward(h))));
    y += h;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) {
    Tensor<T> dh = norm2_.backward(fc1_.backward(act_.backward(fc2_.backward(dy))));
    dh += dy;
    Tensor<T> dx = norm1_.backward(attn_.backward(dh));
    dx += dh;
    return dx;
  }

 private:
  LayerNorm<T> norm1_;
  MultiHeadSelfAttention<T> attn_;
  LayerNorm<T> norm2_;
  Linear<T> fc1_;
  SiLU<T> act_;
  Linear<T> fc2_;
};

}  // namespace crackseg::nn
