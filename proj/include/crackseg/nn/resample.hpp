#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "crackseg/nn/module.hpp"

namespace crackseg::nn {

// 2x2 max pooling with stride 2. Requires even spatial dims.
template <typename T>
class MaxPool2d : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    if (x.h() % 2 != 0 || x.w() % 2 != 0)
      throw ShapeError("MaxPool2d: spatial dims must be even, got " + x.shape().str());
    const int oh = x.h() / 2;
    const int ow = x.w() / 2;
    Tensor<T> y(x.n(), x.c(), oh, ow);
    if (this->training()) {
      argmax_.assign(y.size(), 0);
      in_shape_ = x.shape();
    }
    std::size_t o = 0;
    for (int n = 0; n < x.n(); ++n) {
      for (int c = 0; c < x.c(); ++c) {
        const T* p = x.plane(n, c);
        const std::size_t base = x.index(n, c, 0, 0);
        for (int yy = 0; yy < oh; ++yy) {
          for (int xx = 0; xx < ow; ++xx, ++o) {
            T best = -std::numeric_limits<T>::infinity();
            std::size_t at = 0;
            for (int dy = 0; dy < 2; ++dy) {
              for (int dx = 0; dx < 2; ++dx) {
                const std::size_t i = static_cast<std::size_t>(2 * yy + dy) * x.w() + (2 * xx + dx);
                if (p[i] > best) {
                  best = p[i];
                  at = i;
                }
              }
            }
            y[o] = best;
            if (this->training()) argmax_[o] = base + at;
          }
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("MaxPool2d");
    Tensor<T> dx(in_shape_);
    for (std::size_t o = 0; o < dy.size(); ++o) dx[argmax_[o]] += dy[o];
    return dx;
  }

 private:
  std::vector<std::size_t> argmax_;
  Shape in_shape_{};
};

// (N, C*r*r, H, W) -> (N, C, H*r, W*r); output(c, r*y + i, r*x + j) takes
// input channel c*r*r + i*r + j at (y, x).
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int r) {
  if (x.c() % (r * r) != 0) throw ShapeError("pixel_shuffle: channels not divisible by r^2");
  const int oc = x.c() / (r * r);
  Tensor<T> y(x.n(), oc, x.h() * r, x.w() * r);
  for (int n = 0; n < x.n(); ++n)
    for (int c = 0; c < oc; ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          const T* in = x.plane(n, c * r * r + i * r + j);
          for (int yy = 0; yy < x.h(); ++yy)
            for (int xx = 0; xx < x.w(); ++xx) y(n, c, yy * r + i, xx * r + j) = in[yy * x.w() + xx];
        }
  return y;
}

template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& y, int r) {
  if (y.h() % r != 0 || y.w() % r != 0) throw ShapeError("pixel_unshuffle: dims not divisible by r");
  const int h = y.h() / r;
  const int w = y.w() / r;
  Tensor<T> x(y.n(), y.c() * r * r, h, w);
  for (int n = 0; n < y.n(); ++n)
    for (int c = 0; c < y.c(); ++c)
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
          T* out = x.plane(n, c * r * r + i * r + j);
          for (int yy = 0; yy < h; ++yy)
            for (int xx = 0; xx < w; ++xx) out[yy * w + xx] = y(n, c, yy * r + i, xx * r + j);
        }
  return x;
}

// Sequential container of owned layers.
template <typename T>
class Sequential : public Layer<T> {
 public:
  template <typename L>
  L& add(std::string name, std::unique_ptr<L> layer) {
    L& ref = *layer;
    this->register_module(std::move(name), ref);
    layers_.push_back(std::move(layer));
    return ref;
  }

  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    Tensor<T> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::size_t size() const noexcept { return layers_.size(); }
  Layer<T>& at(std::size_t i) { return *layers_.at(i); }

 private:
  std::vector<std::unique_ptr<Layer<T>>> layers_;
};

}  // namespace crackseg::nn
