#pragma once

#include <cmath>
#include <type_traits>

#include "crackseg/core/fastmath.hpp"

#include "crackseg/nn/module.hpp"

namespace crackseg::nn {

// Vectorizable logistic for float SiLU loops; double uses the exact path.
template <typename T>
inline T sigmoid_fast(T z) {
  if constexpr (std::is_same_v<T, float>) {
    return 1.0f / (1.0f + fastmath::exp_approx(-z));
  } else {
    return T{1} / (T{1} + std::exp(-z));
  }
}

template <typename T>
inline T sigmoid(T z) {
  // Split on sign so exp never overflows.
  if (z >= T{0}) return T{1} / (T{1} + std::exp(-z));
  const T e = std::exp(z);
  return e / (T{1} + e);
}

template <typename T>
class ReLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
    if (this->training()) output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("ReLU");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = output_[i] > T{0} ? dy[i] : T{0};
    return dx;
  }

 private:
  Tensor<T> output_;
};

template <typename T>
class Sigmoid : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid(x[i]);
    if (this->training()) output_ = y;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("Sigmoid");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) dx[i] = dy[i] * output_[i] * (T{1} - output_[i]);
    return dx;
  }

 private:
  Tensor<T> output_;
};

// x * sigmoid(x), used inside the transformer MLP.
template <typename T>
class SiLU : public Layer<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] * sigmoid_fast(x[i]);
    if (this->training()) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& dy) override {
    this->require_training("SiLU");
    Tensor<T> dx(dy.shape());
    for (std::size_t i = 0; i < dy.size(); ++i) {
      const T s = sigmoid_fast(input_[i]);
      dx[i] = dy[i] * s * (T{1} + input_[i] * (T{1} - s));
    }
    return dx;
  }

 private:
  Tensor<T> input_;
};

}  // namespace crackseg::nn
