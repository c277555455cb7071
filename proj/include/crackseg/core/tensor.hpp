#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "crackseg/core/error.hpp"

namespace crackseg {

// Dimensions of a rank-4 NCHW tensor. Token matrices reuse the same type with
// trailing unit dimensions where convenient.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const noexcept {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool valid() const noexcept { return n >= 1 && c >= 1 && h >= 1 && w >= 1; }

  friend bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    std::ostringstream os;
    os << "(" << n << "," << c << "," << h << "," << w << ")";
    return os.str();
  }
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0}) : shape_(shape), data_(shape.numel(), fill) {
    if (!shape.valid()) throw ShapeError("tensor dimensions must be >= 1, got " + shape.str());
  }
  Tensor(int n, int c, int h, int w, T fill = T{0}) : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const noexcept { return shape_; }
  int n() const noexcept { return shape_.n; }
  int c() const noexcept { return shape_.c; }
  int h() const noexcept { return shape_.h; }
  int w() const noexcept { return shape_.w; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> span() noexcept { return data_; }
  std::span<const T> span() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T* sample(int n) noexcept { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  const T* sample(int n) const noexcept { return data_.data() + static_cast<std::size_t>(n) * sample_size(); }
  std::size_t sample_size() const noexcept {
    return static_cast<std::size_t>(shape_.c) * shape_.plane();
  }

  T* plane(int n, int c) noexcept { return sample(n) + static_cast<std::size_t>(c) * shape_.plane(); }
  const T* plane(int n, int c) const noexcept {
    return sample(n) + static_cast<std::size_t>(c) * shape_.plane();
  }

  std::size_t index(int n, int c, int y, int x) const noexcept {
    return ((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  T& operator()(int n, int c, int y, int x) noexcept { return data_[index(n, c, y, x)]; }
  const T& operator()(int n, int c, int y, int x) const noexcept { return data_[index(n, c, y, x)]; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void zero() { fill(T{0}); }

  // Same storage, new dimensions; element count must match.
  Tensor reshaped(Shape s) const {
    if (s.numel() != shape_.numel())
      throw ShapeError("cannot reshape " + shape_.str() + " to " + s.str());
    Tensor out = *this;
    out.shape_ = s;
    return out;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  void require_same_shape(const Tensor& o, const char* what) const {
    if (!(shape_ == o.shape_))
      throw ShapeError(std::string(what) + ": shape mismatch " + shape_.str() + " vs " + o.shape_.str());
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

// Channel-wise concatenation of two maps with equal N, H, W.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw ShapeError("concat_channels: " + a.shape().str() + " vs " + b.shape().str());
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.sample(n), a.sample_size(), out.sample(n));
    std::copy_n(b.sample(n), b.sample_size(), out.sample(n) + a.sample_size());
  }
  return out;
}

// Inverse of concat_channels: first `split` channels go to the first result.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& x, int split) {
  if (split <= 0 || split >= x.c()) throw ShapeError("split_channels: bad split point");
  Tensor<T> a(x.n(), split, x.h(), x.w());
  Tensor<T> b(x.n(), x.c() - split, x.h(), x.w());
  for (int n = 0; n < x.n(); ++n) {
    std::copy_n(x.sample(n), a.sample_size(), a.sample(n));
    std::copy_n(x.sample(n) + a.sample_size(), b.sample_size(), b.sample(n));
  }
  return {std::move(a), std::move(b)};
}

// Stacks single-sample tensors along the batch axis.
template <typename T>
Tensor<T> stack_batch(const std::vector<Tensor<T>>& items) {
  if (items.empty()) throw ShapeError("stack_batch: empty input");
  Shape s = items.front().shape();
  int total = 0;
  for (const auto& t : items) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) throw ShapeError("stack_batch: mismatched items");
    total += t.n();
  }
  Tensor<T> out(total, s.c, s.h, s.w);
  std::size_t off = 0;
  for (const auto& t : items) {
    std::copy_n(t.data(), t.size(), out.data() + off);
    off += t.size();
  }
  return out;
}

template <typename T>
Tensor<T> slice_batch(const Tensor<T>& x, int begin, int count) {
  if (begin < 0 || count < 1 || begin + count > x.n()) throw ShapeError("slice_batch: out of range");
  Tensor<T> out(count, x.c(), x.h(), x.w());
  std::copy_n(x.sample(begin), out.size(), out.data());
  return out;
}

}  // namespace crackseg
