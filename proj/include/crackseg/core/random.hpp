#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "crackseg/core/tensor.hpp"

namespace crackseg {

using Rng = std::mt19937_64;

// Mixes several integers into one seed (splitmix64 finalizer), so per-sample
// streams derived from (global_seed, epoch, index) are independent of worker
// count or iteration order.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto step = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return step(step(step(a) ^ b) ^ c);
}

template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, T lo, T hi) {
  std::uniform_real_distribution<double> dist(static_cast<double>(lo), static_cast<double>(hi));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, T mean, T stddev) {
  std::normal_distribution<double> dist(static_cast<double>(mean), static_cast<double>(stddev));
  for (auto& v : t.span()) v = static_cast<T>(dist(rng));
}

// He-uniform for ReLU networks.
template <typename T>
void init_kaiming_uniform(Tensor<T>& t, Rng& rng, int fan_in) {
  const T bound = static_cast<T>(std::sqrt(6.0 / fan_in));
  fill_uniform(t, rng, -bound, bound);
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)), the usual framework default for
// convolution weights and biases.
template <typename T>
void init_fan_in_uniform(Tensor<T>& t, Rng& rng, int fan_in) {
  const T bound = static_cast<T>(1.0 / std::sqrt(static_cast<double>(fan_in)));
  fill_uniform(t, rng, -bound, bound);
}

template <typename T>
void init_xavier_uniform(Tensor<T>& t, Rng& rng, int fan_in, int fan_out) {
  const T bound = static_cast<T>(std::sqrt(6.0 / (fan_in + fan_out)));
  fill_uniform(t, rng, -bound, bound);
}

}  // namespace crackseg
