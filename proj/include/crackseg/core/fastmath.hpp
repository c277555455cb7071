#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <type_traits>

namespace crackseg::fastmath {

// exp for float, relative error below 1e-6: 2^round(x*log2e) times a degree-7
// Taylor polynomial on the remainder. Written branch-free so loops over it
// vectorize (GCC needs -O3 -fno-trapping-math). Inputs below -87 clamp.
inline float exp_approx(float x) {
  x = x < -87.0f ? -87.0f : x;
  const float t = x * 1.4426950408889634f;
  const float r = (t + 12582912.0f) - 12582912.0f;  // round to nearest
  // Two-part ln 2 keeps the reduced argument exact to a few ulp.
  const float f = (x - r * 0.693145751953125f) - r * 1.428606765330187e-06f;
  const float p =
      1.f + f * (1.f + f * (0.5f + f * (1.f / 6 + f * (1.f / 24 + f * (1.f / 120 + f * (1.f / 720 + f * (1.f / 5040)))))));
  const std::int32_t bits = (static_cast<std::int32_t>(r) + 127) << 23;
  float scale;
  std::memcpy(&scale, &bits, sizeof scale);
  return p * scale;
}

// Lane-wise accumulators let these reductions vectorize without
// reassociation flags.
template <typename T>
T max_value(const T* __restrict a, int n) {
  T mx = a[0];
  int j = 0;
  if (n >= 8) {
    T lanes[8];
    for (int k = 0; k < 8; ++k) lanes[k] = a[k];
    for (j = 8; j + 8 <= n; j += 8)
      for (int k = 0; k < 8; ++k) lanes[k] = a[j + k] > lanes[k] ? a[j + k] : lanes[k];
    for (int k = 0; k < 8; ++k) mx = lanes[k] > mx ? lanes[k] : mx;
  }
  for (; j < n; ++j) mx = a[j] > mx ? a[j] : mx;
  return mx;
}

// In-place row softmax. Double precision keeps std::exp so gradient checks
// are not limited by the approximation.
template <typename T>
void softmax_row(T* __restrict row, int n) {
  T mx = max_value(row, n);
  if constexpr (std::is_same_v<T, float>) {
    for (int j = 0; j < n; ++j) row[j] = exp_approx(row[j] - mx);
  } else {
    for (int j = 0; j < n; ++j) row[j] = std::exp(row[j] - mx);
  }
  T acc[8] = {};
  int j = 0;
  for (; j + 8 <= n; j += 8)
    for (int k = 0; k < 8; ++k) acc[k] += row[j + k];
  T sum{0};
  for (int k = 0; k < 8; ++k) sum += acc[k];
  for (; j < n; ++j) sum += row[j];
  const T inv = T{1} / sum;
  for (int i = 0; i < n; ++i) row[i] *= inv;
}

template <typename T>
T dot(const T* __restrict a, const T* __restrict b, int n) {
  T acc[8] = {};
  int j = 0;
  for (; j + 8 <= n; j += 8)
    for (int k = 0; k < 8; ++k) acc[k] += a[j + k] * b[j + k];
  T sum{0};
  for (int k = 0; k < 8; ++k) sum += acc[k];
  for (; j < n; ++j) sum += a[j] * b[j];
  return sum;
}

}  // namespace crackseg::fastmath
