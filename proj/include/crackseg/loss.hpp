#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "crackseg/network.hpp"
#include "crackseg/nn/activation.hpp"

namespace crackseg {

inline constexpr double kProbEps = 1e-7;

// w0 weighs the crack (y = 1) term and equals the non-crack fraction; w1 is
// the crack fraction.
struct ClassWeights {
  double w0 = 0.5;
  double w1 = 0.5;
};

template <typename T>
ClassWeights class_weights(const T* target, std::size_t n) {
  if (n == 0) throw ShapeError("class_weights: empty mask");
  std::size_t ones = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (target[i] != T{0} && target[i] != T{1}) throw DataError("class_weights: target is not binary");
    ones += target[i] == T{1} ? 1 : 0;
  }
  const double pixels = static_cast<double>(n);
  return {static_cast<double>(n - ones) / pixels, static_cast<double>(ones) / pixels};
}

template <typename T>
ClassWeights class_weights(const Tensor<T>& target) {
  return class_weights(target.data(), target.size());
}

template <typename T>
struct LossValue {
  double value = 0;
  Tensor<T> grad;  // w.r.t. the prediction that was passed in
};

namespace detail {

template <typename T>
void check_pair(const Tensor<T>& pred, const Tensor<T>& target, const char* who) {
  if (pred.shape() != target.shape())
    throw ShapeError(std::string(who) + ": prediction " + pred.shape().str() + " vs target " + target.shape().str());
}

inline double clamp_prob(double p) { return std::clamp(p, kProbEps, 1.0 - kProbEps); }

}  // namespace detail

// Weighted BCE on probabilities. Weights come from each image's own target;
// the per-image sum is divided by its pixel count and images are averaged.
template <typename T>
LossValue<T> weighted_bce(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_pair(pred, target, "weighted_bce");
  LossValue<T> out{0, Tensor<T>(pred.shape())};
  const std::size_t per = pred.sample_size();
  const double scale = 1.0 / (static_cast<double>(per) * pred.n());
  for (int n = 0; n < pred.n(); ++n) {
    const T* p = pred.sample(n);
    const T* y = target.sample(n);
    T* g = out.grad.sample(n);
    const ClassWeights w = class_weights(y, per);
    double sum = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double raw = static_cast<double>(p[i]);
      const double q = detail::clamp_prob(raw);
      const double yi = static_cast<double>(y[i]);
      sum -= w.w0 * yi * std::log(q) + w.w1 * (1 - yi) * std::log(1 - q);
      const bool inside = raw > kProbEps && raw < 1.0 - kProbEps;
      g[i] = inside ? static_cast<T>((-w.w0 * yi / q + w.w1 * (1 - yi) / (1 - q)) * scale) : T{0};
    }
    out.value += sum * scale;
  }
  return out;
}

// The same weighted BCE taken on logits, with the gradient w.r.t. the
// logits. log(sigmoid(z)) = -softplus(-z), so the value needs no clamp and
// the gradient w0*y*(sigmoid(z) - 1) + w1*(1 - y)*sigmoid(z) stays nonzero
// for saturated wrong predictions.
template <typename T>
LossValue<T> weighted_bce_logits(const Tensor<T>& logits, const Tensor<T>& target) {
  detail::check_pair(logits, target, "weighted_bce_logits");
  LossValue<T> out{0, Tensor<T>(logits.shape())};
  const std::size_t per = logits.sample_size();
  const double scale = 1.0 / (static_cast<double>(per) * logits.n());
  auto softplus = [](double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); };
  for (int n = 0; n < logits.n(); ++n) {
    const T* z = logits.sample(n);
    const T* y = target.sample(n);
    T* g = out.grad.sample(n);
    const ClassWeights w = class_weights(y, per);
    double sum = 0;
    for (std::size_t i = 0; i < per; ++i) {
      const double zi = static_cast<double>(z[i]);
      const double yi = static_cast<double>(y[i]);
      sum += w.w0 * yi * softplus(-zi) + w.w1 * (1 - yi) * softplus(zi);
      const double p = 1 / (1 + std::exp(-zi));
      g[i] = static_cast<T>((w.w0 * yi * (p - 1) + w.w1 * (1 - yi) * p) * scale);
    }
    out.value += sum * scale;
  }
  return out;
}

// Smoothed Dice loss 1 - (2|Y.P| + 1) / (|Y| + |P| + 1) per image, averaged
// over the batch.
template <typename T>
LossValue<T> dice_loss(const Tensor<T>& pred, const Tensor<T>& target) {
  detail::check_pair(pred, target, "dice_loss");
  LossValue<T> out{0, Tensor<T>(pred.shape())};
  const std::size_t per = pred.sample_size();
  const double inv_n = 1.0 / pred.n();
  for (int n = 0; n < pred.n(); ++n) {
    const T* p = pred.sample(n);
    const T* y = target.sample(n);
    T* g = out.grad.sample(n);
    double inter = 0, sy = 0, sp = 0;
    for (std::size_t i = 0; i < per; ++i) {
      inter += static_cast<double>(y[i]) * p[i];
      sy += y[i];
      sp += p[i];
    }
    const double num = 2 * inter + 1;
    const double den = sy + sp + 1;
    out.value += (1 - num / den) * inv_n;
    for (std::size_t i = 0; i < per; ++i)
      g[i] = static_cast<T>(-(2 * static_cast<double>(y[i]) * den - num) / (den * den) * inv_n);
  }
  return out;
}

template <typename T>
struct LossBreakdown {
  double total = 0;
  double wbce = 0;
  double dice = 0;
  double boundary_wbce = 0;
  double boundary_dice = 0;
  Tensor<T> d_logits;
  Tensor<T> d_boundary;  // empty without a boundary head
};

// wBCE (on logits) + Dice on sigmoid(seg_logits), plus lambda_b times the same pair on
// the boundary map when the model has one.
template <typename T>
LossBreakdown<T> total_loss(const ModelOutput<T>& output, const Tensor<T>& target, const Tensor<T>* boundary_target,
                            double lambda_b = 1.0) {
  if (output.boundary_map && !boundary_target) throw ConfigError("total_loss: BAM output needs a boundary target");
  if (!output.boundary_map && boundary_target) throw ConfigError("total_loss: boundary target without a BAM output");
  const Tensor<T>& z = output.seg_logits;
  Tensor<T> prob(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) prob[i] = nn::sigmoid(z[i]);
  auto bce = weighted_bce_logits(z, target);
  auto dice = dice_loss(prob, target);
  LossBreakdown<T> out;
  out.wbce = bce.value;
  out.dice = dice.value;
  out.d_logits = Tensor<T>(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double p = prob[i];
    out.d_logits[i] = static_cast<T>(static_cast<double>(bce.grad[i]) + dice.grad[i] * p * (1 - p));
  }
  out.total = out.wbce + out.dice;
  if (output.boundary_map) {
    auto bb = weighted_bce(*output.boundary_map, *boundary_target);
    auto bd = dice_loss(*output.boundary_map, *boundary_target);
    out.boundary_wbce = bb.value;
    out.boundary_dice = bd.value;
    out.total += lambda_b * (bb.value + bd.value);
    out.d_boundary = Tensor<T>(output.boundary_map->shape());
    for (std::size_t i = 0; i < out.d_boundary.size(); ++i)
      out.d_boundary[i] = static_cast<T>(lambda_b * (static_cast<double>(bb.grad[i]) + bd.grad[i]));
  }
  return out;
}

}  // namespace crackseg
