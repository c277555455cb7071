#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crackseg/nn/module.hpp"

namespace crackseg {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0;  // L2 added to the gradient; off by default
};

// Adam with bias correction. Moments are kept in double so that float and
// double models follow the same update arithmetic.
template <typename T>
class Adam {
 public:
  Adam(std::vector<nn::NamedParameter<T>> params, AdamOptions opt = {}) : params_(std::move(params)), opt_(opt) {
    for (const auto& p : params_) {
      m_.emplace_back(p.param->value.size(), 0.0);
      v_.emplace_back(p.param->value.size(), 0.0);
    }
  }

  const AdamOptions& options() const noexcept { return opt_; }
  void set_lr(double lr) { opt_.lr = lr; }
  std::int64_t steps() const noexcept { return t_; }

  void step() {
    ++t_;
    const double c1 = 1 - std::pow(opt_.beta1, static_cast<double>(t_));
    const double c2 = 1 - std::pow(opt_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& value = params_[k].param->value;
      const auto& grad = params_[k].param->grad;
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < value.size(); ++i) {
        double g = grad[i];
        if (opt_.weight_decay != 0) g += opt_.weight_decay * value[i];
        m[i] = opt_.beta1 * m[i] + (1 - opt_.beta1) * g;
        v[i] = opt_.beta2 * v[i] + (1 - opt_.beta2) * g * g;
        value[i] -= static_cast<T>(opt_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + opt_.eps));
      }
    }
  }

  // Serialization hooks for checkpoints, which store the moments as
  // "optim.<param>.m" / "optim.<param>.v".
  const std::vector<nn::NamedParameter<T>>& params() const noexcept { return params_; }
  std::vector<double>& first_moment(std::size_t k) { return m_[k]; }
  std::vector<double>& second_moment(std::size_t k) { return v_[k]; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  std::vector<nn::NamedParameter<T>> params_;
  AdamOptions opt_;
  std::vector<std::vector<double>> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace crackseg
