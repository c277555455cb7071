#pragma once

// Central-difference gradient checking in double precision.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "crackseg/core/tensor.hpp"
#include "crackseg/nn/module.hpp"

namespace gradcheck {

using crackseg::Tensor;

// ||a - b|| / max(||a|| + ||b||, tiny). Norm-wise, so a single kink crossing
// in one element does not dominate.
inline double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  // Both sides at round-off level: the true gradient is zero (for example a
  // bias feeding straight into batch norm).
  if (std::sqrt(na) < 1e-7 && std::sqrt(nb) < 1e-7) return 0.0;
  return std::sqrt(diff) / (std::sqrt(na) + std::sqrt(nb));
}

// Indices to probe: all of them, or `limit` distinct ones chosen with a
// fixed seed.
inline std::vector<std::size_t> probe_indices(std::size_t n, std::size_t limit, unsigned seed = 7) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (limit == 0 || limit >= n) return idx;
  std::mt19937 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(limit);
  return idx;
}

// Compares analytic[i] against (f(x+h) - f(x-h)) / 2h for the probed entries
// of `values`.
inline double check(Tensor<double>& values, const Tensor<double>& analytic, const std::function<double()>& f,
                    std::size_t limit = 0, double h = 1e-6) {
  std::vector<double> a, n;
  for (std::size_t i : probe_indices(values.size(), limit)) {
    const double keep = values[i];
    values[i] = keep + h;
    const double up = f();
    values[i] = keep - h;
    const double down = f();
    values[i] = keep;
    n.push_back((up - down) / (2 * h));
    a.push_back(analytic[i]);
  }
  return rel_error(a, n);
}

inline double dot(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Worst relative error over every parameter of a module, after the caller
// has run forward+backward to fill .grad.
inline double check_parameters(crackseg::nn::Module<double>& m, const std::function<double()>& f,
                               std::size_t limit_per_param = 0) {
  double worst = 0;
  for (auto& p : m.named_parameters()) {
    const Tensor<double> g = p.param->grad;
    worst = std::max(worst, check(p.param->value, g, f, limit_per_param));
  }
  return worst;
}

}  // namespace gradcheck
