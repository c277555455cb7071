#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "crackseg/core/tensor.hpp"

namespace crackseg::nn {

template <typename T>
struct Parameter {
  Tensor<T> value;
  Tensor<T> grad;

  Parameter() = default;
  explicit Parameter(Shape s) : value(s), grad(s) {}

  void zero_grad() { grad.zero(); }
};

template <typename T>
struct NamedParameter {
  std::string name;
  Parameter<T>* param;
};

template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* buffer;
};

// Owns nothing itself: parameters, buffers and children are members of the
// concrete module and registered by address, so modules are pinned in memory.
template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  Module(Module&&) = delete;
  Module& operator=(Module&&) = delete;
  virtual ~Module() = default;

  bool training() const noexcept { return training_; }

  void set_training(bool on) {
    training_ = on;
    for (auto& [name, child] : children_) child->set_training(on);
  }

  std::vector<NamedParameter<T>> named_parameters(const std::string& prefix = "") {
    std::vector<NamedParameter<T>> out;
    collect_parameters(prefix, out);
    return out;
  }

  std::vector<NamedBuffer<T>> named_buffers(const std::string& prefix = "") {
    std::vector<NamedBuffer<T>> out;
    collect_buffers(prefix, out);
    return out;
  }

  std::size_t parameter_count() {
    std::size_t total = 0;
    for (const auto& p : named_parameters()) total += p.param->value.size();
    return total;
  }

  void zero_grad() {
    for (auto& p : named_parameters()) p.param->zero_grad();
  }

  const std::vector<std::pair<std::string, Module*>>& children() const noexcept { return children_; }

 protected:
  void register_parameter(std::string name, Parameter<T>& p) { params_.emplace_back(std::move(name), &p); }
  void register_buffer(std::string name, Tensor<T>& t) { buffers_.emplace_back(std::move(name), &t); }
  void register_module(std::string name, Module& m) { children_.emplace_back(std::move(name), &m); }

  void require_training(const char* who) const {
    if (!training_) throw Error("E_STATE", std::string(who) + ": backward requires training mode");
  }

 private:
  static std::string join(const std::string& prefix, const std::string& name) {
    return prefix.empty() ? name : prefix + "." + name;
  }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) {
    for (auto& [name, p] : params_) out.push_back({join(prefix, name), p});
    for (auto& [name, child] : children_) child->collect_parameters(join(prefix, name), out);
  }

  void collect_buffers(const std::string& prefix, std::vector<NamedBuffer<T>>& out) {
    for (auto& [name, b] : buffers_) out.push_back({join(prefix, name), b});
    for (auto& [name, child] : children_) child->collect_buffers(join(prefix, name), out);
  }

  bool training_ = true;
  std::vector<std::pair<std::string, Parameter<T>*>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, Module*>> children_;
};

// Single-input, single-output module. Forward caches what backward needs
// while in training mode; backward accumulates parameter gradients and
// returns the input gradient.
template <typename T>
class Layer : public Module<T> {
 public:
  virtual Tensor<T> forward(const Tensor<T>& x) = 0;
  virtual Tensor<T> backward(const Tensor<T>& dy) = 0;
};

}  // namespace crackseg::nn
