#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cbfn/errors.hpp"
#include "cbfn/shape.hpp"

namespace cbfn {

// Dense 4-D (n, c, h, w) tensor with an optional gradient buffer.
// The handle is cheap to copy; storage is shared. Row-major layout,
// w fastest.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    shape.check_valid("Tensor::zeros");
    Tensor t;
    t.s_ = std::make_shared<Store>();
    t.s_->shape = shape;
    t.s_->value.assign(static_cast<std::size_t>(shape.numel()), T(0));
    if (requires_grad) t.s_->grad.assign(t.s_->value.size(), T(0));
    t.s_->requires_grad = requires_grad;
    return t;
  }

  static Tensor full(const Shape& shape, T value, bool requires_grad = false) {
    Tensor t = zeros(shape, requires_grad);
    for (T& v : t.s_->value) v = value;
    return t;
  }

  static Tensor from_data(const Shape& shape, std::vector<T> data,
                          bool requires_grad = false) {
    shape.check_valid("Tensor::from_data");
    if (static_cast<std::int64_t>(data.size()) != shape.numel()) {
      throw ShapeError("Tensor::from_data: " + std::to_string(data.size()) +
                       " values for shape " + shape.str());
    }
    Tensor t;
    t.s_ = std::make_shared<Store>();
    t.s_->shape = shape;
    t.s_->value = std::move(data);
    if (requires_grad) t.s_->grad.assign(t.s_->value.size(), T(0));
    t.s_->requires_grad = requires_grad;
    return t;
  }

  bool defined() const { return static_cast<bool>(s_); }
  const Shape& shape() const { return s_->shape; }
  std::int64_t numel() const { return s_->shape.numel(); }

  std::vector<T>& values() { return s_->value; }
  const std::vector<T>& values() const { return s_->value; }
  T* data() { return s_->value.data(); }
  const T* data() const { return s_->value.data(); }

  bool requires_grad() const { return s_->requires_grad; }

  void set_requires_grad(bool enabled) {
    s_->requires_grad = enabled;
    if (enabled && s_->grad.size() != s_->value.size()) {
      s_->grad.assign(s_->value.size(), T(0));
    }
    if (!enabled) s_->grad.clear();
  }

  std::vector<T>& grad() {
    if (!s_->requires_grad) {
      throw UsageError("Tensor::grad: tensor does not require gradients");
    }
    return s_->grad;
  }
  const std::vector<T>& grad() const {
    if (!s_->requires_grad) {
      throw UsageError("Tensor::grad: tensor does not require gradients");
    }
    return s_->grad;
  }
  T* grad_data() { return s_->grad.data(); }
  const T* grad_data() const { return s_->grad.data(); }

  void zero_grad() {
    for (T& g : s_->grad) g = T(0);
  }

  std::int64_t index(std::int64_t n, std::int64_t c, std::int64_t y,
                     std::int64_t x) const {
    const Shape& s = s_->shape;
    return ((n * s.c + c) * s.h + y) * s.w + x;
  }

  T& at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) {
    return s_->value[static_cast<std::size_t>(index(n, c, y, x))];
  }
  T at(std::int64_t n, std::int64_t c, std::int64_t y, std::int64_t x) const {
    return s_->value[static_cast<std::size_t>(index(n, c, y, x))];
  }

  // Deep copy; the copy carries no gradient buffer and no history.
  Tensor detached_clone() const {
    Tensor t;
    t.s_ = std::make_shared<Store>();
    t.s_->shape = s_->shape;
    t.s_->value = s_->value;
    t.s_->requires_grad = false;
    return t;
  }

  bool same_storage(const Tensor& other) const { return s_ == other.s_; }

  bool all_finite() const {
    for (const T& v : s_->value) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

 private:
  struct Store {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty unless requires_grad
    bool requires_grad = false;
  };

  std::shared_ptr<Store> s_;
};

// A named trainable tensor. Names are unique within their owning network
// and are the keys used by checkpoints and the optimizer.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;
};

}  // namespace cbfn
