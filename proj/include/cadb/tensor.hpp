// Copyright 2026 The cadb Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>
#include <initializer_list>
#include <memory>
#include <utility>
#include <vector>

#include "cadb/common.hpp"

namespace cadb {

// Dense row-major tensor with value-semantic handles over shared storage.
// Copies alias the same buffer, so a parameter registered in a module and the
// same parameter held by the optimizer see each other's updates.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : impl_(std::make_shared<Impl>()) {
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(shape_numel(impl_->shape)), T(0));
  }

  Tensor(Shape shape, std::vector<T> data) : impl_(std::make_shared<Impl>()) {
    check(shape_numel(shape) == static_cast<int64_t>(data.size()),
          "Tensor: data length " + std::to_string(data.size()) +
              " does not match shape " + shape_str(shape));
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
  }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    for (auto& v : t.impl_->data) v = value;
    return t;
  }

  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(impl_->shape.size()); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  T* data() { return impl_->data.data(); }
  const T* data() const { return impl_->data.data(); }
  std::vector<T>& vec() { return impl_->data; }
  const std::vector<T>& vec() const { return impl_->data; }

  T item() const {
    check(numel() == 1, "item: tensor has " + std::to_string(numel()) + " elements");
    return impl_->data[0];
  }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return impl_ && !impl_->grad.empty(); }

  // Allocates a zero gradient buffer on first access.
  std::vector<T>& grad_buffer() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
    return impl_->grad;
  }

  // May be empty if no gradient ever reached this tensor.
  const std::vector<T>& grad_view() const {
    static const std::vector<T> kEmpty;
    return impl_ ? impl_->grad : kEmpty;
  }

  void zero_grad() {
    if (impl_ && !impl_->grad.empty())
      std::fill(impl_->grad.begin(), impl_->grad.end(), T(0));
  }

  void accumulate_grad(const T* g) {
    auto& gb = grad_buffer();
    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
  }

  void accumulate_grad(const std::vector<T>& g) { accumulate_grad(g.data()); }

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  bool all_finite() const {
    for (const T& v : impl_->data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> data;
    std::vector<T> grad;  // empty until a gradient is accumulated
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

template <class T>
class Tape;

template <class T>
inline Tape<T>*& active_tape() {
  thread_local Tape<T>* tape = nullptr;
  return tape;
}

// Records primitive applications in execution order. Execution order is a
// topological order by construction, so backward is a single reverse sweep
// that visits each node exactly once.
template <class T>
class Tape {
 public:
  Tape() : prev_(active_tape<T>()) { active_tape<T>() = this; }
  ~Tape() { active_tape<T>() = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(std::function<void()> backward_fn) {
    nodes_.push_back(std::move(backward_fn));
  }

  size_t size() const { return nodes_.size(); }

  void run_backward(Tensor<T> output) {
    check(output.defined() && output.numel() == 1,
          "backward: output must be a scalar tensor");
    check(output.requires_grad(),
          "backward: output was not produced under an active tape");
    check(!consumed_, "backward: tape already consumed");
    consumed_ = true;
    output.grad_buffer()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  std::vector<std::function<void()>> nodes_;
  Tape<T>* prev_ = nullptr;
  bool consumed_ = false;
};

template <class T>
inline void backward(const Tensor<T>& output) {
  Tape<T>* tape = active_tape<T>();
  check(tape != nullptr, "backward: no active tape");
  tape->run_backward(output);
}

namespace detail {

template <class T>
inline bool tracked(std::initializer_list<const Tensor<T>*> inputs) {
  if (!active_tape<T>()) return false;
  for (const Tensor<T>* t : inputs)
    if (t->defined() && t->requires_grad()) return true;
  return false;
}

template <class T, class Fn>
inline void record_op(Tensor<T>& out, Fn&& backward_fn) {
  out.set_requires_grad(true);
  active_tape<T>()->record(std::forward<Fn>(backward_fn));
}

}  // namespace detail

}  // namespace cadb
