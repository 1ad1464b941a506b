#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pat/errors.hpp"

namespace pat {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename S>
struct TensorStorage {
  Shape shape;
  std::vector<S> data;   // row-major
  std::vector<S> grad;   // empty until a backward pass needs it
  bool requires_grad = false;
  bool grad_path = false;  // requires_grad or produced by a recorded op
};

// Dense row-major tensor. Copies share the underlying storage, which is
// what lets tape closures see gradients accumulate.
template <typename S>
class Tensor {
 public:
  using Storage = TensorStorage<S>;

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, S value);
  static Tensor from(Shape shape, std::vector<S> values);
  static Tensor scalar(S value);

  bool valid() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int extent(int axis) const { return d_->shape[axis]; }
  std::int64_t size() const { return static_cast<std::int64_t>(d_->data.size()); }

  std::vector<S>& values() { return d_->data; }
  const std::vector<S>& values() const { return d_->data; }
  S* data() { return d_->data.data(); }
  const S* data() const { return d_->data.data(); }

  S& at(int i) { return d_->data[i]; }
  S at(int i) const { return d_->data[i]; }
  S& at(int i, int j) { return d_->data[static_cast<std::int64_t>(i) * d_->shape[1] + j]; }
  S at(int i, int j) const { return d_->data[static_cast<std::int64_t>(i) * d_->shape[1] + j]; }
  S& at(int i, int j, int k) {
    return d_->data[(static_cast<std::int64_t>(i) * d_->shape[1] + j) * d_->shape[2] + k];
  }
  S at(int i, int j, int k) const {
    return d_->data[(static_cast<std::int64_t>(i) * d_->shape[1] + j) * d_->shape[2] + k];
  }

  // Scalar payload; ContractError when the tensor is not a scalar.
  S value() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool flag);
  bool on_grad_path() const { return d_ && d_->grad_path; }

  // Internal hooks, public so tests can register custom tape ops.
  void mark_grad_path() { d_->grad_path = true; }
  void ensure_grad_storage();

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  std::vector<S>& grad();              // allocates zeros on first touch
  const std::vector<S>& grad() const;  // ContractError when absent
  void zero_grad();

  std::shared_ptr<Storage> storage() const { return d_; }
  static Tensor adopt(std::shared_ptr<Storage> s) { return Tensor(std::move(s)); }

 private:
  explicit Tensor(std::shared_ptr<Storage> d) : d_(std::move(d)) {}
  std::shared_ptr<Storage> d_;
};

// Reverse-mode record of executed operations. Ops append themselves in
// execution order (a topological order by construction); backward() walks
// the record exactly once in reverse and then clears it. One record is
// single-threaded; distinct records on distinct tensors may coexist on
// different threads because the active record is thread-local.
template <typename S>
class Tape {
 public:
  Tape() : prev_(active_) { active_ = this; }
  ~Tape() { active_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active() { return active_; }

  void record(std::function<void()> backward_step) {
    steps_.push_back(std::move(backward_step));
  }

  std::size_t size() const { return steps_.size(); }

  // Seeds d(loss)/d(loss) = 1 and propagates: every tensor on the grad
  // path reachable from the loss receives its full gradient, accumulating
  // additively across uses.
  void backward(const Tensor<S>& loss);

 private:
  std::vector<std::function<void()>> steps_;
  Tape* prev_ = nullptr;
  static thread_local Tape* active_;
};

template <typename S>
thread_local Tape<S>* Tape<S>::active_ = nullptr;

// Convenience: backward on the currently active tape.
template <typename S>
void backward(const Tensor<S>& loss) {
  auto* tape = Tape<S>::active();
  if (!tape) throw ContractError("backward called with no active tape");
  tape->backward(loss);
}

}  // namespace pat
