#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "imu2emg/core/tensor.hpp"

namespace imu2emg {

template <typename T>
class Tape;

/// Handle to a value recorded on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t size() const { return value().size(); }
  std::size_t id() const { return id_; }
  Tape<T>* tape() const { return tape_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape<T>;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Records operations in execution order. Because a node can only reference
// nodes that already exist, the record is topologically sorted by
// construction and backward() is a single reverse sweep.
//
// Parameters enter through leaf(); their gradients are accumulated into the
// Tensor's own grad slot when backward() finishes.
template <typename T>
class Tape {
 public:
  // Called with the tape and the output Var whose gradient is being propagated.
  using BackwardFn = std::function<void(Tape&, const Var<T>&)>;

  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> leaf(Tensor<T>& param);
  Var<T> constant(Tensor<T> value);
  /// Appends an op result. `fn` is dropped when no input needs a gradient.
  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn);

  const Tensor<T>& value(std::size_t id) const;
  bool needs_grad(const Var<T>& v) const { return nodes_[v.id()].needs_grad; }
  /// Gradient buffer for `v`, zero-allocated on first access.
  std::span<T> grad(const Var<T>& v);
  bool has_grad(const Var<T>& v) const { return !nodes_[v.id()].grad.empty(); }

  /// Seeds d(loss)/d(loss) = 1 and sweeps the record in reverse. Every
  /// requires-grad leaf ends up holding its gradient (zero if unused).
  void backward(const Var<T>& loss);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<std::size_t>& inputs_of(std::size_t id) const { return nodes_[id].inputs; }
  /// Number of nodes whose backward function ran during the last backward().
  std::size_t backward_visits() const { return backward_visits_; }

  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  struct Node {
    Tensor<T> owned;
    Tensor<T>* external = nullptr;
    std::vector<T> grad;
    bool needs_grad = false;
    BackwardFn backward;
    std::vector<std::size_t> inputs;
  };

  std::deque<Node> nodes_;
  std::size_t backward_visits_ = 0;
  bool check_finite_;
};

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return tape_->value(id_);
}

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace imu2emg
