#include "imu2emg/core/tape.hpp"

#include <algorithm>

#include "imu2emg/core/errors.hpp"

namespace imu2emg {

template <typename T>
Tape<T>::Tape() {
#ifdef NDEBUG
  check_finite_ = false;
#else
  check_finite_ = true;
#endif
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor<T>& param) {
  Node& n = nodes_.emplace_back();
  n.external = &param;
  n.needs_grad = param.requires_grad();
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::constant(Tensor<T> value) {
  Node& n = nodes_.emplace_back();
  n.owned = std::move(value);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::record(Tensor<T> result, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
  const std::size_t id = nodes_.size();
  bool any_grad = false;
  bool inputs_finite = true;
  std::vector<std::size_t> ids;
  ids.reserve(inputs.size());
  for (const auto& in : inputs) {
    if (in.tape() != this) throw ContractError("op input recorded on a different tape");
    if (in.id() >= id) throw ContractError("op input does not precede its output");
    ids.push_back(in.id());
    any_grad = any_grad || nodes_[in.id()].needs_grad;
    if (check_finite_) inputs_finite = inputs_finite && value(in.id()).all_finite();
  }
  if (check_finite_ && inputs_finite && !result.all_finite())
    throw Error("non-finite values produced from finite inputs (node " + std::to_string(id) + ")");
  Node& n = nodes_.emplace_back();
  n.owned = std::move(result);
  n.needs_grad = any_grad;
  n.inputs = std::move(ids);
  if (any_grad) n.backward = std::move(fn);
  return Var<T>(this, id);
}

template <typename T>
const Tensor<T>& Tape<T>::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

template <typename T>
std::span<T> Tape<T>::grad(const Var<T>& v) {
  Node& n = nodes_[v.id()];
  if (n.grad.empty()) n.grad.assign(value(v.id()).size(), T{0});
  return n.grad;
}

template <typename T>
void Tape<T>::backward(const Var<T>& loss) {
  if (loss.tape() != this) throw ContractError("loss was recorded on a different tape");
  if (value(loss.id()).size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + shape_str(value(loss.id()).shape()));
  backward_visits_ = 0;
  grad(loss)[0] += T{1};
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) {
      n.backward(*this, Var<T>(this, i));
      ++backward_visits_;
    }
  }
  for (auto& n : nodes_) {
    if (n.external == nullptr || !n.external->requires_grad()) continue;
    auto dst = n.external->ensure_grad();
    if (n.grad.empty()) continue;
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace imu2emg
