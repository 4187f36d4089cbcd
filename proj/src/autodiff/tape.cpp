#include "nmt/tape.hpp"

#include <cmath>

namespace nmt::ad {

template <typename T>
const Shape& Var<T>::shape() const {
  return tape_->node(id_).shape;
}

template <typename T>
std::size_t Var<T>::size() const {
  return tape_->node(id_).value.size();
}

template <typename T>
std::span<const T> Var<T>::value() const {
  return tape_->node(id_).value;
}

template <typename T>
Array<T> Var<T>::to_array() const {
  const auto& n = tape_->node(id_);
  return Array<T>(n.shape, n.value);
}

template <typename T>
std::span<const T> Var<T>::grad() const {
  return tape_->node(id_).grad;
}

template <typename T>
Var<T> Tape<T>::constant(Array<T> value) {
  return constant(std::move(value.shape), std::move(value.data));
}

template <typename T>
Var<T> Tape<T>::constant(Shape shape, std::vector<T> value) {
  return push("constant", std::move(shape), std::move(value), {}, nullptr);
}

template <typename T>
Var<T> Tape<T>::parameter(Parameter<T>& param) {
  if (auto it = param_nodes_.find(&param); it != param_nodes_.end()) {
    return Var<T>(this, it->second);
  }
  Node node;
  node.op = "parameter";
  node.shape = param.value.shape;
  node.value = param.value.data;
  node.param = &param;
  node.requires_grad = record_;
  nodes_.push_back(std::move(node));
  param_nodes_.emplace(&param, nodes_.size() - 1);
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Tape<T>::push(const char* op, Shape shape, std::vector<T> value,
                     std::vector<std::size_t> inputs, BackwardFn backward) {
  if (numel(shape) != value.size()) {
    fail(ErrorKind::kInternal, std::string(op) + ": shape " +
                                   shape_string(shape) + " vs " +
                                   std::to_string(value.size()) + " values");
  }
  for (const T x : value) {
    if (!std::isfinite(x)) {
      fail(ErrorKind::kNumeric,
           std::string(op) + " produced a non-finite value");
    }
  }
  Node node;
  node.op = op;
  node.shape = std::move(shape);
  node.value = std::move(value);
  if (record_) {
    for (auto id : inputs) node.requires_grad |= nodes_[id].requires_grad;
    if (node.requires_grad) {
      node.inputs = std::move(inputs);
      node.backward = std::move(backward);
    }
  }
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
std::vector<T>& Tape<T>::grad(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var<T> loss) {
  require(record_, "backward on a tape that does not record");
  require(&loss.tape() == this, "loss does not belong to this tape");
  auto& root = nodes_[loss.id()];
  require(root.value.size() == 1,
          "backward needs a scalar loss, got shape " + shape_string(root.shape));
  for (auto& n : nodes_) n.grad.clear();
  grad(loss.id())[0] = T(1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
    if (n.param != nullptr) {
      auto& dst = n.param->grad;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

template class Var<float>;
template class Var<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace nmt::ad
