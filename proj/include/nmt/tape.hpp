#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <unordered_map>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt::ad {

template <typename T>
class Tape;

// Handle to a node recorded on a tape. Cheap to copy; valid while the tape
// lives.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  const Shape& shape() const;
  std::size_t size() const;
  std::span<const T> value() const;
  Array<T> to_array() const;
  // Gradient after Tape::backward; empty if the node had no gradient flow.
  std::span<const T> grad() const;

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Append-only record of a forward computation. Nodes are stored in creation
// order, which is a topological order, so backward is a reverse sweep.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  struct Node {
    const char* op = "";
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  // With record=false no backward rules or gradient flags are kept, which
  // is what inference wants.
  explicit Tape(bool record = true) : record_(record) {}

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }

  Var<T> constant(Array<T> value);
  Var<T> constant(Shape shape, std::vector<T> value);
  // Leaf bound to a parameter; repeated calls return the same node.
  Var<T> parameter(Parameter<T>& param);

  // Records the result of an op. Throws kNumeric if the forward value is
  // not finite.
  Var<T> push(const char* op, Shape shape, std::vector<T> value,
              std::vector<std::size_t> inputs, BackwardFn backward);

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  // Gradient buffer of a node, allocated as zeros on first access.
  std::vector<T>& grad(std::size_t id);

  // Reverse sweep from a scalar loss. Parameter gradients are accumulated
  // into Parameter::grad.
  void backward(Var<T> loss);

 private:
  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_nodes_;
};

extern template class Var<float>;
extern template class Var<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace nmt::ad
