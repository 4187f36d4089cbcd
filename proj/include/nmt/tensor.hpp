#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "nmt/error.hpp"

namespace nmt::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major array. Used for parameter storage, constants and results
// read back from a tape.
template <typename T>
struct Array {
  Shape shape;
  std::vector<T> data;

  Array() = default;
  explicit Array(Shape s) : shape(std::move(s)), data(numel(shape), T(0)) {}
  Array(Shape s, std::vector<T> values);

  std::size_t size() const { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  template <typename U>
  Array<U> cast() const {
    Array<U> out;
    out.shape = shape;
    out.data.assign(data.begin(), data.end());
    return out;
  }
};

// A named, trainable array with its gradient accumulator.
template <typename T>
struct Parameter {
  std::string name;
  Array<T> value;
  std::vector<T> grad;

  Parameter(std::string n, Array<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.size(), T(0)) {}
};

// Ordered collection of parameters; order is the registration order and is
// what checkpoints and optimizers iterate over.
template <typename T>
class ParameterStore {
 public:
  Parameter<T>& add(std::string name, Array<T> value);

  Parameter<T>& at(std::string_view name);
  const Parameter<T>& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  std::size_t total_elements() const;
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad();

  // Copies values from another store with identical names and shapes.
  template <typename U>
  void copy_values_from(const ParameterStore<U>& other) {
    require(other.size() == size(), "parameter stores differ in size");
    for (std::size_t i = 0; i < size(); ++i) {
      auto& dst = *params_[i];
      const auto& src = other[i];
      require(dst.name == src.name && dst.value.shape == src.value.shape,
              "parameter mismatch at " + dst.name);
      dst.value.data.assign(src.value.data.begin(), src.value.data.end());
    }
  }

 private:
  // unique_ptr keeps Parameter addresses stable while the store grows.
  std::vector<std::unique_ptr<Parameter<T>>> params_;
};

}  // namespace nmt::ad
