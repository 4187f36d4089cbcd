#include "nmt/tensor.hpp"

#include <cmath>
#include <sstream>

namespace nmt {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kContract: return "contract";
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kDegenerate: return "degenerate-input";
    case ErrorKind::kData: return "data";
    case ErrorKind::kCorrupt: return "corrupt-file";
    case ErrorKind::kVersion: return "version-mismatch";
    case ErrorKind::kFingerprint: return "fingerprint-mismatch";
    case ErrorKind::kShape: return "shape-mismatch";
    case ErrorKind::kInternal: return "internal";
  }
  return "unknown";
}

}  // namespace nmt

namespace nmt::ad {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

template <typename T>
Array<T>::Array(Shape s, std::vector<T> values)
    : shape(std::move(s)), data(std::move(values)) {
  if (numel(shape) != data.size()) {
    fail(ErrorKind::kDimension, "array shape " + shape_string(shape) +
                                    " does not match " +
                                    std::to_string(data.size()) + " values");
  }
}

template <typename T>
Parameter<T>& ParameterStore<T>::add(std::string name, Array<T> value) {
  require(!contains(name), "duplicate parameter name " + name);
  params_.push_back(
      std::make_unique<Parameter<T>>(std::move(name), std::move(value)));
  return *params_.back();
}

template <typename T>
Parameter<T>& ParameterStore<T>::at(std::string_view name) {
  for (auto& p : params_) {
    if (p->name == name) return *p;
  }
  fail(ErrorKind::kContract, "no parameter named " + std::string(name));
}

template <typename T>
const Parameter<T>& ParameterStore<T>::at(std::string_view name) const {
  return const_cast<ParameterStore*>(this)->at(name);
}

template <typename T>
bool ParameterStore<T>::contains(std::string_view name) const {
  for (const auto& p : params_) {
    if (p->name == name) return true;
  }
  return false;
}

template <typename T>
std::size_t ParameterStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

template <typename T>
void ParameterStore<T>::zero_grad() {
  for (auto& p : params_) std::fill(p->grad.begin(), p->grad.end(), T(0));
}

template struct Array<float>;
template struct Array<double>;
template class ParameterStore<float>;
template class ParameterStore<double>;

}  // namespace nmt::ad
