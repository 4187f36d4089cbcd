#pragma once

#include <cstdint>
#include <vector>

#include "nmt/tensor.hpp"

namespace nmt::ad {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Moment estimates for every parameter of one store, in store order.
template <typename T>
class Adam {
 public:
  Adam(const ParameterStore<T>& params, AdamOptions options);

  const AdamOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }
  std::uint64_t step_count() const { return t_; }
  const std::vector<T>& first_moment(std::size_t i) const { return m_[i]; }
  const std::vector<T>& second_moment(std::size_t i) const { return v_[i]; }

  // Bias-corrected update from the gradients currently held by the store.
  // Throws kNumeric naming the parameter if a gradient is NaN or Inf.
  void step(ParameterStore<T>& params);

 private:
  AdamOptions options_;
  std::uint64_t t_ = 0;
  std::vector<std::vector<T>> m_;
  std::vector<std::vector<T>> v_;
};

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace nmt::ad
