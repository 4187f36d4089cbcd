#include "nmt/adam.hpp"

#include <cmath>

namespace nmt::ad {

template <typename T>
Adam<T>::Adam(const ParameterStore<T>& params, AdamOptions options)
    : options_(options) {
  require(options.learning_rate > 0.0, "adam learning rate must be positive");
  require(options.beta1 >= 0.0 && options.beta1 < 1.0 && options.beta2 >= 0.0 &&
              options.beta2 < 1.0,
          "adam betas must lie in [0,1)");
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_.emplace_back(params[i].value.size(), T(0));
    v_.emplace_back(params[i].value.size(), T(0));
  }
}

template <typename T>
void Adam<T>::step(ParameterStore<T>& params) {
  require(params.size() == m_.size(), "adam state does not match parameters");
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const T g : params[i].grad) {
      if (!std::isfinite(g)) {
        fail(ErrorKind::kNumeric, "non-finite gradient in " + params[i].name);
      }
    }
  }
  ++t_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  const double step_size = options_.learning_rate / correction1;
  const double root_c2 = std::sqrt(correction2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    require(p.grad.size() == m_[i].size(), "adam state shape mismatch for " + p.name);
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < m.size(); ++k) {
      const double g = p.grad[k];
      m[k] = static_cast<T>(b1 * m[k] + (1.0 - b1) * g);
      v[k] = static_cast<T>(b2 * v[k] + (1.0 - b2) * g * g);
      const double denom = std::sqrt(static_cast<double>(v[k])) / root_c2 + options_.epsilon;
      p.value.data[k] = static_cast<T>(p.value.data[k] - step_size * m[k] / denom);
    }
  }
}

template <typename T>
double clip_grad_norm(ParameterStore<T>& params, double max_norm) {
  double sq = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (const T g : params[i].grad) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const T factor = static_cast<T>(max_norm / norm);
    for (std::size_t i = 0; i < params.size(); ++i) {
      for (auto& g : params[i].grad) g *= factor;
    }
  }
  return norm;
}

template class Adam<float>;
template class Adam<double>;
template double clip_grad_norm(ParameterStore<float>&, double);
template double clip_grad_norm(ParameterStore<double>&, double);

}  // namespace nmt::ad
