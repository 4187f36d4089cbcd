#pragma once

#include <cmath>

#include "nmt/rng.hpp"
#include "nmt/tensor.hpp"

namespace nmt::models::detail {

template <typename T>
ad::Array<T> xavier(ad::Shape shape, Rng& rng) {
  ad::Array<T> a(shape);
  const double fan_in = static_cast<double>(shape.front());
  const double fan_out = static_cast<double>(shape.back());
  const double limit = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& x : a.data) x = static_cast<T>(rng.uniform(-limit, limit));
  return a;
}

template <typename T>
ad::Array<T> uniform(ad::Shape shape, double limit, Rng& rng) {
  ad::Array<T> a(shape);
  for (auto& x : a.data) x = static_cast<T>(rng.uniform(-limit, limit));
  return a;
}

template <typename T>
ad::Array<T> gaussian(ad::Shape shape, double stddev, Rng& rng) {
  ad::Array<T> a(shape);
  for (auto& x : a.data) x = static_cast<T>(stddev * rng.normal());
  return a;
}

template <typename T>
ad::Array<T> filled(ad::Shape shape, T value) {
  ad::Array<T> a(shape);
  std::fill(a.data.begin(), a.data.end(), value);
  return a;
}

// Ids of column t of a row-major [rows, cols] matrix.
inline std::vector<int> column(std::span<const int> ids, std::size_t rows, std::size_t cols,
                               std::size_t t) {
  std::vector<int> out(rows);
  for (std::size_t r = 0; r < rows; ++r) out[r] = ids[r * cols + t];
  return out;
}

}  // namespace nmt::models::detail
