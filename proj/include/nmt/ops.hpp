#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nmt/rng.hpp"
#include "nmt/tape.hpp"

// Differentiable operations. Every op records its backward rule on the tape
// of its inputs; all inputs of one op must live on the same tape.
namespace nmt::ad {

// [m,k] x [k,n] -> [m,n]
template <typename T>
Var<T> matmul(Var<T> a, Var<T> b);

// [B,m,k] x [B,k,n] -> [B,m,n]; with transpose_b, b is [B,n,k].
template <typename T>
Var<T> batched_matmul(Var<T> a, Var<T> b, bool transpose_b = false);

template <typename T>
Var<T> add(Var<T> a, Var<T> b);
template <typename T>
Var<T> sub(Var<T> a, Var<T> b);
template <typename T>
Var<T> mul(Var<T> a, Var<T> b);
template <typename T>
Var<T> scale(Var<T> x, T factor);

// x + y where y's shape is a trailing suffix of x's shape (bias rows,
// positional tables).
template <typename T>
Var<T> add_broadcast(Var<T> x, Var<T> y);

// x[B,S,D] + q[B,D]: q is added at every middle position.
template <typename T>
Var<T> add_per_batch(Var<T> x, Var<T> q);

template <typename T>
Var<T> tanh(Var<T> x);
template <typename T>
Var<T> sigmoid(Var<T> x);
template <typename T>
Var<T> relu(Var<T> x);

// Concatenation along the last axis; leading extents must agree.
template <typename T>
Var<T> concat(std::span<const Var<T>> parts);
template <typename T>
Var<T> concat(std::initializer_list<Var<T>> parts);

// Columns [begin, end) of the last axis.
template <typename T>
Var<T> slice_last(Var<T> x, std::size_t begin, std::size_t end);

// Stacks N tensors of shape [B,D] into [B,N,D].
template <typename T>
Var<T> stack_middle(std::span<const Var<T>> parts);

// Row gather from a [V,E] table; backward scatters into the touched rows.
template <typename T>
Var<T> embedding(Var<T> table, std::span<const int> ids);

template <typename T>
Var<T> reshape(Var<T> x, Shape shape);

// [a,b,c,d] -> [a,c,b,d]; its own inverse.
template <typename T>
Var<T> swap_axes12(Var<T> x);

// Softmax along `axis`, max-subtracted. If `allowed` is non-empty it has one
// entry per element of x and entries equal to 0 receive probability 0.
template <typename T>
Var<T> softmax(Var<T> x, std::size_t axis,
               std::span<const std::uint8_t> allowed = {});

// Mean negative log-likelihood over the positions where pad_mask is 0.
// logits is [..., V]; targets and pad_mask have one entry per row.
// Computed with log-sum-exp. Throws kDegenerate when every position is pad.
template <typename T>
Var<T> cross_entropy(Var<T> logits, std::span<const int> targets,
                     std::span<const std::uint8_t> pad_mask);

// Normalizes each row of the last axis, then applies gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gain, Var<T> bias, T eps = T(1e-5));

// Inverted dropout: kept units are scaled by 1/(1-p).
template <typename T>
Var<T> dropout(Var<T> x, double p, Rng& rng);

// Row r of the result is next[r] where keep_next[r] != 0, else prev[r].
template <typename T>
Var<T> blend_rows(std::span<const std::uint8_t> keep_next, Var<T> next,
                  Var<T> prev);

template <typename T>
Var<T> sum(Var<T> x);
template <typename T>
Var<T> mean(Var<T> x);

}  // namespace nmt::ad
