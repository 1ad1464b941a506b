#pragma once

#include <vector>

#include "pat/tensor.hpp"

// Differentiable tensor operations. Each op computes its forward value
// and, when a tape is active and an input sits on the gradient path,
// records the matching reverse step. With no active tape every op is a
// plain forward evaluation.

namespace pat {

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b);

template <typename S>
Tensor<S> transpose(const Tensor<S>& a);

// Stabilized softmax over the rows of a 2-D tensor.
template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x);

// Normalizes each trailing-axis vector to zero mean / unit variance, then
// applies the gamma/beta affine.
template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, S eps);

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b);
template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, S c);
template <typename S>
Tensor<S> div_scalar(const Tensor<S>& a, S c);

// x[n,d] + b[d], broadcast over rows.
template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b);

// Subgradient at 0 is 0.
template <typename S>
Tensor<S> relu(const Tensor<S>& x);

template <typename S>
Tensor<S> concat_last_axis(const std::vector<Tensor<S>>& parts);
template <typename S>
Tensor<S> concat_last_axis(const Tensor<S>& a, const Tensor<S>& b);

// Mean along one axis of a 2-D tensor: axis 0 -> [cols], axis 1 -> [rows].
template <typename S>
Tensor<S> mean_over_axis(const Tensor<S>& x, int axis);

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x);
template <typename S>
Tensor<S> mean_all(const Tensor<S>& x);

template <typename S>
Tensor<S> l2_normalize(const Tensor<S>& v);

// dot(u,v) / sqrt(dot(u,u) * dot(v,v)); the single-sqrt denominator keeps
// cos(u,u) exactly 1.
template <typename S>
Tensor<S> cosine_similarity(const Tensor<S>& u, const Tensor<S>& v);

// Row i of a 2-D tensor as a vector.
template <typename S>
Tensor<S> row(const Tensor<S>& x, int i);

// Columns [j0, j0+width) of a 2-D tensor.
template <typename S>
Tensor<S> cols(const Tensor<S>& x, int j0, int width);

// Stacks k same-shape tensors into [k, ...shape].
template <typename S>
Tensor<S> stack(const std::vector<Tensor<S>>& parts);

// x[a,b,c] -> x[:,i,:] as [a,c].
template <typename S>
Tensor<S> index_dim1(const Tensor<S>& x, int i);

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape);

}  // namespace pat
