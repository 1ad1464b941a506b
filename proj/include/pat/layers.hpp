#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pat/ops.hpp"
#include "pat/rng.hpp"
#include "pat/tensor.hpp"

namespace pat {

template <typename S>
using NamedTensors = std::vector<std::pair<std::string, Tensor<S>>>;

// Uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)] from the seeded stream.
template <typename S>
Tensor<S> init_uniform(Shape shape, int fan_in, Rng& rng);

// Projection weights for multi-head attention. Per-head slices are
// contiguous columns: head h owns columns [h*d_k, (h+1)*d_k).
template <typename S>
struct AttentionParams {
  Tensor<S> w_q;  // [d, d_k*heads]
  Tensor<S> w_k;  // [d, d_k*heads]
  Tensor<S> w_v;  // [d, d_v*heads]
  Tensor<S> w_o;  // [d_v*heads, d]
  int heads = 1;

  static AttentionParams init(int d, int heads, Rng& rng);
  void collect(const std::string& prefix, NamedTensors<S>& out) const;
};

template <typename S>
struct AttentionResult {
  Tensor<S> output;   // [nq, d]
  Tensor<S> weights;  // [heads, nq, nk], each row nonnegative, sums to 1
};

// Scaled dot-product attention per head, softmax over keys, heads
// concatenated and projected by w_o. Weights are returned so callers can
// turn them into part masks.
template <typename S>
AttentionResult<S> multi_head_attention(const Tensor<S>& queries,
                                        const Tensor<S>& keys,
                                        const Tensor<S>& values,
                                        const AttentionParams<S>& params);

template <typename S>
struct FfnParams {
  Tensor<S> w1;  // [d, d_ff]
  Tensor<S> b1;  // [d_ff]
  Tensor<S> w2;  // [d_ff, d]
  Tensor<S> b2;  // [d]

  static FfnParams init(int d, int d_ff, Rng& rng);
  void collect(const std::string& prefix, NamedTensors<S>& out) const;
};

// Per row: w2 * relu(w1 * x + b1) + b2.
template <typename S>
Tensor<S> ffn(const Tensor<S>& x, const FfnParams<S>& params);

template <typename S>
struct LayerNormParams {
  Tensor<S> gamma;
  Tensor<S> beta;

  static LayerNormParams init(int d);
  void collect(const std::string& prefix, NamedTensors<S>& out) const;
};

inline constexpr double kLayerNormEps = 1e-5;

// Post-norm residual: layer_norm(x + sublayer_output).
template <typename S>
Tensor<S> transformer_sublayer(const Tensor<S>& x,
                               const Tensor<S>& sublayer_output,
                               const LayerNormParams<S>& ln);

// Channel-last cross-correlation with zero padding, kernel extents odd.
// x[h,w,cin], kernel[kh,kw,cin,cout] -> [h',w',cout].
template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, int stride,
                 int pad);

}  // namespace pat
