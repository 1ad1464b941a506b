#include "pat/layers.hpp"

#include <cmath>

#include "pat/kernels.hpp"

namespace pat {

template <typename S>
Tensor<S> init_uniform(Shape shape, int fan_in, Rng& rng) {
  Tensor<S> t = Tensor<S>::zeros(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.values().size(); ++i)
    t.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  return t;
}

template <typename S>
AttentionParams<S> AttentionParams<S>::init(int d, int heads, Rng& rng) {
  if (heads < 1 || d % heads != 0)
    throw DimensionError("attention width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) +
                         " heads");
  AttentionParams p;
  p.heads = heads;
  p.w_q = init_uniform<S>({d, d}, d, rng);
  p.w_k = init_uniform<S>({d, d}, d, rng);
  p.w_v = init_uniform<S>({d, d}, d, rng);
  p.w_o = init_uniform<S>({d, d}, d, rng);
  return p;
}

template <typename S>
void AttentionParams<S>::collect(const std::string& prefix,
                                 NamedTensors<S>& out) const {
  out.emplace_back(prefix + ".wq", w_q);
  out.emplace_back(prefix + ".wk", w_k);
  out.emplace_back(prefix + ".wv", w_v);
  out.emplace_back(prefix + ".wo", w_o);
}

template <typename S>
AttentionResult<S> multi_head_attention(const Tensor<S>& queries,
                                        const Tensor<S>& keys,
                                        const Tensor<S>& values,
                                        const AttentionParams<S>& params) {
  const int d = params.w_q.extent(0);
  if (queries.rank() != 2 || keys.rank() != 2 || values.rank() != 2 ||
      queries.extent(1) != d || keys.extent(1) != d || values.extent(1) != d)
    throw DimensionError("attention inputs must be [*, " + std::to_string(d) +
                         "], got " + shape_str(queries.shape()) + ", " +
                         shape_str(keys.shape()) + ", " +
                         shape_str(values.shape()));
  if (keys.extent(0) != values.extent(0))
    throw DimensionError("attention keys/values row counts differ");
  const int heads = params.heads;
  const int d_k = params.w_q.extent(1) / heads;
  const int d_v = params.w_v.extent(1) / heads;

  Tensor<S> q_all = matmul(queries, params.w_q);
  Tensor<S> k_all = matmul(keys, params.w_k);
  Tensor<S> v_all = matmul(values, params.w_v);

  std::vector<Tensor<S>> head_outputs;
  std::vector<Tensor<S>> head_weights;
  const S scale = S(1) / static_cast<S>(std::sqrt(static_cast<double>(d_k)));
  for (int h = 0; h < heads; ++h) {
    Tensor<S> qh = cols(q_all, h * d_k, d_k);
    Tensor<S> kh = cols(k_all, h * d_k, d_k);
    Tensor<S> vh = cols(v_all, h * d_v, d_v);
    Tensor<S> logits = mul_scalar(matmul(qh, transpose(kh)), scale);
    Tensor<S> weights = softmax_rows(logits);
    head_weights.push_back(weights);
    head_outputs.push_back(matmul(weights, vh));
  }
  AttentionResult<S> result;
  result.output = matmul(concat_last_axis(head_outputs), params.w_o);
  result.weights = stack(head_weights);
  return result;
}

template <typename S>
FfnParams<S> FfnParams<S>::init(int d, int d_ff, Rng& rng) {
  FfnParams p;
  p.w1 = init_uniform<S>({d, d_ff}, d, rng);
  p.b1 = init_uniform<S>({d_ff}, d, rng);
  p.w2 = init_uniform<S>({d_ff, d}, d_ff, rng);
  p.b2 = init_uniform<S>({d}, d_ff, rng);
  return p;
}

template <typename S>
void FfnParams<S>::collect(const std::string& prefix,
                           NamedTensors<S>& out) const {
  out.emplace_back(prefix + ".w1", w1);
  out.emplace_back(prefix + ".b1", b1);
  out.emplace_back(prefix + ".w2", w2);
  out.emplace_back(prefix + ".b2", b2);
}

template <typename S>
Tensor<S> ffn(const Tensor<S>& x, const FfnParams<S>& params) {
  Tensor<S> hidden = relu(add_rowvec(matmul(x, params.w1), params.b1));
  return add_rowvec(matmul(hidden, params.w2), params.b2);
}

template <typename S>
LayerNormParams<S> LayerNormParams<S>::init(int d) {
  LayerNormParams p;
  p.gamma = Tensor<S>::full({d}, S(1));
  p.beta = Tensor<S>::zeros({d});
  return p;
}

template <typename S>
void LayerNormParams<S>::collect(const std::string& prefix,
                                 NamedTensors<S>& out) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

template <typename S>
Tensor<S> transformer_sublayer(const Tensor<S>& x,
                               const Tensor<S>& sublayer_output,
                               const LayerNormParams<S>& ln) {
  return layer_norm(add(x, sublayer_output), ln.gamma, ln.beta,
                    static_cast<S>(kLayerNormEps));
}

template <typename S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& kernel, int stride,
                 int pad) {
  if (x.rank() != 3)
    throw DimensionError("conv2d input must be [h,w,cin], got " +
                         shape_str(x.shape()));
  if (kernel.rank() != 4)
    throw DimensionError("conv2d kernel must be [kh,kw,cin,cout], got " +
                         shape_str(kernel.shape()));
  const int h = x.extent(0), w = x.extent(1), cin = x.extent(2);
  const int kh = kernel.extent(0), kw = kernel.extent(1);
  const int cout = kernel.extent(3);
  if (kh % 2 == 0 || kw % 2 == 0)
    throw ContractError("conv2d kernel extents must be odd, got " +
                        shape_str(kernel.shape()));
  if (kernel.extent(2) != cin)
    throw DimensionError("conv2d channel mismatch: input " +
                         shape_str(x.shape()) + ", kernel " +
                         shape_str(kernel.shape()));
  if (pad < 0) throw ContractError("conv2d pad must be >= 0");
  const int ho = kernels::conv_out_extent(h, kh, stride, pad);
  const int wo = kernels::conv_out_extent(w, kw, stride, pad);
  Tensor<S> out = Tensor<S>::zeros({ho, wo, cout});
  kernels::conv2d_fwd(h, w, cin, kh, kw, cout, stride, pad, x.data(),
                      kernel.data(), out.data());
  if (Tape<S>::active() && (x.on_grad_path() || kernel.on_grad_path())) {
    Tensor<S> mut_out = out;
    mut_out.mark_grad_path();
    mut_out.ensure_grad_storage();
    if (x.on_grad_path()) const_cast<Tensor<S>&>(x).ensure_grad_storage();
    if (kernel.on_grad_path())
      const_cast<Tensor<S>&>(kernel).ensure_grad_storage();
    auto xs = x.storage(), ks = kernel.storage(), os = out.storage();
    Tape<S>::active()->record([xs, ks, os, h, w, cin, kh, kw, cout, stride,
                               pad]() {
      if (!xs->grad.empty())
        kernels::conv2d_bwd_input(h, w, cin, kh, kw, cout, stride, pad,
                                  os->grad.data(), ks->data.data(),
                                  xs->grad.data());
      if (!ks->grad.empty())
        kernels::conv2d_bwd_kernel(h, w, cin, kh, kw, cout, stride, pad,
                                   os->grad.data(), xs->data.data(),
                                   ks->grad.data());
    });
  }
  return out;
}

#define PAT_INSTANTIATE_LAYERS(S)                                           \
  template Tensor<S> init_uniform<S>(Shape, int, Rng&);                     \
  template struct AttentionParams<S>;                                       \
  template AttentionResult<S> multi_head_attention<S>(                      \
      const Tensor<S>&, const Tensor<S>&, const Tensor<S>&,                 \
      const AttentionParams<S>&);                                           \
  template struct FfnParams<S>;                                             \
  template Tensor<S> ffn<S>(const Tensor<S>&, const FfnParams<S>&);         \
  template struct LayerNormParams<S>;                                       \
  template Tensor<S> transformer_sublayer<S>(                               \
      const Tensor<S>&, const Tensor<S>&, const LayerNormParams<S>&);       \
  template Tensor<S> conv2d<S>(const Tensor<S>&, const Tensor<S>&, int,     \
                               int);

PAT_INSTANTIATE_LAYERS(float)
PAT_INSTANTIATE_LAYERS(double)

#undef PAT_INSTANTIATE_LAYERS

}  // namespace pat
