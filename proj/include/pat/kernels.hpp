#pragma once

// Numeric inner loops shared by the tensor ops, the conv layer and the
// evaluator. Every kernel exists twice: the default entry points run the
// hot loop under OpenMP, `kernels::serial` holds the plain reference used
// by the tests and the benchmark. Parallelism is always across output
// elements and each element is reduced in a fixed serial order, so both
// flavors produce bit-identical results for any thread count.

namespace pat::kernels {

// c[m,n] = a[m,k] * b[k,n]; adds into c when accumulate is set.
template <typename S>
void gemm_nn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);

// c[m,n] = a[m,k] * b[n,k]^T
template <typename S>
void gemm_nt(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);

// c[m,n] = a[k,m]^T * b[k,n]
template <typename S>
void gemm_tn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);

// Row-wise stabilized softmax of in[m,n].
template <typename S>
void softmax_rows(int m, int n, const S* in, S* out);

// Cross-correlation, channel-last layout: x[h,w,cin], w[kh,kw,cin,cout],
// y[ho,wo,cout], zero padding. Output extents follow the floor convention
// ho = (h + 2*pad - kh) / stride + 1.
template <typename S>
void conv2d_fwd(int h, int w, int cin, int kh, int kw, int cout, int stride,
                int pad, const S* x, const S* weights, S* y);

// Adds dL/dx into gx given dL/dy.
template <typename S>
void conv2d_bwd_input(int h, int w, int cin, int kh, int kw, int cout,
                      int stride, int pad, const S* gy, const S* weights,
                      S* gx);

// Adds dL/dw into gw given dL/dy.
template <typename S>
void conv2d_bwd_kernel(int h, int w, int cin, int kh, int kw, int cout,
                       int stride, int pad, const S* gy, const S* x, S* gw);

// out[i,j] = Euclidean distance between rows a[i,:] and b[j,:].
template <typename S>
void euclidean_distances(int na, int nb, int d, const S* a, const S* b,
                         S* out);

// out[i,j] = 1 - cos(a[i,:], b[j,:]). Rows must have nonzero norm; the
// caller is expected to have checked that already.
template <typename S>
void cosine_distances(int na, int nb, int d, const S* a, const S* b, S* out);

namespace serial {

template <typename S>
void gemm_nn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);
template <typename S>
void gemm_nt(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);
template <typename S>
void gemm_tn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate);
template <typename S>
void softmax_rows(int m, int n, const S* in, S* out);
template <typename S>
void conv2d_fwd(int h, int w, int cin, int kh, int kw, int cout, int stride,
                int pad, const S* x, const S* weights, S* y);
template <typename S>
void conv2d_bwd_input(int h, int w, int cin, int kh, int kw, int cout,
                      int stride, int pad, const S* gy, const S* weights,
                      S* gx);
template <typename S>
void conv2d_bwd_kernel(int h, int w, int cin, int kh, int kw, int cout,
                       int stride, int pad, const S* gy, const S* x, S* gw);
template <typename S>
void euclidean_distances(int na, int nb, int d, const S* a, const S* b,
                         S* out);
template <typename S>
void cosine_distances(int na, int nb, int d, const S* a, const S* b, S* out);

}  // namespace serial

// Output extent of a conv/pool stage under the floor convention; throws
// ShapeError when the window does not fit.
int conv_out_extent(int in, int kernel, int stride, int pad);

}  // namespace pat::kernels
