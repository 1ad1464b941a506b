#include "pat/kernels.hpp"

#include <cmath>
#include <string>

#include "pat/errors.hpp"

// Per-element arithmetic is shared between the serial and OpenMP flavors:
// the OpenMP versions only split the outer output loop, so results are
// bit-identical. The `if` clauses keep tiny launches serial.

namespace pat::kernels {

int conv_out_extent(int in, int kernel, int stride, int pad) {
  if (stride < 1) throw ShapeError("conv stride must be >= 1");
  int span = in + 2 * pad - kernel;
  if (span < 0)
    throw ShapeError("conv window (" + std::to_string(kernel) +
                     ") larger than padded input (" +
                     std::to_string(in + 2 * pad) + ")");
  return span / stride + 1;
}

namespace {

template <typename S>
inline S dot_nn(int k, const S* arow, const S* b, int j, int n) {
  S t = S(0);
  for (int p = 0; p < k; ++p) t += arow[p] * b[p * n + j];
  return t;
}

template <typename S>
inline S dot_rows(int k, const S* u, const S* v) {
  S t = S(0);
  for (int p = 0; p < k; ++p) t += u[p] * v[p];
  return t;
}

template <typename S>
inline S dot_tn(int k, const S* a, int i, int m, const S* b, int j, int n) {
  S t = S(0);
  for (int p = 0; p < k; ++p) t += a[p * m + i] * b[p * n + j];
  return t;
}

template <typename S>
inline void softmax_row(int n, const S* in, S* out) {
  S mx = in[0];
  for (int j = 1; j < n; ++j)
    if (in[j] > mx) mx = in[j];
  S sum = S(0);
  for (int j = 0; j < n; ++j) {
    out[j] = std::exp(in[j] - mx);
    sum += out[j];
  }
  for (int j = 0; j < n; ++j) out[j] /= sum;
}

template <typename S>
inline S conv_out_at(int h, int w, int cin, int kh, int kw, int cout,
                     int stride, int pad, const S* x, const S* wgt, int oi,
                     int oj, int co) {
  S t = S(0);
  for (int ki = 0; ki < kh; ++ki) {
    int ii = oi * stride - pad + ki;
    if (ii < 0 || ii >= h) continue;
    for (int kj = 0; kj < kw; ++kj) {
      int jj = oj * stride - pad + kj;
      if (jj < 0 || jj >= w) continue;
      const S* xp = x + (static_cast<long>(ii) * w + jj) * cin;
      const S* wp = wgt + ((static_cast<long>(ki) * kw + kj) * cin) * cout + co;
      for (int ci = 0; ci < cin; ++ci) t += xp[ci] * wp[ci * cout];
    }
  }
  return t;
}

template <typename S>
inline S conv_gx_at(int h, int w, int cin, int kh, int kw, int cout,
                    int stride, int pad, const S* gy, const S* wgt, int ho,
                    int wo, int ii, int jj, int ci) {
  S t = S(0);
  for (int ki = 0; ki < kh; ++ki) {
    int num = ii + pad - ki;
    if (num < 0 || num % stride != 0) continue;
    int oi = num / stride;
    if (oi >= ho) continue;
    for (int kj = 0; kj < kw; ++kj) {
      int numj = jj + pad - kj;
      if (numj < 0 || numj % stride != 0) continue;
      int oj = numj / stride;
      if (oj >= wo) continue;
      const S* gp = gy + (static_cast<long>(oi) * wo + oj) * cout;
      const S* wp = wgt + ((static_cast<long>(ki) * kw + kj) * cin + ci) * cout;
      for (int co = 0; co < cout; ++co) t += gp[co] * wp[co];
    }
  }
  return t;
}

template <typename S>
inline S conv_gw_at(int h, int w, int cin, int cout, int stride, int pad,
                    const S* gy, const S* x, int ho, int wo, int ki, int kj,
                    int ci, int co) {
  S t = S(0);
  for (int oi = 0; oi < ho; ++oi) {
    int ii = oi * stride - pad + ki;
    if (ii < 0 || ii >= h) continue;
    for (int oj = 0; oj < wo; ++oj) {
      int jj = oj * stride - pad + kj;
      if (jj < 0 || jj >= w) continue;
      t += x[(static_cast<long>(ii) * w + jj) * cin + ci] *
           gy[(static_cast<long>(oi) * wo + oj) * cout + co];
    }
  }
  return t;
}

template <typename S>
inline S euclid_at(int d, const S* u, const S* v) {
  S t = S(0);
  for (int p = 0; p < d; ++p) {
    S diff = u[p] - v[p];
    t += diff * diff;
  }
  return std::sqrt(t);
}

}  // namespace

// ---------------------------------------------------------------- serial

namespace serial {

template <typename S>
void gemm_nn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_nn(k, a + static_cast<long>(i) * k, b, j, n);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void gemm_nt(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_rows(k, a + static_cast<long>(i) * k,
                     b + static_cast<long>(j) * k);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void gemm_tn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_tn(k, a, i, m, b, j, n);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void softmax_rows(int m, int n, const S* in, S* out) {
  for (int i = 0; i < m; ++i)
    softmax_row(n, in + static_cast<long>(i) * n,
                out + static_cast<long>(i) * n);
}

template <typename S>
void conv2d_fwd(int h, int w, int cin, int kh, int kw, int cout, int stride,
                int pad, const S* x, const S* weights, S* y) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  for (int oi = 0; oi < ho; ++oi)
    for (int oj = 0; oj < wo; ++oj)
      for (int co = 0; co < cout; ++co)
        y[(static_cast<long>(oi) * wo + oj) * cout + co] = conv_out_at(
            h, w, cin, kh, kw, cout, stride, pad, x, weights, oi, oj, co);
}

template <typename S>
void conv2d_bwd_input(int h, int w, int cin, int kh, int kw, int cout,
                      int stride, int pad, const S* gy, const S* weights,
                      S* gx) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  for (int ii = 0; ii < h; ++ii)
    for (int jj = 0; jj < w; ++jj)
      for (int ci = 0; ci < cin; ++ci)
        gx[(static_cast<long>(ii) * w + jj) * cin + ci] += conv_gx_at(
            h, w, cin, kh, kw, cout, stride, pad, gy, weights, ho, wo, ii, jj,
            ci);
}

template <typename S>
void conv2d_bwd_kernel(int h, int w, int cin, int kh, int kw, int cout,
                       int stride, int pad, const S* gy, const S* x, S* gw) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  for (int ki = 0; ki < kh; ++ki)
    for (int kj = 0; kj < kw; ++kj)
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          gw[((static_cast<long>(ki) * kw + kj) * cin + ci) * cout + co] +=
              conv_gw_at(h, w, cin, cout, stride, pad, gy, x, ho, wo, ki, kj,
                         ci, co);
}

template <typename S>
void euclidean_distances(int na, int nb, int d, const S* a, const S* b,
                         S* out) {
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out[static_cast<long>(i) * nb + j] = euclid_at(
          d, a + static_cast<long>(i) * d, b + static_cast<long>(j) * d);
}

template <typename S>
void cosine_distances(int na, int nb, int d, const S* a, const S* b, S* out) {
  for (int i = 0; i < na; ++i) {
    const S* u = a + static_cast<long>(i) * d;
    S nu = dot_rows(d, u, u);
    for (int j = 0; j < nb; ++j) {
      const S* v = b + static_cast<long>(j) * d;
      S nv = dot_rows(d, v, v);
      out[static_cast<long>(i) * nb + j] =
          S(1) - dot_rows(d, u, v) / std::sqrt(nu * nv);
    }
  }
}

}  // namespace serial

// ---------------------------------------------------------------- OpenMP

template <typename S>
void gemm_nn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
#pragma omp parallel for if (static_cast<long>(m) * n * k > 65536)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_nn(k, a + static_cast<long>(i) * k, b, j, n);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void gemm_nt(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
#pragma omp parallel for if (static_cast<long>(m) * n * k > 65536)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_rows(k, a + static_cast<long>(i) * k,
                     b + static_cast<long>(j) * k);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void gemm_tn(int m, int k, int n, const S* a, const S* b, S* c,
             bool accumulate) {
#pragma omp parallel for if (static_cast<long>(m) * n * k > 65536)
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      S t = dot_tn(k, a, i, m, b, j, n);
      c[static_cast<long>(i) * n + j] =
          accumulate ? c[static_cast<long>(i) * n + j] + t : t;
    }
}

template <typename S>
void softmax_rows(int m, int n, const S* in, S* out) {
#pragma omp parallel for if (static_cast<long>(m) * n > 16384)
  for (int i = 0; i < m; ++i)
    softmax_row(n, in + static_cast<long>(i) * n,
                out + static_cast<long>(i) * n);
}

template <typename S>
void conv2d_fwd(int h, int w, int cin, int kh, int kw, int cout, int stride,
                int pad, const S* x, const S* weights, S* y) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  long work = static_cast<long>(ho) * wo * cout * kh * kw * cin;
#pragma omp parallel for if (work > 65536)
  for (int oi = 0; oi < ho; ++oi)
    for (int oj = 0; oj < wo; ++oj)
      for (int co = 0; co < cout; ++co)
        y[(static_cast<long>(oi) * wo + oj) * cout + co] = conv_out_at(
            h, w, cin, kh, kw, cout, stride, pad, x, weights, oi, oj, co);
}

template <typename S>
void conv2d_bwd_input(int h, int w, int cin, int kh, int kw, int cout,
                      int stride, int pad, const S* gy, const S* weights,
                      S* gx) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  long work = static_cast<long>(h) * w * cin * kh * kw * cout;
#pragma omp parallel for if (work > 65536)
  for (int ii = 0; ii < h; ++ii)
    for (int jj = 0; jj < w; ++jj)
      for (int ci = 0; ci < cin; ++ci)
        gx[(static_cast<long>(ii) * w + jj) * cin + ci] += conv_gx_at(
            h, w, cin, kh, kw, cout, stride, pad, gy, weights, ho, wo, ii, jj,
            ci);
}

template <typename S>
void conv2d_bwd_kernel(int h, int w, int cin, int kh, int kw, int cout,
                       int stride, int pad, const S* gy, const S* x, S* gw) {
  int ho = conv_out_extent(h, kh, stride, pad);
  int wo = conv_out_extent(w, kw, stride, pad);
  long work = static_cast<long>(kh) * kw * cin * cout * ho * wo;
  int kslots = kh * kw * cin * cout;
#pragma omp parallel for if (work > 65536)
  for (int s = 0; s < kslots; ++s) {
    int co = s % cout;
    int ci = (s / cout) % cin;
    int kj = (s / (cout * cin)) % kw;
    int ki = s / (cout * cin * kw);
    gw[s] += conv_gw_at(h, w, cin, cout, stride, pad, gy, x, ho, wo, ki, kj,
                        ci, co);
  }
}

template <typename S>
void euclidean_distances(int na, int nb, int d, const S* a, const S* b,
                         S* out) {
#pragma omp parallel for if (static_cast<long>(na) * nb * d > 65536)
  for (int i = 0; i < na; ++i)
    for (int j = 0; j < nb; ++j)
      out[static_cast<long>(i) * nb + j] = euclid_at(
          d, a + static_cast<long>(i) * d, b + static_cast<long>(j) * d);
}

template <typename S>
void cosine_distances(int na, int nb, int d, const S* a, const S* b, S* out) {
#pragma omp parallel for if (static_cast<long>(na) * nb * d > 65536)
  for (int i = 0; i < na; ++i) {
    const S* u = a + static_cast<long>(i) * d;
    S nu = dot_rows(d, u, u);
    for (int j = 0; j < nb; ++j) {
      const S* v = b + static_cast<long>(j) * d;
      S nv = dot_rows(d, v, v);
      out[static_cast<long>(i) * nb + j] =
          S(1) - dot_rows(d, u, v) / std::sqrt(nu * nv);
    }
  }
}

#define PAT_INSTANTIATE_KERNELS(S)                                           \
  template void gemm_nn<S>(int, int, int, const S*, const S*, S*, bool);     \
  template void gemm_nt<S>(int, int, int, const S*, const S*, S*, bool);     \
  template void gemm_tn<S>(int, int, int, const S*, const S*, S*, bool);     \
  template void softmax_rows<S>(int, int, const S*, S*);                     \
  template void conv2d_fwd<S>(int, int, int, int, int, int, int, int,        \
                              const S*, const S*, S*);                       \
  template void conv2d_bwd_input<S>(int, int, int, int, int, int, int, int,  \
                                    const S*, const S*, S*);                 \
  template void conv2d_bwd_kernel<S>(int, int, int, int, int, int, int, int, \
                                     const S*, const S*, S*);                \
  template void euclidean_distances<S>(int, int, int, const S*, const S*,    \
                                       S*);                                  \
  template void cosine_distances<S>(int, int, int, const S*, const S*, S*);  \
  template void serial::gemm_nn<S>(int, int, int, const S*, const S*, S*,    \
                                   bool);                                    \
  template void serial::gemm_nt<S>(int, int, int, const S*, const S*, S*,    \
                                   bool);                                    \
  template void serial::gemm_tn<S>(int, int, int, const S*, const S*, S*,    \
                                   bool);                                    \
  template void serial::softmax_rows<S>(int, int, const S*, S*);             \
  template void serial::conv2d_fwd<S>(int, int, int, int, int, int, int,     \
                                      int, const S*, const S*, S*);          \
  template void serial::conv2d_bwd_input<S>(int, int, int, int, int, int,    \
                                            int, int, const S*, const S*,    \
                                            S*);                             \
  template void serial::conv2d_bwd_kernel<S>(int, int, int, int, int, int,   \
                                             int, int, const S*, const S*,   \
                                             S*);                            \
  template void serial::euclidean_distances<S>(int, int, int, const S*,      \
                                               const S*, S*);                \
  template void serial::cosine_distances<S>(int, int, int, const S*,         \
                                            const S*, S*);

PAT_INSTANTIATE_KERNELS(float)
PAT_INSTANTIATE_KERNELS(double)

#undef PAT_INSTANTIATE_KERNELS

}  // namespace pat::kernels
