#include "pat/ops.hpp"

#include <cmath>
#include <initializer_list>

#include "pat/kernels.hpp"

namespace pat {
namespace {

template <typename S>
bool wants_grad(std::initializer_list<const Tensor<S>*> inputs) {
  if (!Tape<S>::active()) return false;
  for (const auto* t : inputs)
    if (t->on_grad_path()) return true;
  return false;
}

// Marks the output, allocates grad buffers for the output and for every
// input already on the path, so reverse steps can accumulate blindly.
template <typename S>
void prepare_record(Tensor<S>& out,
                    std::initializer_list<const Tensor<S>*> inputs) {
  out.mark_grad_path();
  out.ensure_grad_storage();
  for (const auto* t : inputs)
    if (t->on_grad_path()) const_cast<Tensor<S>*>(t)->ensure_grad_storage();
}

template <typename S>
void check_2d(const Tensor<S>& t, const char* what) {
  if (t.rank() != 2)
    throw DimensionError(std::string(what) + " requires a 2-D tensor, got " +
                         shape_str(t.shape()));
}

template <typename S>
void check_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                      const char* what) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(what) + " shape mismatch: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  if (a.extent(1) != b.extent(0))
    throw DimensionError("matmul inner extents differ: " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.extent(0), k = a.extent(1), n = b.extent(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  kernels::gemm_nn(m, k, n, a.data(), b.data(), out.data(), false);
  if (wants_grad<S>({&a, &b})) {
    Tensor<S> mut_out = out;
    prepare_record(mut_out, {&a, &b});
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    Tape<S>::active()->record([as, bs, os, m, k, n]() {
      if (!as->grad.empty())
        kernels::gemm_nt(m, n, k, os->grad.data(), bs->data.data(),
                         as->grad.data(), true);
      if (!bs->grad.empty())
        kernels::gemm_tn(k, m, n, as->data.data(), os->grad.data(),
                         bs->grad.data(), true);
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  check_2d(a, "transpose");
  const int m = a.extent(0), n = a.extent(1);
  Tensor<S> out = Tensor<S>::zeros({n, m});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  if (wants_grad<S>({&a})) {
    prepare_record(out, {&a});
    auto as = a.storage(), os = out.storage();
    Tape<S>::active()->record([as, os, m, n]() {
      if (as->grad.empty()) return;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
          as->grad[static_cast<std::size_t>(i) * n + j] +=
              os->grad[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> softmax_rows(const Tensor<S>& x) {
  check_2d(x, "softmax_rows");
  const int m = x.extent(0), n = x.extent(1);
  Tensor<S> out = Tensor<S>::zeros({m, n});
  kernels::softmax_rows(m, n, x.data(), out.data());
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, m, n]() {
      if (xs->grad.empty()) return;
      for (int i = 0; i < m; ++i) {
        const S* s = os->data.data() + static_cast<std::size_t>(i) * n;
        const S* gy = os->grad.data() + static_cast<std::size_t>(i) * n;
        S* gx = xs->grad.data() + static_cast<std::size_t>(i) * n;
        S dot = S(0);
        for (int j = 0; j < n; ++j) dot += gy[j] * s[j];
        for (int j = 0; j < n; ++j) gx[j] += s[j] * (gy[j] - dot);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, S eps) {
  if (x.rank() < 1)
    throw DimensionError("layer_norm requires rank >= 1, got " +
                         shape_str(x.shape()));
  const int d = x.extent(x.rank() - 1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d})
    throw DimensionError("layer_norm gamma/beta must be [" +
                         std::to_string(d) + "], got " +
                         shape_str(gamma.shape()) + " and " +
                         shape_str(beta.shape()));
  if (eps <= S(0)) throw ContractError("layer_norm eps must be positive");
  const int rows = static_cast<int>(x.size() / d);
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (int r = 0; r < rows; ++r) {
    const S* xp = x.data() + static_cast<std::size_t>(r) * d;
    S* yp = out.data() + static_cast<std::size_t>(r) * d;
    S mu = S(0);
    for (int j = 0; j < d; ++j) mu += xp[j];
    mu /= S(d);
    S var = S(0);
    for (int j = 0; j < d; ++j) var += (xp[j] - mu) * (xp[j] - mu);
    var /= S(d);
    S inv = S(1) / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j)
      yp[j] = gamma.at(j) * ((xp[j] - mu) * inv) + beta.at(j);
  }
  if (wants_grad<S>({&x, &gamma, &beta})) {
    prepare_record(out, {&x, &gamma, &beta});
    auto xs = x.storage(), gs = gamma.storage(), bs = beta.storage(),
         os = out.storage();
    Tape<S>::active()->record([xs, gs, bs, os, rows, d, eps]() {
      for (int r = 0; r < rows; ++r) {
        const S* xp = xs->data.data() + static_cast<std::size_t>(r) * d;
        const S* gy = os->grad.data() + static_cast<std::size_t>(r) * d;
        S mu = S(0);
        for (int j = 0; j < d; ++j) mu += xp[j];
        mu /= S(d);
        S var = S(0);
        for (int j = 0; j < d; ++j) var += (xp[j] - mu) * (xp[j] - mu);
        var /= S(d);
        S inv = S(1) / std::sqrt(var + eps);
        if (!gs->grad.empty() || !bs->grad.empty()) {
          for (int j = 0; j < d; ++j) {
            if (!gs->grad.empty())
              gs->grad[j] += gy[j] * ((xp[j] - mu) * inv);
            if (!bs->grad.empty()) bs->grad[j] += gy[j];
          }
        }
        if (!xs->grad.empty()) {
          // dxhat = gy * gamma; then the standard three-term reduction.
          S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
          for (int j = 0; j < d; ++j) {
            S dxhat = gy[j] * gs->data[j];
            S xhat = (xp[j] - mu) * inv;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          S* gx = xs->grad.data() + static_cast<std::size_t>(r) * d;
          for (int j = 0; j < d; ++j) {
            S dxhat = gy[j] * gs->data[j];
            S xhat = (xp[j] - mu) * inv;
            gx[j] += inv * (dxhat - sum_dxhat / S(d) -
                            xhat * sum_dxhat_xhat / S(d));
          }
        }
      }
    });
  }
  return out;
}

namespace {

// Shared body for the same-shape elementwise pair ops.
enum class PairKind { Add, Sub, Mul };

template <typename S>
Tensor<S> pairwise(const Tensor<S>& a, const Tensor<S>& b, PairKind kind,
                   const char* what) {
  check_same_shape(a, b, what);
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  const std::size_t n = a.values().size();
  for (std::size_t i = 0; i < n; ++i) {
    switch (kind) {
      case PairKind::Add: out.at(static_cast<int>(i)) = a.data()[i] + b.data()[i]; break;
      case PairKind::Sub: out.at(static_cast<int>(i)) = a.data()[i] - b.data()[i]; break;
      case PairKind::Mul: out.at(static_cast<int>(i)) = a.data()[i] * b.data()[i]; break;
    }
  }
  if (wants_grad<S>({&a, &b})) {
    prepare_record(out, {&a, &b});
    auto as = a.storage(), bs = b.storage(), os = out.storage();
    Tape<S>::active()->record([as, bs, os, n, kind]() {
      for (std::size_t i = 0; i < n; ++i) {
        S gy = os->grad[i];
        switch (kind) {
          case PairKind::Add:
            if (!as->grad.empty()) as->grad[i] += gy;
            if (!bs->grad.empty()) bs->grad[i] += gy;
            break;
          case PairKind::Sub:
            if (!as->grad.empty()) as->grad[i] += gy;
            if (!bs->grad.empty()) bs->grad[i] -= gy;
            break;
          case PairKind::Mul:
            if (!as->grad.empty()) as->grad[i] += gy * bs->data[i];
            if (!bs->grad.empty()) bs->grad[i] += gy * as->data[i];
            break;
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return pairwise(a, b, PairKind::Add, "add");
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return pairwise(a, b, PairKind::Sub, "sub");
}

template <typename S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return pairwise(a, b, PairKind::Mul, "mul");
}

template <typename S>
Tensor<S> mul_scalar(const Tensor<S>& a, S c) {
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < a.values().size(); ++i)
    out.data()[i] = a.data()[i] * c;
  if (wants_grad<S>({&a})) {
    prepare_record(out, {&a});
    auto as = a.storage(), os = out.storage();
    Tape<S>::active()->record([as, os, c]() {
      if (as->grad.empty()) return;
      for (std::size_t i = 0; i < as->grad.size(); ++i)
        as->grad[i] += os->grad[i] * c;
    });
  }
  return out;
}

template <typename S>
Tensor<S> div_scalar(const Tensor<S>& a, S c) {
  if (c == S(0)) throw ContractError("div_scalar by zero");
  Tensor<S> out = Tensor<S>::zeros(a.shape());
  for (std::size_t i = 0; i < a.values().size(); ++i)
    out.data()[i] = a.data()[i] / c;
  if (wants_grad<S>({&a})) {
    prepare_record(out, {&a});
    auto as = a.storage(), os = out.storage();
    Tape<S>::active()->record([as, os, c]() {
      if (as->grad.empty()) return;
      for (std::size_t i = 0; i < as->grad.size(); ++i)
        as->grad[i] += os->grad[i] / c;
    });
  }
  return out;
}

template <typename S>
Tensor<S> add_rowvec(const Tensor<S>& x, const Tensor<S>& b) {
  check_2d(x, "add_rowvec");
  const int n = x.extent(0), d = x.extent(1);
  if (b.shape() != Shape{d})
    throw DimensionError("add_rowvec needs a [" + std::to_string(d) +
                         "] vector, got " + shape_str(b.shape()));
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + b.at(j);
  if (wants_grad<S>({&x, &b})) {
    prepare_record(out, {&x, &b});
    auto xs = x.storage(), bs = b.storage(), os = out.storage();
    Tape<S>::active()->record([xs, bs, os, n, d]() {
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) {
          S gy = os->grad[static_cast<std::size_t>(i) * d + j];
          if (!xs->grad.empty())
            xs->grad[static_cast<std::size_t>(i) * d + j] += gy;
          if (!bs->grad.empty()) bs->grad[j] += gy;
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> relu(const Tensor<S>& x) {
  Tensor<S> out = Tensor<S>::zeros(x.shape());
  for (std::size_t i = 0; i < x.values().size(); ++i)
    out.data()[i] = x.data()[i] > S(0) ? x.data()[i] : S(0);
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os]() {
      if (xs->grad.empty()) return;
      for (std::size_t i = 0; i < xs->grad.size(); ++i)
        if (xs->data[i] > S(0)) xs->grad[i] += os->grad[i];
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_last_axis(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("concat_last_axis of nothing");
  const int rank = parts[0].rank();
  Shape lead(parts[0].shape().begin(), parts[0].shape().end() - 1);
  int total_last = 0;
  for (const auto& p : parts) {
    if (p.rank() != rank ||
        !std::equal(lead.begin(), lead.end(), p.shape().begin()))
      throw DimensionError("concat_last_axis leading extents differ: " +
                           shape_str(parts[0].shape()) + " vs " +
                           shape_str(p.shape()));
    total_last += p.extent(rank - 1);
  }
  Shape out_shape = lead;
  out_shape.push_back(total_last);
  const std::int64_t rows = numel(lead);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  int offset = 0;
  for (const auto& p : parts) {
    const int w = p.extent(rank - 1);
    for (std::int64_t r = 0; r < rows; ++r)
      for (int j = 0; j < w; ++j)
        out.data()[r * total_last + offset + j] = p.data()[r * w + j];
    offset += w;
  }
  bool any = false;
  for (const auto& p : parts) any = any || p.on_grad_path();
  if (Tape<S>::active() && any) {
    out.mark_grad_path();
    out.ensure_grad_storage();
    std::vector<std::shared_ptr<TensorStorage<S>>> srcs;
    std::vector<int> widths;
    for (auto& p : parts) {
      if (p.on_grad_path()) const_cast<Tensor<S>&>(p).ensure_grad_storage();
      srcs.push_back(p.storage());
      widths.push_back(p.extent(rank - 1));
    }
    auto os = out.storage();
    Tape<S>::active()->record([srcs, widths, os, rows, total_last]() {
      int off = 0;
      for (std::size_t k = 0; k < srcs.size(); ++k) {
        const int w = widths[k];
        if (!srcs[k]->grad.empty())
          for (std::int64_t r = 0; r < rows; ++r)
            for (int j = 0; j < w; ++j)
              srcs[k]->grad[r * w + j] += os->grad[r * total_last + off + j];
        off += w;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> concat_last_axis(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_last_axis<S>({a, b});
}

template <typename S>
Tensor<S> mean_over_axis(const Tensor<S>& x, int axis) {
  check_2d(x, "mean_over_axis");
  if (axis != 0 && axis != 1)
    throw ContractError("mean_over_axis axis must be 0 or 1");
  const int n = x.extent(0), d = x.extent(1);
  const int out_len = axis == 0 ? d : n;
  const int reduce = axis == 0 ? n : d;
  Tensor<S> out = Tensor<S>::zeros({out_len});
  if (axis == 0) {
    for (int j = 0; j < d; ++j) {
      S t = S(0);
      for (int i = 0; i < n; ++i) t += x.at(i, j);
      out.at(j) = t / S(n);
    }
  } else {
    for (int i = 0; i < n; ++i) {
      S t = S(0);
      for (int j = 0; j < d; ++j) t += x.at(i, j);
      out.at(i) = t / S(d);
    }
  }
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, n, d, axis, reduce]() {
      if (xs->grad.empty()) return;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j)
          xs->grad[static_cast<std::size_t>(i) * d + j] +=
              os->grad[axis == 0 ? j : i] / S(reduce);
    });
  }
  return out;
}

namespace {

template <typename S>
Tensor<S> reduce_all(const Tensor<S>& x, bool take_mean) {
  S t = S(0);
  for (S v : x.values()) t += v;
  const S denom = take_mean ? S(x.size()) : S(1);
  Tensor<S> out = Tensor<S>::scalar(t / denom);
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, denom]() {
      if (xs->grad.empty()) return;
      for (std::size_t i = 0; i < xs->grad.size(); ++i)
        xs->grad[i] += os->grad[0] / denom;
    });
  }
  return out;
}

}  // namespace

template <typename S>
Tensor<S> sum_all(const Tensor<S>& x) {
  return reduce_all(x, false);
}

template <typename S>
Tensor<S> mean_all(const Tensor<S>& x) {
  return reduce_all(x, true);
}

template <typename S>
Tensor<S> l2_normalize(const Tensor<S>& v) {
  S q = S(0);
  for (S e : v.values()) q += e * e;
  if (q == S(0))
    throw DegenerateInputError("l2_normalize of a zero-norm vector");
  const S norm = std::sqrt(q);
  Tensor<S> out = Tensor<S>::zeros(v.shape());
  for (std::size_t i = 0; i < v.values().size(); ++i)
    out.data()[i] = v.data()[i] / norm;
  if (wants_grad<S>({&v})) {
    prepare_record(out, {&v});
    auto vs = v.storage(), os = out.storage();
    Tape<S>::active()->record([vs, os, norm]() {
      if (vs->grad.empty()) return;
      S dot = S(0);
      for (std::size_t i = 0; i < os->data.size(); ++i)
        dot += os->grad[i] * os->data[i];
      for (std::size_t i = 0; i < vs->grad.size(); ++i)
        vs->grad[i] += (os->grad[i] - os->data[i] * dot) / norm;
    });
  }
  return out;
}

template <typename S>
Tensor<S> cosine_similarity(const Tensor<S>& u, const Tensor<S>& v) {
  check_same_shape(u, v, "cosine_similarity");
  S qu = S(0), qv = S(0), s = S(0);
  for (std::size_t i = 0; i < u.values().size(); ++i) {
    qu += u.data()[i] * u.data()[i];
    qv += v.data()[i] * v.data()[i];
    s += u.data()[i] * v.data()[i];
  }
  if (qu == S(0) || qv == S(0))
    throw DegenerateInputError("cosine_similarity with a zero-norm vector");
  const S denom = std::sqrt(qu * qv);
  const S c = s / denom;
  Tensor<S> out = Tensor<S>::scalar(c);
  if (wants_grad<S>({&u, &v})) {
    prepare_record(out, {&u, &v});
    auto us = u.storage(), vs = v.storage(), os = out.storage();
    Tape<S>::active()->record([us, vs, os, qu, qv, denom, c]() {
      const S gy = os->grad[0];
      for (std::size_t i = 0; i < us->data.size(); ++i) {
        if (!us->grad.empty())
          us->grad[i] += gy * (vs->data[i] / denom - c * us->data[i] / qu);
        if (!vs->grad.empty())
          vs->grad[i] += gy * (us->data[i] / denom - c * vs->data[i] / qv);
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> row(const Tensor<S>& x, int i) {
  check_2d(x, "row");
  if (i < 0 || i >= x.extent(0))
    throw DimensionError("row index " + std::to_string(i) +
                         " out of range for " + shape_str(x.shape()));
  const int d = x.extent(1);
  Tensor<S> out = Tensor<S>::zeros({d});
  for (int j = 0; j < d; ++j) out.at(j) = x.at(i, j);
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, i, d]() {
      if (xs->grad.empty()) return;
      for (int j = 0; j < d; ++j)
        xs->grad[static_cast<std::size_t>(i) * d + j] += os->grad[j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> cols(const Tensor<S>& x, int j0, int width) {
  check_2d(x, "cols");
  if (j0 < 0 || width <= 0 || j0 + width > x.extent(1))
    throw DimensionError("cols [" + std::to_string(j0) + "," +
                         std::to_string(j0 + width) + ") out of range for " +
                         shape_str(x.shape()));
  const int n = x.extent(0), d = x.extent(1);
  Tensor<S> out = Tensor<S>::zeros({n, width});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < width; ++j) out.at(i, j) = x.at(i, j0 + j);
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, n, d, j0, width]() {
      if (xs->grad.empty()) return;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < width; ++j)
          xs->grad[static_cast<std::size_t>(i) * d + j0 + j] +=
              os->grad[static_cast<std::size_t>(i) * width + j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> stack(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ContractError("stack of nothing");
  const Shape& inner = parts[0].shape();
  for (const auto& p : parts)
    if (p.shape() != inner)
      throw DimensionError("stack of mismatched shapes: " + shape_str(inner) +
                           " vs " + shape_str(p.shape()));
  Shape out_shape;
  out_shape.push_back(static_cast<int>(parts.size()));
  out_shape.insert(out_shape.end(), inner.begin(), inner.end());
  const std::int64_t chunk = numel(inner);
  Tensor<S> out = Tensor<S>::zeros(out_shape);
  for (std::size_t k = 0; k < parts.size(); ++k)
    for (std::int64_t i = 0; i < chunk; ++i)
      out.data()[static_cast<std::int64_t>(k) * chunk + i] =
          parts[k].data()[i];
  bool any = false;
  for (const auto& p : parts) any = any || p.on_grad_path();
  if (Tape<S>::active() && any) {
    out.mark_grad_path();
    out.ensure_grad_storage();
    std::vector<std::shared_ptr<TensorStorage<S>>> srcs;
    for (auto& p : parts) {
      if (p.on_grad_path()) const_cast<Tensor<S>&>(p).ensure_grad_storage();
      srcs.push_back(p.storage());
    }
    auto os = out.storage();
    Tape<S>::active()->record([srcs, os, chunk]() {
      for (std::size_t k = 0; k < srcs.size(); ++k) {
        if (srcs[k]->grad.empty()) continue;
        for (std::int64_t i = 0; i < chunk; ++i)
          srcs[k]->grad[i] += os->grad[static_cast<std::int64_t>(k) * chunk + i];
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> index_dim1(const Tensor<S>& x, int i) {
  if (x.rank() != 3)
    throw DimensionError("index_dim1 requires a 3-D tensor, got " +
                         shape_str(x.shape()));
  const int a = x.extent(0), b = x.extent(1), c = x.extent(2);
  if (i < 0 || i >= b)
    throw DimensionError("index_dim1 index " + std::to_string(i) +
                         " out of range for " + shape_str(x.shape()));
  Tensor<S> out = Tensor<S>::zeros({a, c});
  for (int r = 0; r < a; ++r)
    for (int j = 0; j < c; ++j) out.at(r, j) = x.at(r, i, j);
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os, a, b, c, i]() {
      if (xs->grad.empty()) return;
      for (int r = 0; r < a; ++r)
        for (int j = 0; j < c; ++j)
          xs->grad[(static_cast<std::size_t>(r) * b + i) * c + j] +=
              os->grad[static_cast<std::size_t>(r) * c + j];
    });
  }
  return out;
}

template <typename S>
Tensor<S> reshape(const Tensor<S>& x, Shape shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  Tensor<S> out = Tensor<S>::from(std::move(shape), x.values());
  if (wants_grad<S>({&x})) {
    prepare_record(out, {&x});
    auto xs = x.storage(), os = out.storage();
    Tape<S>::active()->record([xs, os]() {
      if (xs->grad.empty()) return;
      for (std::size_t i = 0; i < xs->grad.size(); ++i)
        xs->grad[i] += os->grad[i];
    });
  }
  return out;
}

#define PAT_INSTANTIATE_OPS(S)                                               \
  template Tensor<S> matmul<S>(const Tensor<S>&, const Tensor<S>&);          \
  template Tensor<S> transpose<S>(const Tensor<S>&);                         \
  template Tensor<S> softmax_rows<S>(const Tensor<S>&);                      \
  template Tensor<S> layer_norm<S>(const Tensor<S>&, const Tensor<S>&,       \
                                   const Tensor<S>&, S);                     \
  template Tensor<S> add<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> sub<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> mul<S>(const Tensor<S>&, const Tensor<S>&);             \
  template Tensor<S> mul_scalar<S>(const Tensor<S>&, S);                     \
  template Tensor<S> div_scalar<S>(const Tensor<S>&, S);                     \
  template Tensor<S> add_rowvec<S>(const Tensor<S>&, const Tensor<S>&);      \
  template Tensor<S> relu<S>(const Tensor<S>&);                              \
  template Tensor<S> concat_last_axis<S>(const std::vector<Tensor<S>>&);     \
  template Tensor<S> concat_last_axis<S>(const Tensor<S>&, const Tensor<S>&); \
  template Tensor<S> mean_over_axis<S>(const Tensor<S>&, int);               \
  template Tensor<S> sum_all<S>(const Tensor<S>&);                           \
  template Tensor<S> mean_all<S>(const Tensor<S>&);                          \
  template Tensor<S> l2_normalize<S>(const Tensor<S>&);                      \
  template Tensor<S> cosine_similarity<S>(const Tensor<S>&,                  \
                                          const Tensor<S>&);                 \
  template Tensor<S> row<S>(const Tensor<S>&, int);                          \
  template Tensor<S> cols<S>(const Tensor<S>&, int, int);                    \
  template Tensor<S> stack<S>(const std::vector<Tensor<S>>&);                \
  template Tensor<S> index_dim1<S>(const Tensor<S>&, int);                   \
  template Tensor<S> reshape<S>(const Tensor<S>&, Shape);

PAT_INSTANTIATE_OPS(float)
PAT_INSTANTIATE_OPS(double)

#undef PAT_INSTANTIATE_OPS

}  // namespace pat
