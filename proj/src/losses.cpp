#include "pat/losses.hpp"

#include <algorithm>
#include <cmath>

namespace pat {

template <typename S>
ClassifierHead<S> ClassifierHead<S>::init(int d, int num_identities,
                                          Rng& rng) {
  ClassifierHead head;
  head.bn_gamma = Tensor<S>::full({d}, S(1));
  head.bn_beta = Tensor<S>::zeros({d});
  head.weight = init_uniform<S>({d, num_identities}, d, rng);
  head.running_mean.assign(d, S(0));
  head.running_var.assign(d, S(1));
  return head;
}

template <typename S>
Tensor<S> ClassifierHead<S>::logits(const Tensor<S>& features, bool training) {
  const int d = bn_gamma.extent(0);
  if (features.rank() != 2 || features.extent(1) != d)
    throw DimensionError("classifier head expects [B," + std::to_string(d) +
                         "] features, got " + shape_str(features.shape()));
  Tensor<S> normed;
  if (training) {
    std::vector<S> mean, var;
    normed = batch_norm_train(features, bn_gamma, bn_beta, bn_eps, &mean, &var);
    for (int j = 0; j < d; ++j) {
      running_mean[j] = bn_momentum * running_mean[j] +
                        (S(1) - bn_momentum) * mean[j];
      running_var[j] =
          bn_momentum * running_var[j] + (S(1) - bn_momentum) * var[j];
    }
  } else {
    const int b = features.extent(0);
    normed = Tensor<S>::zeros({b, d});
    for (int i = 0; i < b; ++i)
      for (int j = 0; j < d; ++j)
        normed.at(i, j) = bn_gamma.at(j) *
                              ((features.at(i, j) - running_mean[j]) /
                               std::sqrt(running_var[j] + bn_eps)) +
                          bn_beta.at(j);
  }
  return matmul(normed, weight);
}

template <typename S>
void ClassifierHead<S>::collect(const std::string& prefix,
                                NamedTensors<S>& out) const {
  out.emplace_back(prefix + ".bn.gamma", bn_gamma);
  out.emplace_back(prefix + ".bn.beta", bn_beta);
  out.emplace_back(prefix + ".fc.w", weight);
}

template <typename S>
PatHeads<S> PatHeads<S>::init(int d, int num_identities, int num_parts,
                              Rng& rng) {
  PatHeads heads;
  heads.global = ClassifierHead<S>::init(d, num_identities, rng);
  heads.parts.reserve(num_parts);
  for (int i = 0; i < num_parts; ++i)
    heads.parts.push_back(ClassifierHead<S>::init(d, num_identities, rng));
  return heads;
}

template <typename S>
NamedTensors<S> PatHeads<S>::parameters() {
  NamedTensors<S> out;
  global.collect("head_g", out);
  for (std::size_t i = 0; i < parts.size(); ++i)
    parts[i].collect("head_p" + std::to_string(i), out);
  for (auto& [name, t] : out) t.set_requires_grad(true);
  return out;
}

template <typename S>
Tensor<S> batch_norm_train(const Tensor<S>& x, const Tensor<S>& gamma,
                           const Tensor<S>& beta, S eps,
                           std::vector<S>* batch_mean,
                           std::vector<S>* batch_var) {
  if (x.rank() != 2)
    throw DimensionError("batch_norm_train expects [B,d], got " +
                         shape_str(x.shape()));
  const int b = x.extent(0), d = x.extent(1);
  std::vector<S> mu(d, S(0)), var(d, S(0));
  for (int j = 0; j < d; ++j) {
    S t = S(0);
    for (int i = 0; i < b; ++i) t += x.at(i, j);
    mu[j] = t / S(b);
    S v = S(0);
    for (int i = 0; i < b; ++i) v += (x.at(i, j) - mu[j]) * (x.at(i, j) - mu[j]);
    var[j] = v / S(b);
  }
  if (batch_mean) *batch_mean = mu;
  if (batch_var) *batch_var = var;
  Tensor<S> out = Tensor<S>::zeros({b, d});
  std::vector<S> inv(d);
  for (int j = 0; j < d; ++j) inv[j] = S(1) / std::sqrt(var[j] + eps);
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < d; ++j)
      out.at(i, j) =
          gamma.at(j) * ((x.at(i, j) - mu[j]) * inv[j]) + beta.at(j);
  if (Tape<S>::active() &&
      (x.on_grad_path() || gamma.on_grad_path() || beta.on_grad_path())) {
    Tensor<S> mut_out = out;
    mut_out.mark_grad_path();
    mut_out.ensure_grad_storage();
    if (x.on_grad_path()) const_cast<Tensor<S>&>(x).ensure_grad_storage();
    if (gamma.on_grad_path())
      const_cast<Tensor<S>&>(gamma).ensure_grad_storage();
    if (beta.on_grad_path()) const_cast<Tensor<S>&>(beta).ensure_grad_storage();
    auto xs = x.storage(), gs = gamma.storage(), bs = beta.storage(),
         os = out.storage();
    Tape<S>::active()->record([xs, gs, bs, os, b, d, mu, inv]() {
      for (int j = 0; j < d; ++j) {
        S sum_dxhat = S(0), sum_dxhat_xhat = S(0);
        for (int i = 0; i < b; ++i) {
          const S gy = os->grad[static_cast<std::size_t>(i) * d + j];
          const S xhat =
              (xs->data[static_cast<std::size_t>(i) * d + j] - mu[j]) * inv[j];
          sum_dxhat += gy * gs->data[j];
          sum_dxhat_xhat += gy * gs->data[j] * xhat;
          if (!gs->grad.empty()) gs->grad[j] += gy * xhat;
          if (!bs->grad.empty()) bs->grad[j] += gy;
        }
        if (!xs->grad.empty()) {
          for (int i = 0; i < b; ++i) {
            const S gy = os->grad[static_cast<std::size_t>(i) * d + j];
            const S xhat =
                (xs->data[static_cast<std::size_t>(i) * d + j] - mu[j]) *
                inv[j];
            xs->grad[static_cast<std::size_t>(i) * d + j] +=
                inv[j] * (gy * gs->data[j] - sum_dxhat / S(b) -
                          xhat * sum_dxhat_xhat / S(b));
          }
        }
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits,
                             const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("cross_entropy_mean expects [B,C], got " +
                         shape_str(logits.shape()));
  const int b = logits.extent(0), c = logits.extent(1);
  if (static_cast<int>(labels.size()) != b)
    throw ContractError("label count " + std::to_string(labels.size()) +
                        " does not match batch " + std::to_string(b));
  for (int lab : labels)
    if (lab < 0 || lab >= c)
      throw ContractError("label " + std::to_string(lab) +
                          " outside [0," + std::to_string(c) + ")");
  // Per row: logsumexp(l) - l[label], stabilized by the row max.
  std::vector<S> softmax(static_cast<std::size_t>(b) * c);
  S total = S(0);
  for (int i = 0; i < b; ++i) {
    const S* lp = logits.data() + static_cast<std::size_t>(i) * c;
    S mx = lp[0];
    for (int j = 1; j < c; ++j) mx = std::max(mx, lp[j]);
    S sum = S(0);
    for (int j = 0; j < c; ++j) {
      softmax[static_cast<std::size_t>(i) * c + j] = std::exp(lp[j] - mx);
      sum += softmax[static_cast<std::size_t>(i) * c + j];
    }
    for (int j = 0; j < c; ++j)
      softmax[static_cast<std::size_t>(i) * c + j] /= sum;
    total += std::log(sum) + mx - lp[labels[i]];
  }
  Tensor<S> out = Tensor<S>::scalar(total / S(b));
  if (Tape<S>::active() && logits.on_grad_path()) {
    Tensor<S> mut_out = out;
    mut_out.mark_grad_path();
    mut_out.ensure_grad_storage();
    const_cast<Tensor<S>&>(logits).ensure_grad_storage();
    auto ls = logits.storage(), os = out.storage();
    auto labs = labels;
    Tape<S>::active()->record([ls, os, softmax, labs, b, c]() {
      const S gy = os->grad[0];
      for (int i = 0; i < b; ++i)
        for (int j = 0; j < c; ++j) {
          S p = softmax[static_cast<std::size_t>(i) * c + j];
          if (j == labs[i]) p -= S(1);
          ls->grad[static_cast<std::size_t>(i) * c + j] += gy * p / S(b);
        }
    });
  }
  return out;
}

template <typename S>
Tensor<S> id_classification_loss(const Tensor<S>& features,
                                 const std::vector<int>& labels,
                                 ClassifierHead<S>& head, bool training) {
  return cross_entropy_mean(head.logits(features, training), labels);
}

template <typename S>
Tensor<S> triplet_loss_batch_hard(const Tensor<S>& features,
                                  const std::vector<int>& labels, S margin) {
  if (features.rank() != 2)
    throw DimensionError("triplet loss expects [B,d], got " +
                         shape_str(features.shape()));
  const int b = features.extent(0), d = features.extent(1);
  if (static_cast<int>(labels.size()) != b)
    throw ContractError("label count does not match batch");
  if (margin < S(0)) throw ContractError("triplet margin must be >= 0");

  std::vector<S> dist(static_cast<std::size_t>(b) * b, S(0));
  for (int i = 0; i < b; ++i)
    for (int j = 0; j < b; ++j) {
      S t = S(0);
      for (int p = 0; p < d; ++p) {
        S diff = features.at(i, p) - features.at(j, p);
        t += diff * diff;
      }
      dist[static_cast<std::size_t>(i) * b + j] = std::sqrt(t);
    }

  std::vector<int> hardest_pos(b, -1), hardest_neg(b, -1);
  for (int a = 0; a < b; ++a) {
    for (int j = 0; j < b; ++j) {
      if (j == a) continue;
      const S dj = dist[static_cast<std::size_t>(a) * b + j];
      if (labels[j] == labels[a]) {
        if (hardest_pos[a] < 0 ||
            dj > dist[static_cast<std::size_t>(a) * b + hardest_pos[a]])
          hardest_pos[a] = j;
      } else {
        if (hardest_neg[a] < 0 ||
            dj < dist[static_cast<std::size_t>(a) * b + hardest_neg[a]])
          hardest_neg[a] = j;
      }
    }
    if (hardest_pos[a] < 0)
      throw SamplingError("anchor " + std::to_string(a) + " (label " +
                          std::to_string(labels[a]) +
                          ") has no positive in the batch");
    if (hardest_neg[a] < 0)
      throw SamplingError("batch holds a single identity; no negatives");
  }

  std::vector<S> hinge(b);
  S total = S(0);
  for (int a = 0; a < b; ++a) {
    const S gap = dist[static_cast<std::size_t>(a) * b + hardest_pos[a]] -
                  dist[static_cast<std::size_t>(a) * b + hardest_neg[a]];
    hinge[a] = std::max(S(0), margin + gap);
    total += hinge[a];
  }
  Tensor<S> out = Tensor<S>::scalar(total / S(b));

  if (Tape<S>::active() && features.on_grad_path()) {
    Tensor<S> mut_out = out;
    mut_out.mark_grad_path();
    mut_out.ensure_grad_storage();
    const_cast<Tensor<S>&>(features).ensure_grad_storage();
    auto fs = features.storage(), os = out.storage();
    Tape<S>::active()->record(
        [fs, os, dist, hardest_pos, hardest_neg, hinge, b, d]() {
          const S gy = os->grad[0];
          for (int a = 0; a < b; ++a) {
            if (hinge[a] <= S(0)) continue;  // hinge subgradient at 0 is 0
            const int p = hardest_pos[a], n = hardest_neg[a];
            const S dap = dist[static_cast<std::size_t>(a) * b + p];
            const S dan = dist[static_cast<std::size_t>(a) * b + n];
            const S w = gy / S(b);
            for (int j = 0; j < d; ++j) {
              const S fa = fs->data[static_cast<std::size_t>(a) * d + j];
              const S fp = fs->data[static_cast<std::size_t>(p) * d + j];
              const S fn = fs->data[static_cast<std::size_t>(n) * d + j];
              // d||fa-fp||/dfa = (fa-fp)/||fa-fp||; 0 at coincident points.
              const S uap = dap > S(0) ? (fa - fp) / dap : S(0);
              const S uan = dan > S(0) ? (fa - fn) / dan : S(0);
              fs->grad[static_cast<std::size_t>(a) * d + j] += w * (uap - uan);
              fs->grad[static_cast<std::size_t>(p) * d + j] -= w * uap;
              fs->grad[static_cast<std::size_t>(n) * d + j] += w * uan;
            }
          }
        });
  }
  return out;
}

template <typename S>
Tensor<S> diversity_loss(const Tensor<S>& part_features) {
  if (part_features.rank() != 2)
    throw DimensionError("diversity_loss expects [K,d], got " +
                         shape_str(part_features.shape()));
  const int k = part_features.extent(0);
  if (k < 2) throw ContractError("diversity_loss needs K >= 2 prototypes");
  Tensor<S> acc;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      if (i == j) continue;
      Tensor<S> c =
          cosine_similarity(row(part_features, i), row(part_features, j));
      acc = acc.valid() ? add(acc, c) : c;
    }
  return div_scalar(acc, S(k) * S(k - 1));
}

template <typename S>
Tensor<S> discriminability_loss(const Tensor<S>& part_features,
                                const std::vector<int>& labels,
                                std::vector<ClassifierHead<S>>& heads,
                                const LossWeights& weights) {
  if (part_features.rank() != 3)
    throw DimensionError("discriminability_loss expects [B,K,d], got " +
                         shape_str(part_features.shape()));
  const int k = part_features.extent(1);
  if (static_cast<int>(heads.size()) < k)
    throw ContractError("need one classifier head per prototype: have " +
                        std::to_string(heads.size()) + ", need " +
                        std::to_string(k));
  Tensor<S> sum_cls, sum_tri;
  for (int i = 0; i < k; ++i) {
    Tensor<S> part = index_dim1(part_features, i);
    Tensor<S> cls = id_classification_loss(part, labels, heads[i]);
    Tensor<S> tri = triplet_loss_batch_hard(part, labels,
                                            static_cast<S>(weights.margin));
    sum_cls = sum_cls.valid() ? add(sum_cls, cls) : cls;
    sum_tri = sum_tri.valid() ? add(sum_tri, tri) : tri;
  }
  return add(mul_scalar(sum_cls, static_cast<S>(weights.lambda_cls)),
             mul_scalar(sum_tri, static_cast<S>(weights.lambda_tri)));
}

template <typename S>
Tensor<S> encoder_loss(const Tensor<S>& global_features,
                       const std::vector<int>& labels, ClassifierHead<S>& head,
                       const LossWeights& weights) {
  Tensor<S> cls = id_classification_loss(global_features, labels, head);
  Tensor<S> tri = triplet_loss_batch_hard(global_features, labels,
                                          static_cast<S>(weights.margin));
  return add(mul_scalar(cls, static_cast<S>(weights.lambda_cls)),
             mul_scalar(tri, static_cast<S>(weights.lambda_tri)));
}

template <typename S>
LossBreakdown<S> total_loss(const std::vector<PatOutput<S>>& outputs,
                            const std::vector<int>& labels, PatHeads<S>& heads,
                            const LossWeights& weights, bool diversity_enabled,
                            bool decoder_enabled) {
  if (outputs.empty()) throw ContractError("total_loss on an empty batch");
  if (outputs.size() != labels.size())
    throw ContractError("outputs/labels size mismatch");

  std::vector<Tensor<S>> globals;
  globals.reserve(outputs.size());
  for (const auto& o : outputs) globals.push_back(o.global_feature);
  Tensor<S> fg = stack(globals);

  LossBreakdown<S> lb;
  lb.en = encoder_loss(fg, labels, heads.global, weights);
  lb.div = Tensor<S>::scalar(S(0));
  lb.dis = Tensor<S>::scalar(S(0));
  lb.total = lb.en;

  if (decoder_enabled) {
    std::vector<Tensor<S>> parts;
    parts.reserve(outputs.size());
    for (const auto& o : outputs) {
      if (!o.part_features.valid())
        throw ContractError("decoder loss requested without part features");
      parts.push_back(o.part_features);
    }
    const int k = parts[0].extent(0);
    if (diversity_enabled && k >= 2) {
      Tensor<S> acc;
      for (const auto& p : parts) {
        Tensor<S> dl = diversity_loss(p);
        acc = acc.valid() ? add(acc, dl) : dl;
      }
      lb.div = div_scalar(acc, S(parts.size()));
      lb.total = add(lb.total, lb.div);
    }
    lb.dis = discriminability_loss(stack(parts), labels, heads.parts, weights);
    lb.total = add(lb.total, lb.dis);
  }
  return lb;
}

#define PAT_INSTANTIATE_LOSSES(S)                                             \
  template struct ClassifierHead<S>;                                          \
  template struct PatHeads<S>;                                                \
  template Tensor<S> batch_norm_train<S>(const Tensor<S>&, const Tensor<S>&, \
                                         const Tensor<S>&, S,                \
                                         std::vector<S>*, std::vector<S>*);  \
  template Tensor<S> cross_entropy_mean<S>(const Tensor<S>&,                 \
                                           const std::vector<int>&);         \
  template Tensor<S> id_classification_loss<S>(                              \
      const Tensor<S>&, const std::vector<int>&, ClassifierHead<S>&, bool);  \
  template Tensor<S> triplet_loss_batch_hard<S>(const Tensor<S>&,            \
                                                const std::vector<int>&, S); \
  template Tensor<S> diversity_loss<S>(const Tensor<S>&);                    \
  template Tensor<S> discriminability_loss<S>(                               \
      const Tensor<S>&, const std::vector<int>&,                             \
      std::vector<ClassifierHead<S>>&, const LossWeights&);                  \
  template Tensor<S> encoder_loss<S>(const Tensor<S>&,                       \
                                     const std::vector<int>&,                \
                                     ClassifierHead<S>&, const LossWeights&); \
  template LossBreakdown<S> total_loss<S>(                                   \
      const std::vector<PatOutput<S>>&, const std::vector<int>&,             \
      PatHeads<S>&, const LossWeights&, bool, bool);

PAT_INSTANTIATE_LOSSES(float)
PAT_INSTANTIATE_LOSSES(double)

#undef PAT_INSTANTIATE_LOSSES

}  // namespace pat
