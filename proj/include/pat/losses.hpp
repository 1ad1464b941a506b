#pragma once

#include <vector>

#include "pat/model.hpp"

namespace pat {

// Batch-normalization neck: BN over the batch axis, then a bias-free
// linear classifier. One head serves the global feature and one each
// prototype index; they are never shared.
template <typename S>
struct ClassifierHead {
  Tensor<S> bn_gamma;  // [d]
  Tensor<S> bn_beta;   // [d]
  Tensor<S> weight;    // [d, num_identities]
  std::vector<S> running_mean;  // inference statistics
  std::vector<S> running_var;
  S bn_eps = static_cast<S>(1e-5);
  S bn_momentum = static_cast<S>(0.9);

  static ClassifierHead init(int d, int num_identities, Rng& rng);
  // BN (batch statistics when training, running statistics otherwise)
  // followed by the linear map. Training mode updates the running stats.
  Tensor<S> logits(const Tensor<S>& features, bool training);
  void collect(const std::string& prefix, NamedTensors<S>& out) const;
  int num_classes() const { return weight.extent(1); }
};

template <typename S>
struct PatHeads {
  ClassifierHead<S> global;
  std::vector<ClassifierHead<S>> parts;  // one per prototype index

  static PatHeads init(int d, int num_identities, int num_parts, Rng& rng);
  NamedTensors<S> parameters();
};

struct LossWeights {
  double lambda_cls = 1.0;
  double lambda_tri = 1.0;
  double margin = 0.3;
};

// BN over axis 0 of x[B,d] using batch statistics; batch mean/var are
// reported through the out-parameters for the running-stat update.
template <typename S>
Tensor<S> batch_norm_train(const Tensor<S>& x, const Tensor<S>& gamma,
                           const Tensor<S>& beta, S eps,
                           std::vector<S>* batch_mean = nullptr,
                           std::vector<S>* batch_var = nullptr);

// Mean over the batch of -log softmax(logits)[label].
template <typename S>
Tensor<S> cross_entropy_mean(const Tensor<S>& logits,
                             const std::vector<int>& labels);

// Cross entropy on the BN-neck logits of the head.
template <typename S>
Tensor<S> id_classification_loss(const Tensor<S>& features,
                                 const std::vector<int>& labels,
                                 ClassifierHead<S>& head,
                                 bool training = true);

// Batch-hard mining: per anchor, farthest same-label and nearest
// different-label Euclidean distances; mean hinge over anchors.
template <typename S>
Tensor<S> triplet_loss_batch_hard(const Tensor<S>& features,
                                  const std::vector<int>& labels, S margin);

// Mean cosine similarity over ordered pairs i != j of the K part
// features of one sample.
template <typename S>
Tensor<S> diversity_loss(const Tensor<S>& part_features);

// lambda_cls * sum_i CE(f_i^part) + lambda_tri * sum_i triplet(f_i^part),
// triplets paired within the same prototype index across the batch.
// part_features is the stacked [B, K, d] tensor.
template <typename S>
Tensor<S> discriminability_loss(const Tensor<S>& part_features,
                                const std::vector<int>& labels,
                                std::vector<ClassifierHead<S>>& heads,
                                const LossWeights& weights);

// lambda_cls * CE(f^g) + lambda_tri * triplet(f^g) on the global head.
template <typename S>
Tensor<S> encoder_loss(const Tensor<S>& global_features,
                       const std::vector<int>& labels,
                       ClassifierHead<S>& head, const LossWeights& weights);

template <typename S>
struct LossBreakdown {
  Tensor<S> total;
  Tensor<S> en;
  Tensor<S> div;
  Tensor<S> dis;
};

// Unweighted sum of the encoder, diversity and discriminability terms.
// A disabled decoder removes both part terms; a disabled diversity toggle
// removes only the diversity term.
template <typename S>
LossBreakdown<S> total_loss(const std::vector<PatOutput<S>>& outputs,
                            const std::vector<int>& labels,
                            PatHeads<S>& heads, const LossWeights& weights,
                            bool diversity_enabled = true,
                            bool decoder_enabled = true);

}  // namespace pat
