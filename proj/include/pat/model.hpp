#pragma once

#include <utility>

#include "pat/layers.hpp"

namespace pat {

// Spatial feature grid; values laid out [h, w, channels].
template <typename S>
struct FeatureMap {
  int h = 0;
  int w = 0;
  int channels = 0;
  Tensor<S> values;
};

// K learnable d-dimensional queries for the decoder.
template <typename S>
struct PartPrototypeSet {
  Tensor<S> prototypes;  // [K, d]
  int count() const { return prototypes.valid() ? prototypes.extent(0) : 0; }
};

// Per-prototype attention distribution over the hw spatial positions.
template <typename S>
struct PartMaskStack {
  int h = 0;
  int w = 0;
  Tensor<S> weights;  // [K, hw], rows nonnegative and summing to 1
};

template <typename S>
struct PatOutput {
  Tensor<S> global_feature;  // [d]
  Tensor<S> part_features;   // [K, d]; invalid when the decoder is off
  PartMaskStack<S> masks;    // empty when the decoder is off
  Tensor<S> embedding;       // [(K+1)*d]: global feature then parts, in order
};

struct PatModelConfig {
  int input_h = 64;
  int input_w = 32;
  int embed_dim = 64;  // d
  int heads = 4;
  int ffn_dim = 0;  // 0 -> 4 * embed_dim
  int prototypes = 4;  // K
  int enc_blocks = 1;
  int dec_blocks = 1;
  bool pos_embed = true;
  bool encoder = true;
  bool decoder = true;

  int ffn_width() const { return ffn_dim > 0 ? ffn_dim : 4 * embed_dim; }
  static constexpr int kDownsample = 8;  // three stride-2 stem stages
  int grid_h() const { return input_h / kDownsample; }
  int grid_w() const { return input_w / kDownsample; }
};

template <typename S>
struct EncoderBlock {
  AttentionParams<S> attn;
  LayerNormParams<S> ln_attn, ln_ffn;
  FfnParams<S> ffn;
};

template <typename S>
struct DecoderBlock {
  AttentionParams<S> self_attn, cross_attn;
  LayerNormParams<S> ln_self, ln_cross, ln_ffn;
  FfnParams<S> ffn;
};

// The full network: convolutional stem, pixel-context encoder, prototype
// decoder, and the concatenated retrieval embedding. All submodule
// parameters are created regardless of the encoder/decoder toggles so a
// given seed yields identical shared weights across ablation variants;
// toggles only select which paths run.
template <typename S>
class PatModel {
 public:
  PatModel(const PatModelConfig& cfg, Rng& rng);

  // Three 3x3 stride-2 conv+relu stages, then a 1x1 reduction to d.
  FeatureMap<S> stem_forward(const Tensor<S>& image) const;

  // Flatten (+ positional embedding), then the encoder blocks.
  Tensor<S> encoder_forward(const FeatureMap<S>& fmap) const;

  // Prototype self-attention, cross-attention onto the pixels, ffn. The
  // masks are the head-averaged cross-attention weights of the last block.
  std::pair<Tensor<S>, PartMaskStack<S>> decoder_forward(
      const PartPrototypeSet<S>& protos, const Tensor<S>& f_att) const;

  PatOutput<S> forward(const Tensor<S>& image) const;

  NamedTensors<S> parameters() const;
  const PatModelConfig& config() const { return cfg_; }
  const PartPrototypeSet<S>& prototypes() const { return protos_; }

 private:
  Tensor<S> flatten_with_pos(const FeatureMap<S>& fmap) const;

  PatModelConfig cfg_;
  // Stem: 3 -> c1 -> c2 -> c3 (3x3, stride 2), then 1x1 c3 -> d.
  Tensor<S> stem_w_[3], stem_b_[3];
  Tensor<S> proj_w_, proj_b_;
  Tensor<S> pos_embed_;  // [hw, d]
  std::vector<EncoderBlock<S>> enc_;
  std::vector<DecoderBlock<S>> dec_;
  PartPrototypeSet<S> protos_;
};

// Global average pooling over the hw axis of [hw, d].
template <typename S>
Tensor<S> global_feature(const Tensor<S>& f_att);

// Elementwise max over prototypes, reshaped to h x w and rescaled to
// [0,1] by the global peak. Plain data, no gradient.
template <typename S>
Tensor<S> fuse_masks(const PartMaskStack<S>& masks);

}  // namespace pat
