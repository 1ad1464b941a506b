#include "pat/model.hpp"

#include <algorithm>
#include <string>

namespace pat {
namespace {

int stem_channel(int d, int stage) {
  // 3 -> d/4 -> d/2 -> d, floored at 4.
  switch (stage) {
    case 0: return std::max(4, d / 4);
    case 1: return std::max(4, d / 2);
    default: return d;
  }
}

}  // namespace

template <typename S>
PatModel<S>::PatModel(const PatModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.embed_dim < 1 || cfg.heads < 1 || cfg.embed_dim % cfg.heads != 0)
    throw DimensionError("embed_dim " + std::to_string(cfg.embed_dim) +
                         " must be a positive multiple of heads " +
                         std::to_string(cfg.heads));
  if (cfg.input_h % PatModelConfig::kDownsample != 0 ||
      cfg.input_w % PatModelConfig::kDownsample != 0)
    throw ShapeError("input extents " + std::to_string(cfg.input_h) + "x" +
                     std::to_string(cfg.input_w) + " must be multiples of " +
                     std::to_string(PatModelConfig::kDownsample));
  if (cfg.prototypes < 1)
    throw ContractError("prototype count must be >= 1");

  const int d = cfg.embed_dim;
  int cin = 3;
  for (int s = 0; s < 3; ++s) {
    int cout = stem_channel(d, s);
    stem_w_[s] = init_uniform<S>({3, 3, cin, cout}, 3 * 3 * cin, rng);
    stem_b_[s] = init_uniform<S>({cout}, 3 * 3 * cin, rng);
    cin = cout;
  }
  proj_w_ = init_uniform<S>({1, 1, cin, d}, cin, rng);
  proj_b_ = init_uniform<S>({d}, cin, rng);

  const int hw = cfg.grid_h() * cfg.grid_w();
  pos_embed_ = init_uniform<S>({hw, d}, d, rng);

  enc_.resize(cfg.enc_blocks);
  for (auto& blk : enc_) {
    blk.attn = AttentionParams<S>::init(d, cfg.heads, rng);
    blk.ln_attn = LayerNormParams<S>::init(d);
    blk.ffn = FfnParams<S>::init(d, cfg.ffn_width(), rng);
    blk.ln_ffn = LayerNormParams<S>::init(d);
  }
  dec_.resize(cfg.dec_blocks);
  for (auto& blk : dec_) {
    blk.self_attn = AttentionParams<S>::init(d, cfg.heads, rng);
    blk.ln_self = LayerNormParams<S>::init(d);
    blk.cross_attn = AttentionParams<S>::init(d, cfg.heads, rng);
    blk.ln_cross = LayerNormParams<S>::init(d);
    blk.ffn = FfnParams<S>::init(d, cfg.ffn_width(), rng);
    blk.ln_ffn = LayerNormParams<S>::init(d);
  }
  protos_.prototypes = init_uniform<S>({cfg.prototypes, d}, d, rng);

  NamedTensors<S> params = parameters();
  for (auto& [name, t] : params) t.set_requires_grad(true);
}

template <typename S>
FeatureMap<S> PatModel<S>::stem_forward(const Tensor<S>& image) const {
  if (image.rank() != 3 || image.extent(2) != 3)
    throw DimensionError("stem expects an [H,W,3] image, got " +
                         shape_str(image.shape()));
  if (image.extent(0) % PatModelConfig::kDownsample != 0 ||
      image.extent(1) % PatModelConfig::kDownsample != 0)
    throw ShapeError("image extents " + shape_str(image.shape()) +
                     " not divisible by the stem downsampling factor " +
                     std::to_string(PatModelConfig::kDownsample));
  Tensor<S> x = image;
  for (int s = 0; s < 3; ++s) {
    x = conv2d(x, stem_w_[s], /*stride=*/2, /*pad=*/1);
    const int h = x.extent(0), w = x.extent(1), c = x.extent(2);
    x = reshape(relu(add_rowvec(reshape(x, {h * w, c}), stem_b_[s])),
                {h, w, c});
  }
  x = conv2d(x, proj_w_, /*stride=*/1, /*pad=*/0);
  const int h = x.extent(0), w = x.extent(1), d = x.extent(2);
  x = reshape(add_rowvec(reshape(x, {h * w, d}), proj_b_), {h, w, d});
  return FeatureMap<S>{h, w, d, x};
}

template <typename S>
Tensor<S> PatModel<S>::flatten_with_pos(const FeatureMap<S>& fmap) const {
  Tensor<S> flat =
      reshape(fmap.values, {fmap.h * fmap.w, fmap.channels});
  if (cfg_.pos_embed) {
    if (flat.shape() != pos_embed_.shape())
      throw DimensionError("feature grid " + shape_str(flat.shape()) +
                           " does not match the positional embedding " +
                           shape_str(pos_embed_.shape()));
    flat = add(flat, pos_embed_);
  }
  return flat;
}

template <typename S>
Tensor<S> PatModel<S>::encoder_forward(const FeatureMap<S>& fmap) const {
  if (fmap.channels != cfg_.embed_dim)
    throw DimensionError("encoder expects " + std::to_string(cfg_.embed_dim) +
                         " channels, got " + std::to_string(fmap.channels));
  Tensor<S> x = flatten_with_pos(fmap);
  for (const auto& blk : enc_) {
    AttentionResult<S> attn = multi_head_attention(x, x, x, blk.attn);
    x = transformer_sublayer(x, attn.output, blk.ln_attn);
    x = transformer_sublayer(x, ffn(x, blk.ffn), blk.ln_ffn);
  }
  return x;
}

template <typename S>
std::pair<Tensor<S>, PartMaskStack<S>> PatModel<S>::decoder_forward(
    const PartPrototypeSet<S>& protos, const Tensor<S>& f_att) const {
  if (protos.prototypes.extent(1) != f_att.extent(1))
    throw DimensionError("prototype width " +
                         std::to_string(protos.prototypes.extent(1)) +
                         " does not match feature width " +
                         std::to_string(f_att.extent(1)));
  Tensor<S> p = protos.prototypes;
  Tensor<S> last_weights;
  for (const auto& blk : dec_) {
    AttentionResult<S> self = multi_head_attention(p, p, p, blk.self_attn);
    p = transformer_sublayer(p, self.output, blk.ln_self);
    AttentionResult<S> cross =
        multi_head_attention(p, f_att, f_att, blk.cross_attn);
    last_weights = cross.weights;
    p = transformer_sublayer(p, cross.output, blk.ln_cross);
    p = transformer_sublayer(p, ffn(p, blk.ffn), blk.ln_ffn);
  }
  // Head-averaged cross-attention weights, one mask per prototype.
  const int heads = last_weights.extent(0);
  const int k = last_weights.extent(1);
  const int hw = last_weights.extent(2);
  Tensor<S> flat = reshape(last_weights, {heads, k * hw});
  PartMaskStack<S> masks;
  masks.h = cfg_.grid_h();
  masks.w = cfg_.grid_w();
  masks.weights = reshape(mean_over_axis(flat, 0), {k, hw});
  return {p, masks};
}

template <typename S>
PatOutput<S> PatModel<S>::forward(const Tensor<S>& image) const {
  FeatureMap<S> fmap = stem_forward(image);
  Tensor<S> f_att =
      cfg_.encoder ? encoder_forward(fmap) : flatten_with_pos(fmap);
  PatOutput<S> out;
  out.global_feature = global_feature(f_att);
  if (cfg_.decoder) {
    auto [parts, masks] = decoder_forward(protos_, f_att);
    out.part_features = parts;
    out.masks = masks;
    const int k = parts.extent(0), d = parts.extent(1);
    out.embedding =
        concat_last_axis(out.global_feature, reshape(parts, {k * d}));
  } else {
    out.embedding = out.global_feature;
  }
  return out;
}

template <typename S>
NamedTensors<S> PatModel<S>::parameters() const {
  NamedTensors<S> out;
  for (int s = 0; s < 3; ++s) {
    out.emplace_back("stem.conv" + std::to_string(s) + ".w", stem_w_[s]);
    out.emplace_back("stem.conv" + std::to_string(s) + ".b", stem_b_[s]);
  }
  out.emplace_back("stem.proj.w", proj_w_);
  out.emplace_back("stem.proj.b", proj_b_);
  out.emplace_back("pos_embed", pos_embed_);
  for (std::size_t i = 0; i < enc_.size(); ++i) {
    const std::string p = "enc" + std::to_string(i);
    enc_[i].attn.collect(p + ".attn", out);
    enc_[i].ln_attn.collect(p + ".ln_attn", out);
    enc_[i].ffn.collect(p + ".ffn", out);
    enc_[i].ln_ffn.collect(p + ".ln_ffn", out);
  }
  for (std::size_t i = 0; i < dec_.size(); ++i) {
    const std::string p = "dec" + std::to_string(i);
    dec_[i].self_attn.collect(p + ".self", out);
    dec_[i].ln_self.collect(p + ".ln_self", out);
    dec_[i].cross_attn.collect(p + ".cross", out);
    dec_[i].ln_cross.collect(p + ".ln_cross", out);
    dec_[i].ffn.collect(p + ".ffn", out);
    dec_[i].ln_ffn.collect(p + ".ln_ffn", out);
  }
  out.emplace_back("prototypes", protos_.prototypes);
  return out;
}

template <typename S>
Tensor<S> global_feature(const Tensor<S>& f_att) {
  return mean_over_axis(f_att, 0);
}

template <typename S>
Tensor<S> fuse_masks(const PartMaskStack<S>& masks) {
  if (!masks.weights.valid() || masks.weights.extent(0) < 1)
    throw ContractError("fuse_masks needs at least one mask");
  const int k = masks.weights.extent(0);
  const int hw = masks.weights.extent(1);
  if (hw != masks.h * masks.w)
    throw DimensionError("mask stack extents disagree with its grid");
  Tensor<S> fused = Tensor<S>::zeros({masks.h, masks.w});
  S peak = S(0);
  for (int j = 0; j < hw; ++j) {
    S m = masks.weights.at(0, j);
    for (int i = 1; i < k; ++i) m = std::max(m, masks.weights.at(i, j));
    fused.data()[j] = m;
    peak = std::max(peak, m);
  }
  if (peak > S(0))
    for (int j = 0; j < hw; ++j) fused.data()[j] /= peak;
  return fused;
}

#define PAT_INSTANTIATE_MODEL(S)                                  \
  template class PatModel<S>;                                     \
  template Tensor<S> global_feature<S>(const Tensor<S>&);         \
  template Tensor<S> fuse_masks<S>(const PartMaskStack<S>&);

PAT_INSTANTIATE_MODEL(float)
PAT_INSTANTIATE_MODEL(double)

#undef PAT_INSTANTIATE_MODEL

}  // namespace pat
