#include "ldm4ts/errors.hpp"
#include "ldm4ts/networks/networks.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::nn {

std::size_t TemporalConfig::num_patches() const {
  if (patch_len == 0 || stride == 0 || seq_len + padding < patch_len) {
    throw ConfigError("sequence length " + std::to_string(seq_len) + " (+" + std::to_string(padding) +
                      " padding) is shorter than the patch length " + std::to_string(patch_len));
  }
  return (seq_len + padding - patch_len) / stride + 1;
}

Tensor make_patches(const Tensor& X, const TemporalConfig& cfg) {
  if (X.rank() != 3 || X.dim(1) != cfg.seq_len) {
    throw ValidationError("temporal encoder expects B x " + std::to_string(cfg.seq_len) + " x D, got " +
                          shape_str(X.shape()));
  }
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2), np = cfg.num_patches(), P = cfg.patch_len;
  Tensor out({B * D, np, P});
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t d = 0; d < D; ++d)
      for (std::size_t p = 0; p < np; ++p)
        for (std::size_t j = 0; j < P; ++j) {
          const std::size_t t = std::min(p * cfg.stride + j, L - 1);
          out[((b * D + d) * np + p) * P + j] = X[(b * L + t) * D + d];
        }
  return out;
}

TransformerBlock::TransformerBlock(const Scope& s, std::size_t d, std::size_t heads, std::size_t d_ff)
    : n1(s / "norm1", d), n2(s / "norm2", d), attn(s / "attn", d, heads, d, d), ff1(s / "ff.0", d, d_ff),
      ff2(s / "ff.1", d_ff, d) {
  add_child(n1);
  add_child(attn);
  add_child(n2);
  add_child(ff1);
  add_child(ff2);
}

ag::Var TransformerBlock::operator()(const ag::Var& h0) const {
  ag::Var x = n1(h0);
  ag::Var h = h0 + attn(x, x);
  return h + ff2(ag::gelu(ff1(n2(h))));
}

TemporalEncoder::TemporalEncoder(const Scope& s, const TemporalConfig& c)
    : cfg(c), embed(s / "embed", c.patch_len, c.d_model), head(s / "head", c.num_patches() * c.d_model, c.pred_len) {
  add_child(embed);
  pos = add_param(s, "pos", s.rng("pos").truncated_normal_tensor({c.num_patches(), c.d_model}, 0.02));
  for (std::size_t l = 0; l < c.layers; ++l) {
    blocks.push_back(std::make_unique<TransformerBlock>(s / ("block." + std::to_string(l)), c.d_model, c.heads, c.d_ff));
    add_child(*blocks.back());
  }
  add_child(head);
}

ag::Var TemporalEncoder::operator()(const Tensor& X) const {
  const Tensor patches = make_patches(X, cfg);
  const std::size_t B = X.dim(0), D = X.dim(2), np = cfg.num_patches();
  ag::Var h = embed(ag::constant(patches)) + pos;
  for (const auto& b : blocks) h = (*b)(h);
  ag::Var y = head(ag::reshape(h, {B * D, np * cfg.d_model}));
  return ag::permute(ag::reshape(y, {B, D, cfg.pred_len}), {0, 2, 1});
}

VisionHead::VisionHead(const Scope& s, const VisionHeadConfig& c)
    : cfg(c), c1(s / "conv1", 3, c.channels, 3, 2, 1, true), c2(s / "conv2", c.channels, c.channels, 3, 2, 1, true),
      fc(s / "fc", c.channels * ((c.image_size + 3) / 4) * ((c.image_size + 3) / 4), c.pred_len * c.dims) {
  add_child(c1);
  add_child(c2);
  add_child(fc);
}

ag::Var VisionHead::operator()(const ag::Var& img) const {
  if (img.rank() != 4 || img.dim(1) != 3 || img.dim(2) != cfg.image_size || img.dim(3) != cfg.image_size) {
    throw DimensionError("vision head expects B x 3 x " + std::to_string(cfg.image_size) + " x " +
                         std::to_string(cfg.image_size) + ", got " + shape_str(img.shape()));
  }
  ag::Var h = ag::silu(c2(ag::silu(c1(img))));
  const std::size_t B = img.dim(0);
  ag::Var y = fc(ag::reshape(h, {B, h.numel() / B}));
  return ag::reshape(y, {B, cfg.pred_len, cfg.dims});
}

GatedFusion::GatedFusion(const Scope& s, std::size_t pred_len, std::size_t dims, std::size_t hidden)
    : fc1(s / "gate.0", 2 * pred_len * dims, hidden), fc2(s / "gate.1", hidden, pred_len * dims) {
  add_child(fc1);
  add_child(fc2);
}

ag::Var GatedFusion::gate_logits(const ag::Var& z_te, const ag::Var& z_ve) const {
  if (z_te.shape() != z_ve.shape() || z_te.rank() != 3) {
    throw DimensionError("gated fusion inputs differ: " + shape_str(z_te.shape()) + " vs " + shape_str(z_ve.shape()));
  }
  const std::size_t B = z_te.dim(0), n = z_te.numel() / B;
  if (fc2.weight.dim(1) != n) throw DimensionError("gated fusion configured for a different forecast size");
  ag::Var x = ag::concat({ag::reshape(z_te, {B, n}), ag::reshape(z_ve, {B, n})}, 1);
  return ag::reshape(fc2(ag::relu(fc1(x))), z_te.shape());
}

ag::Var GatedFusion::operator()(const ag::Var& z_te, const ag::Var& z_ve, Tensor* gate) const {
  ag::Var g = ag::sigmoid(gate_logits(z_te, z_ve));
  if (gate) *gate = g.value();
  return g * z_te + (-g + 1.0) * z_ve;
}

}  // namespace ldm4ts::nn
