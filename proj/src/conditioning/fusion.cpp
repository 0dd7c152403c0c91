#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::cond {

ConditionFusion::ConditionFusion(const nn::Scope& s, const FusionConfig& c)
    : cfg(c), fc1(s / "mlp.0", c.d_model + c.freq_dim, c.d_model), fc2(s / "mlp.1", c.d_model, c.d_model),
      attn(s / "attn", c.d_model, c.heads, c.d_model, c.latent_channels) {
  add_child(fc1);
  add_child(fc2);
  if (cfg.uses_latent) add_child(attn);
}

ag::Var ConditionFusion::query(const ag::Var& c_text, const ag::Var& c_freq) const {
  if (c_text.rank() != 2 || c_freq.rank() != 2 || c_text.dim(0) != c_freq.dim(0) ||
      c_text.dim(1) != cfg.d_model || c_freq.dim(1) != cfg.freq_dim) {
    throw DimensionError("condition fusion got c_text " + shape_str(c_text.shape()) + " and c_freq " +
                         shape_str(c_freq.shape()));
  }
  return fc2(ag::gelu(fc1(ag::concat({c_text, c_freq}, 1))));
}

ag::Var ConditionFusion::operator()(const ag::Var& c_text, const ag::Var& c_freq, const ag::Var& z,
                                    Tensor* weights) const {
  ag::Var q = query(c_text, c_freq);
  if (!cfg.uses_latent) return q;
  if (z.rank() != 4 || z.dim(0) != q.dim(0) || z.dim(1) != cfg.latent_channels) {
    throw DimensionError("condition fusion latent has shape " + shape_str(z.shape()));
  }
  const std::size_t B = z.dim(0), C = z.dim(1), hw = z.dim(2) * z.dim(3);
  ag::Var kv = ag::permute(ag::reshape(z, {B, C, hw}), {0, 2, 1});
  ag::Var out = attn(ag::reshape(q, {B, 1, cfg.d_model}), kv, weights);
  return ag::reshape(out, {B, cfg.d_model});
}

}  // namespace ldm4ts::cond
