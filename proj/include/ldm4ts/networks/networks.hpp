#pragma once

#include <memory>
#include <vector>

#include "ldm4ts/networks/module.hpp"

namespace ldm4ts::nn {

struct VaeConfig {
  std::size_t base_channels = 32;
  std::size_t latent_channels = 4;
  std::size_t stages = 3;  // each halves the resolution
};

struct VaeEncoding {
  ag::Var mean, logvar, sample;
};

class Vae : public Module {
 public:
  Vae(const Scope& s, const VaeConfig& cfg);

  // img in [0, 1]; the reparameterized sample uses `noise` (same shape as the
  // mean) or the mean itself when noise is empty.
  VaeEncoding encode(const ag::Var& img, const Tensor& noise = {}) const;
  // Unclamped decoder output mapped to the [0, 1] pixel scale.
  ag::Var decode_raw(const ag::Var& z) const;
  ag::Var decode(const ag::Var& z) const { return ag::clamp(decode_raw(z), 0.0, 1.0); }

  // Mean over batch of the diagonal-Gaussian KL to N(0, I), summed over latent entries.
  static ag::Var kl(const VaeEncoding& e);

  VaeConfig cfg;

 private:
  std::vector<std::size_t> widths_;
  Conv2d enc_in_;
  std::vector<std::unique_ptr<GroupNorm>> enc_norm_;
  std::vector<std::unique_ptr<Conv2d>> enc_down_;
  GroupNorm enc_mid_norm_;
  Conv2d enc_mid_;
  GroupNorm enc_out_norm_;
  Conv2d enc_out_;
  Conv2d dec_in_;
  GroupNorm dec_mid_norm_;
  Conv2d dec_mid_;
  std::vector<std::unique_ptr<GroupNorm>> dec_norm_;
  std::vector<std::unique_ptr<Conv2d>> dec_up_;
  GroupNorm dec_out_norm_;
  Conv2d dec_out_;
};

// Sinusoidal embedding of integer timesteps, B x dim.
Tensor timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim);

class ResBlock : public Module {
 public:
  ResBlock(const Scope& s, std::size_t in, std::size_t out, std::size_t temb_dim);
  ag::Var operator()(const ag::Var& x, const ag::Var& temb) const;

 private:
  GroupNorm n1_, n2_;
  Conv2d c1_, c2_;
  Linear t_;
  std::unique_ptr<Conv2d> skip_;
};

// Self-attention over spatial positions followed by cross-attention to c_m.
class AttentionBlock : public Module {
 public:
  AttentionBlock(const Scope& s, std::size_t channels, std::size_t heads, std::size_t cond_dim);
  ag::Var operator()(const ag::Var& x, const ag::Var& cond) const;

 private:
  GroupNorm n1_;
  MultiHeadAttention self_;
  LayerNorm n2_;
  MultiHeadAttention cross_;
};

struct UNetConfig {
  std::size_t latent_channels = 4;
  std::size_t channels = 64;
  std::size_t levels = 1;
  std::size_t heads = 8;
  std::size_t cond_dim = 256;
};

class UNet : public Module {
 public:
  UNet(const Scope& s, const UNetConfig& cfg);

  // z_t: B x C_z x h x w, t: one timestep per item, cond: B x cond_dim.
  ag::Var operator()(const ag::Var& z_t, const std::vector<std::size_t>& t, const ag::Var& cond) const;

  UNetConfig cfg;
  // Drop the down/up paths and keep only the skip projections (diagnostics).
  bool skip_only = false;

 private:
  struct Level {
    std::unique_ptr<ResBlock> down;
    std::unique_ptr<Conv2d> downsample, upsample, project;
    std::unique_ptr<ResBlock> up;
  };
  std::size_t temb_dim_;
  Linear t1_, t2_;
  Conv2d in_;
  std::vector<Level> levels_;
  ResBlock mid1_;
  AttentionBlock attn_;
  ResBlock mid2_;
  GroupNorm out_norm_;
  Conv2d out_;
};

struct TemporalConfig {
  std::size_t seq_len = 96;
  std::size_t pred_len = 96;
  std::size_t patch_len = 16;
  std::size_t stride = 8;
  std::size_t padding = 8;
  std::size_t d_model = 256;
  std::size_t heads = 8;
  std::size_t d_ff = 512;
  std::size_t layers = 2;

  std::size_t num_patches() const;
};

// Replicate-pad each feature at the end and cut overlapping patches:
// B x L x D -> (B*D) x N_p x patch_len.
Tensor make_patches(const Tensor& X, const TemporalConfig& cfg);

class TransformerBlock : public Module {
 public:
  TransformerBlock(const Scope& s, std::size_t d_model, std::size_t heads, std::size_t d_ff);
  ag::Var operator()(const ag::Var& h) const;

  LayerNorm n1, n2;
  MultiHeadAttention attn;
  Linear ff1, ff2;
};

class TemporalEncoder : public Module {
 public:
  TemporalEncoder(const Scope& s, const TemporalConfig& cfg);
  // X_norm: B x L x D -> B x pred_len x D.
  ag::Var operator()(const Tensor& X) const;

  TemporalConfig cfg;
  Linear embed;
  ag::Var pos;
  std::vector<std::unique_ptr<TransformerBlock>> blocks;
  Linear head;
};

struct VisionHeadConfig {
  std::size_t image_size = 64;
  std::size_t channels = 16;
  std::size_t pred_len = 96;
  std::size_t dims = 7;
};

class VisionHead : public Module {
 public:
  VisionHead(const Scope& s, const VisionHeadConfig& cfg);
  ag::Var operator()(const ag::Var& img) const;

  VisionHeadConfig cfg;
  Conv2d c1, c2;
  Linear fc;
};

class GatedFusion : public Module {
 public:
  GatedFusion(const Scope& s, std::size_t pred_len, std::size_t dims, std::size_t hidden);

  ag::Var gate_logits(const ag::Var& z_te, const ag::Var& z_ve) const;
  // Returns the fused forecast; gate receives g when non-null.
  ag::Var operator()(const ag::Var& z_te, const ag::Var& z_ve, Tensor* gate = nullptr) const;

  Linear fc1, fc2;
};

}  // namespace ldm4ts::nn
