#include "ldm4ts/errors.hpp"
#include "ldm4ts/networks/networks.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::nn {

namespace {

// Channel width after k encoder stages; the decoder mirrors it.
std::size_t width(const VaeConfig& c, std::size_t k) { return k <= 1 ? c.base_channels : 2 * c.base_channels; }

}  // namespace

Vae::Vae(const Scope& s, const VaeConfig& c)
    : cfg(c),
      enc_in_(s / "enc.in", 3, width(c, 0), 3, 1, 1),
      enc_mid_norm_(s / "enc.mid_norm", width(c, c.stages)),
      enc_mid_(s / "enc.mid", width(c, c.stages), width(c, c.stages), 3, 1, 1),
      enc_out_norm_(s / "enc.out_norm", width(c, c.stages)),
      enc_out_(s / "enc.out", width(c, c.stages), 2 * c.latent_channels, 1),
      dec_in_(s / "dec.in", c.latent_channels, width(c, c.stages), 3, 1, 1),
      dec_mid_norm_(s / "dec.mid_norm", width(c, c.stages)),
      dec_mid_(s / "dec.mid", width(c, c.stages), width(c, c.stages), 3, 1, 1),
      dec_out_norm_(s / "dec.out_norm", width(c, 0)),
      dec_out_(s / "dec.out", width(c, 0), 3, 3, 1, 1) {
  if (c.stages == 0 || c.base_channels == 0 || c.latent_channels == 0) throw ConfigError("invalid VAE configuration");
  add_child(enc_in_);
  for (std::size_t k = 0; k < c.stages; ++k) {
    const Scope st = s / ("enc.down." + std::to_string(k));
    enc_norm_.push_back(std::make_unique<GroupNorm>(st / "norm", width(c, k)));
    enc_down_.push_back(std::make_unique<Conv2d>(st / "conv", width(c, k), width(c, k + 1), 3, 2, 1));
    add_child(*enc_norm_.back());
    add_child(*enc_down_.back());
  }
  add_child(enc_mid_norm_);
  add_child(enc_mid_);
  add_child(enc_out_norm_);
  add_child(enc_out_);
  add_child(dec_in_);
  add_child(dec_mid_norm_);
  add_child(dec_mid_);
  for (std::size_t j = 0; j < c.stages; ++j) {
    const std::size_t k = c.stages - j;  // resolution index before this stage
    const Scope st = s / ("dec.up." + std::to_string(j));
    dec_norm_.push_back(std::make_unique<GroupNorm>(st / "norm", width(c, k)));
    dec_up_.push_back(std::make_unique<Conv2d>(st / "conv", width(c, k), width(c, k - 1), 3, 1, 1));
    add_child(*dec_norm_.back());
    add_child(*dec_up_.back());
  }
  add_child(dec_out_norm_);
  add_child(dec_out_);
}

VaeEncoding Vae::encode(const ag::Var& img, const Tensor& noise) const {
  const std::size_t f = std::size_t{1} << cfg.stages;
  if (img.rank() != 4 || img.dim(1) != 3 || img.dim(2) % f != 0 || img.dim(3) % f != 0) {
    throw DimensionError("VAE expects B x 3 x H x W with H, W divisible by " + std::to_string(f) + ", got " +
                         shape_str(img.shape()));
  }
  ag::Var h = enc_in_(img * 2.0 - 1.0);
  for (std::size_t k = 0; k < cfg.stages; ++k) h = (*enc_down_[k])(ag::silu((*enc_norm_[k])(h)));
  h = enc_mid_(ag::silu(enc_mid_norm_(h)));
  h = enc_out_(ag::silu(enc_out_norm_(h)));
  const std::size_t C = cfg.latent_channels;
  VaeEncoding e;
  e.mean = ag::slice(h, 1, 0, C);
  e.logvar = ag::clamp(ag::slice(h, 1, C, C), -30.0, 20.0);
  if (noise.empty()) {
    e.sample = e.mean;
  } else {
    if (noise.shape() != e.mean.shape()) throw DimensionError("VAE noise shape mismatch");
    e.sample = e.mean + ag::exp(e.logvar * 0.5) * ag::constant(noise);
  }
  return e;
}

ag::Var Vae::decode_raw(const ag::Var& z) const {
  if (z.rank() != 4 || z.dim(1) != cfg.latent_channels) {
    throw DimensionError("VAE decoder expects B x " + std::to_string(cfg.latent_channels) + " x h x w, got " +
                         shape_str(z.shape()));
  }
  ag::Var h = dec_in_(z);
  h = dec_mid_(ag::silu(dec_mid_norm_(h)));
  for (std::size_t j = 0; j < cfg.stages; ++j)
    h = (*dec_up_[j])(ag::upsample_nearest2x(ag::silu((*dec_norm_[j])(h))));
  h = dec_out_(ag::silu(dec_out_norm_(h)));
  return (h + 1.0) * 0.5;
}

ag::Var Vae::kl(const VaeEncoding& e) {
  // 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar) per item, averaged over the batch.
  ag::Var t = ag::square(e.mean) + ag::exp(e.logvar) - e.logvar - 1.0;
  return ag::sum(t) * (0.5 / static_cast<double>(e.mean.dim(0)));
}

}  // namespace ldm4ts::nn
