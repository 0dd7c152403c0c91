#include <cmath>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/networks/networks.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::nn {

Tensor timestep_embedding(const std::vector<std::size_t>& t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor out({t.size(), dim});
  for (std::size_t b = 0; b < t.size(); ++b)
    for (std::size_t i = 0; i < half; ++i) {
      const double f = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
      const double a = static_cast<double>(t[b]) * f;
      out[b * dim + i] = std::sin(a);
      out[b * dim + half + i] = std::cos(a);
    }
  return out;
}

ResBlock::ResBlock(const Scope& s, std::size_t in, std::size_t out, std::size_t temb_dim)
    : n1_(s / "norm1", in), n2_(s / "norm2", out), c1_(s / "conv1", in, out, 3, 1, 1),
      c2_(s / "conv2", out, out, 3, 1, 1), t_(s / "temb", temb_dim, out, true, Init::Uniform) {
  add_child(n1_);
  add_child(c1_);
  add_child(t_);
  add_child(n2_);
  add_child(c2_);
  if (in != out) {
    skip_ = std::make_unique<Conv2d>(s / "skip", in, out, 1);
    add_child(*skip_);
  }
}

ag::Var ResBlock::operator()(const ag::Var& x, const ag::Var& temb) const {
  ag::Var h = c1_(ag::silu(n1_(x)));
  ag::Var te = t_(ag::silu(temb));
  h = h + ag::reshape(te, {te.dim(0), te.dim(1), 1, 1});
  h = c2_(ag::silu(n2_(h)));
  return (skip_ ? (*skip_)(x) : x) + h;
}

AttentionBlock::AttentionBlock(const Scope& s, std::size_t ch, std::size_t heads, std::size_t cond_dim)
    : n1_(s / "norm1", ch), self_(s / "self", ch, heads, ch, ch), n2_(s / "norm2", ch),
      cross_(s / "cross", ch, heads, ch, cond_dim) {
  add_child(n1_);
  add_child(self_);
  add_child(n2_);
  add_child(cross_);
}

ag::Var AttentionBlock::operator()(const ag::Var& x, const ag::Var& cond) const {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  auto tokens = [&](const ag::Var& v) { return ag::permute(ag::reshape(v, {B, C, H * W}), {0, 2, 1}); };
  auto image = [&](const ag::Var& v) { return ag::reshape(ag::permute(v, {0, 2, 1}), {B, C, H, W}); };
  ag::Var tok = tokens(n1_(x));
  ag::Var h = x + image(self_(tok, tok));
  ag::Var kv = ag::reshape(cond, {B, 1, cond.dim(1)});
  return h + image(cross_(n2_(tokens(h)), kv));
}

UNet::UNet(const Scope& s, const UNetConfig& c)
    : cfg(c), temb_dim_(4 * c.channels), t1_(s / "time.0", c.channels, 4 * c.channels, true, Init::Uniform),
      t2_(s / "time.1", 4 * c.channels, 4 * c.channels, true, Init::Uniform), in_(s / "in", c.latent_channels, c.channels, 3, 1, 1),
      mid1_(s / "mid.res1", c.channels, c.channels, 4 * c.channels),
      attn_(s / "mid.attn", c.channels, c.heads, c.cond_dim),
      mid2_(s / "mid.res2", c.channels, c.channels, 4 * c.channels), out_norm_(s / "out_norm", c.channels),
      out_(s / "out", c.channels, c.latent_channels, 3, 1, 1) {
  add_child(t1_);
  add_child(t2_);
  add_child(in_);
  for (std::size_t l = 0; l < c.levels; ++l) {
    const Scope ls = s / ("level." + std::to_string(l));
    Level lv;
    lv.down = std::make_unique<ResBlock>(ls / "down", c.channels, c.channels, temb_dim_);
    lv.downsample = std::make_unique<Conv2d>(ls / "downsample", c.channels, c.channels, 3, 2, 1);
    lv.upsample = std::make_unique<Conv2d>(ls / "upsample", c.channels, c.channels, 3, 1, 1);
    lv.up = std::make_unique<ResBlock>(ls / "up", c.channels, c.channels, temb_dim_);
    lv.project = std::make_unique<Conv2d>(ls / "project", c.channels, c.channels, 1);
    for (Module* m : std::initializer_list<Module*>{lv.down.get(), lv.downsample.get(), lv.upsample.get(),
                                                    lv.up.get(), lv.project.get()})
      add_child(*m);
    levels_.push_back(std::move(lv));
  }
  add_child(mid1_);
  add_child(attn_);
  add_child(mid2_);
  add_child(out_norm_);
  add_child(out_);
}

ag::Var UNet::operator()(const ag::Var& z_t, const std::vector<std::size_t>& t, const ag::Var& cond) const {
  if (!cond.defined()) throw ValidationError("U-Net called without a condition vector");
  const std::size_t f = std::size_t{1} << cfg.levels;
  if (z_t.rank() != 4 || z_t.dim(1) != cfg.latent_channels || z_t.dim(2) % f || z_t.dim(3) % f) {
    throw DimensionError("U-Net latent must be B x " + std::to_string(cfg.latent_channels) +
                         " x h x w with h, w divisible by " + std::to_string(f) + ", got " + shape_str(z_t.shape()));
  }
  if (t.size() != z_t.dim(0) || cond.rank() != 2 || cond.dim(0) != z_t.dim(0) || cond.dim(1) != cfg.cond_dim) {
    throw DimensionError("U-Net timestep/condition batch mismatch: cond " + shape_str(cond.shape()));
  }
  ag::Var temb = t2_(ag::silu(t1_(ag::constant(timestep_embedding(t, cfg.channels)))));
  ag::Var h = in_(z_t);
  std::vector<ag::Var> skips;
  for (const auto& lv : levels_) {
    h = (*lv.down)(h, temb);
    skips.push_back(h);
    h = (*lv.downsample)(h);
  }
  h = mid2_(attn_(mid1_(h, temb), cond), temb);
  for (std::size_t i = levels_.size(); i-- > 0;) {
    const auto& lv = levels_[i];
    ag::Var proj = (*lv.project)(skips[i]);
    if (skip_only) {
      h = proj;
      continue;
    }
    h = (*lv.up)((*lv.upsample)(ag::upsample_nearest2x(h)), temb);
    h = h + proj;
  }
  return out_(ag::silu(out_norm_(h)));
}

}  // namespace ldm4ts::nn
