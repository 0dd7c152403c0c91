#include <algorithm>
#include <cstring>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"
#include "ldm4ts/pipeline/tensor_util.hpp"

namespace ldm4ts::pipeline {

Tensor take_rows(const Tensor& t, std::span<const std::size_t> idx) {
  if (t.empty()) return {};
  Shape s = t.shape();
  const std::size_t row = t.numel() / s[0];
  s[0] = idx.size();
  Tensor out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= t.dim(0)) throw IndexError("row " + std::to_string(idx[i]) + " out of range");
    std::copy_n(t.ptr() + idx[i] * row, row, out.ptr() + i * row);
  }
  return out;
}

Tensor cat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  std::size_t n = 0;
  for (const auto& p : parts) n += p.dim(0);
  s[0] = n;
  Tensor out(s);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.ptr(), p.numel(), out.ptr() + off);
    off += p.numel();
  }
  return out;
}

Tensor prefix_steps(const Tensor& Y, std::size_t h) {
  const std::size_t B = Y.dim(0), H = Y.dim(1), D = Y.dim(2);
  Tensor out({B, h, D});
  for (std::size_t b = 0; b < B; ++b) std::copy_n(Y.ptr() + b * H * D, h * D, out.ptr() + b * h * D);
  return out;
}

Features Features::gather(std::span<const std::size_t> idx) const {
  Features f;
  f.X_norm = take_rows(X_norm, idx);
  f.stats.means = take_rows(stats.means, idx);
  f.stats.stdev = take_rows(stats.stdev, idx);
  f.stats.norm_const = stats.norm_const;
  f.c_freq = take_rows(c_freq, idx);
  f.h_pool = take_rows(h_pool, idx);
  f.images = take_rows(images, idx);
  f.z0 = take_rows(z0, idx);
  return f;
}

Tensor window_images(const Model& m, const Tensor& X) {
  return vision::encode_images(data::instance_normalize(X, m.config().norm_const).X, m.vision_config());
}

Features featurize(const Model& m, const Tensor& X, bool keep_images) {
  if (X.rank() != 3 || X.dim(1) != m.config().seq_len || X.dim(2) != m.dims()) {
    throw ValidationError("expected windows of shape B x " + std::to_string(m.config().seq_len) + " x " +
                          std::to_string(m.dims()) + ", got " + shape_str(X.shape()));
  }
  Features f;
  auto n = data::instance_normalize(X, 1.0);
  f.X_norm = std::move(n.X);
  f.stats = std::move(n.stats);
  f.c_freq = cond::fft_encode(f.X_norm);
  std::vector<std::string> texts;
  for (auto& p : cond::generate_prompt(X, m.prompt_config())) texts.push_back(std::move(p.text));
  f.h_pool = m.text.pooled(texts);
  Tensor img = window_images(m, X);
  {
    ag::NoGradGuard ng;
    f.z0 = (m.vae.encode(ag::constant(img)).mean * m.latent_scale).value();
  }
  if (keep_images) f.images = std::move(img);
  return f;
}

Features featurize_set(const Model& m, const data::WindowSet& ws, bool keep_images, Tensor* Y) {
  constexpr std::size_t chunk = 64;
  std::vector<Features> parts;
  std::vector<Tensor> ys;
  for (std::size_t b = 0; b < ws.size(); b += chunk) {
    auto batch = ws.range(b, std::min(ws.size(), b + chunk));
    parts.push_back(featurize(m, batch.X, keep_images));
    if (Y) ys.push_back(std::move(batch.Y));
  }
  Features f;
  auto collect = [&](auto member) {
    std::vector<Tensor> v;
    for (auto& p : parts) v.push_back(std::move(member(p)));
    return cat_rows(v);
  };
  f.X_norm = collect([](Features& p) -> Tensor& { return p.X_norm; });
  f.stats.means = collect([](Features& p) -> Tensor& { return p.stats.means; });
  f.stats.stdev = collect([](Features& p) -> Tensor& { return p.stats.stdev; });
  f.c_freq = collect([](Features& p) -> Tensor& { return p.c_freq; });
  f.h_pool = collect([](Features& p) -> Tensor& { return p.h_pool; });
  f.z0 = collect([](Features& p) -> Tensor& { return p.z0; });
  if (keep_images) f.images = collect([](Features& p) -> Tensor& { return p.images; });
  if (Y) *Y = cat_rows(ys);
  return f;
}

ag::Var denormalize(const ag::Var& y, const data::NormStats& st) {
  Tensor scale = st.stdev;
  for (auto& v : scale.vec()) v *= st.norm_const;
  return y * ag::constant(scale) + ag::constant(st.means);
}

LossTerms compute_losses(const Model& m, const Features& f, const Tensor& Y, const diffusion::DiffusionDraw& d,
                         const diffusion::EpsVarFn* eps_override) {
  const Config& c = m.config();
  const bool need_images = m.vae_trainable() || c.lambda3 > 0;
  if (need_images && f.images.empty()) throw InvariantError("compute_losses: images required but not featurized");

  ag::Var z0 = m.vae_trainable() ? m.vae.encode(ag::constant(f.images)).mean * m.latent_scale : ag::constant(f.z0);
  ag::Var c_text = m.text.project(ag::constant(f.h_pool));
  ag::Var c_freq = ag::constant(f.c_freq);
  ag::Var c_m = m.fusion(c_text, c_freq, z0);

  diffusion::EpsVarFn unet_fn = [&](const ag::Var& z_t, const std::vector<std::size_t>& t) {
    return m.unet(z_t, t, c_m);
  };
  const diffusion::EpsVarFn& eps_fn = eps_override ? *eps_override : unet_fn;

  ag::Var eps = ag::constant(d.eps);
  ag::Var z_t = diffusion::forward_sample(z0, d.t, eps, m.schedule);
  ag::Var eps_hat = eps_fn(z_t, d.t);

  LossTerms out;
  out.l_diff = ag::mse_loss(eps_hat, eps);
  ag::Var z0_hat = diffusion::predict_z0(z_t, d.t, eps_hat, m.schedule);
  ag::Var img_rec = m.vae.decode(z0_hat * (1.0 / m.latent_scale));
  ag::Var z_ve = m.vision_head(img_rec);
  ag::Var z_te = m.temporal(f.X_norm);
  ag::Var y = denormalize(m.gate(z_te, z_ve, &out.gate), f.stats);
  out.y_hat = y.value();
  out.l_pred = ag::mse_loss(y, ag::constant(Y));
  out.l_recon = f.images.empty() ? ag::constant(Tensor::scalar(0.0)) : ag::mse_loss(img_rec, ag::constant(f.images));

  ag::Var total;
  auto add = [&](double w, const ag::Var& term) {
    if (w <= 0) return;
    ag::Var part = term * w;
    total = total.defined() ? total + part : part;
  };
  add(c.lambda1, out.l_diff);
  add(c.lambda2, out.l_pred);
  add(c.lambda3, out.l_recon);
  out.total = total;
  return out;
}

}  // namespace ldm4ts::pipeline
