#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"
#include "ldm4ts/pipeline/tensor_util.hpp"

namespace ldm4ts::pipeline {

namespace {

std::vector<std::size_t> shuffled(std::size_t n, RngStream rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i - 1)));
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

std::vector<std::size_t> evenly_spaced(std::size_t n, std::size_t k, std::size_t offset) {
  k = std::min(k, n);
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = (i * n / k + offset) % n;
  return idx;
}

std::vector<Tensor> snapshot(const std::vector<ag::Var>& params) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(p.value());
  return out;
}

void restore(std::vector<ag::Var>& params, const std::vector<Tensor>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = snap[i];
}

Shape latent_shape(const Model& m, std::size_t B) {
  const std::size_t h = m.config().image_size / 8;
  return {B, m.config().latent_channels, h, h};
}

std::string csv_num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.8g", v);
  return buf;
}

void emit(std::ostream* log, std::size_t epoch, std::size_t step, double a, double b, double c, double val) {
  if (!log) return;
  *log << epoch << ',' << step << ',' << csv_num(a) << ',' << csv_num(b) << ',' << csv_num(c) << ','
       << csv_num(val) << '\n';
}

Tensor image_sample(const Model& m, const data::WindowSet& ws, std::size_t k, std::size_t offset) {
  auto idx = evenly_spaced(ws.size(), k, offset);
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < idx.size(); b += 64) {
    std::span<const std::size_t> part(idx.data() + b, std::min<std::size_t>(64, idx.size() - b));
    parts.push_back(window_images(m, ws.batch(part).X));
  }
  return cat_rows(parts);
}

}  // namespace

double validation_mse(const Model& m, const Features& f, const Tensor& Y) {
  const std::size_t n = f.size(), bs = m.config().batch_size;
  if (n == 0) return std::numeric_limits<double>::quiet_NaN();
  ag::NoGradGuard ng;
  const RngStream base(m.config().seed, "val.noise");
  double se = 0;
  for (std::size_t b = 0, k = 0; b < n; b += bs, ++k) {
    std::vector<std::size_t> idx(std::min(bs, n - b));
    std::iota(idx.begin(), idx.end(), b);
    Features fb = f.gather(idx);
    RngStream rng = base.fork(k);
    auto draw = diffusion::draw_noise(fb.z0.shape(), m.schedule, rng);
    auto terms = compute_losses(m, fb, take_rows(Y, idx), draw);
    se += terms.l_pred.item() * static_cast<double>(idx.size());
  }
  return se / static_cast<double>(n);
}

TrainReport train(Model& m, const data::WindowSet& train_set, const data::WindowSet& val_set, std::ostream* log) {
  const Config& c = m.config();
  TrainReport rep;
  if (train_set.size() == 0) throw ValidationError("training split has no windows");
  const bool keep_images = m.vae_trainable() || c.lambda3 > 0;
  Tensor Y_train, Y_val;
  Features f_train = featurize_set(m, train_set, keep_images, &Y_train);
  Features f_val = featurize_set(m, val_set, keep_images, &Y_val);

  auto params = m.vae_trainable() ? m.parameters() : m.forecaster_parameters();
  m.optimizer = std::make_unique<Adam>(params, AdamConfig{c.learning_rate});
  Adam& opt = *m.optimizer;

  const RngStream shuffle_base(c.seed, "train.shuffle"), noise_base(c.seed, "train.noise");
  const std::size_t n = f_train.size(), bs = c.batch_size;
  if (log) *log << "epoch,step,l_diff,l_pred,l_recon,val_mse\n";

  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params;
  std::size_t bad = 0, step = 0;
  bool capped = false;
  for (std::size_t epoch = 1; epoch <= c.epochs && !capped; ++epoch) {
    auto order = shuffled(n, shuffle_base.fork(epoch));
    double sd = 0, sp = 0, sr = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += bs) {
      std::span<const std::size_t> idx(order.data() + b, std::min(bs, n - b));
      Features fb = f_train.gather(idx);
      RngStream rng = noise_base.fork(step);
      auto draw = diffusion::draw_noise(fb.z0.shape(), m.schedule, rng);
      auto terms = compute_losses(m, fb, take_rows(Y_train, idx), draw);
      const double ld = terms.l_diff.item(), lp = terms.l_pred.item(), lr = terms.l_recon.item();
      if (!std::isfinite(terms.total.item())) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + " (step " + std::to_string(step) + "): l_diff=" +
                            csv_num(ld) + " l_pred=" + csv_num(lp) + " l_recon=" + csv_num(lr));
      }
      opt.zero_grad();
      ag::backward(terms.total);
      try {
        opt.step();
      } catch (const OptimizerError& e) {
        throw TrainingError("epoch " + std::to_string(epoch) + ", batch " + std::to_string(batches) + " (step " +
                            std::to_string(step) + "): l_diff=" + csv_num(ld) + " l_pred=" + csv_num(lp) +
                            " l_recon=" + csv_num(lr) + ": " + e.what());
      }
      rep.steps.push_back({epoch, step, ld, lp, lr, terms.total.item()});
      if (step % c.log_every == 0) emit(log, epoch, step, ld, lp, lr, std::nan(""));
      sd += ld;
      sp += lp;
      sr += lr;
      ++batches;
      ++step;
      if (c.max_steps > 0 && step >= c.max_steps) {
        capped = true;
        break;
      }
    }
    const double val = validation_mse(m, f_val, Y_val);
    const double k = static_cast<double>(batches);
    rep.epochs.push_back({epoch, sd / k, sp / k, sr / k, val});
    emit(log, epoch, step, sd / k, sp / k, sr / k, val);
    if (std::isnan(val)) continue;
    if (val < best) {
      best = val;
      rep.best_epoch = epoch;
      best_params = snapshot(params);
      bad = 0;
    } else if (++bad >= c.patience) {
      break;
    }
  }
  if (!best_params.empty()) {
    restore(params, best_params);
    rep.best_val_mse = best;
  }
  return rep;
}

double reconstruction_mse(const Model& m, const Tensor& images) {
  ag::NoGradGuard ng;
  double se = 0;
  const std::size_t n = images.dim(0);
  for (std::size_t b = 0; b < n; b += 64) {
    std::vector<std::size_t> idx(std::min<std::size_t>(64, n - b));
    std::iota(idx.begin(), idx.end(), b);
    Tensor img = take_rows(images, idx);
    auto rec = m.vae.decode(m.vae.encode(ag::constant(img)).mean);
    se += ag::mse_loss(rec, ag::constant(img)).item() * static_cast<double>(idx.size());
  }
  return se / static_cast<double>(n);
}

VaeReport pretrain_vae(Model& m, const data::WindowSet& train_set, const data::WindowSet& val_set, std::ostream* log) {
  const Config& c = m.config();
  VaeReport rep;
  if (c.vae_epochs == 0) return rep;
  if (train_set.size() == 0) throw ValidationError("training split has no windows");
  m.set_vae_trainable(true);
  Tensor train_img = image_sample(m, train_set, c.vae_images, 0);
  // Without a validation split the check falls back to other training windows.
  Tensor val_img = val_set.size() > 0 ? image_sample(m, val_set, std::max<std::size_t>(1, c.vae_images / 4), 0)
                                      : image_sample(m, train_set, std::max<std::size_t>(1, c.vae_images / 4),
                                                     std::max<std::size_t>(1, train_set.size() / c.vae_images / 2));

  auto params = m.vae.parameters();
  Adam opt(params, AdamConfig{c.vae_lr});
  const RngStream shuffle_base(c.seed, "vae.shuffle"), noise_base(c.seed, "vae.noise");
  const std::size_t n = train_img.dim(0), bs = c.vae_batch_size;
  double best = std::numeric_limits<double>::infinity();
  std::vector<Tensor> best_params = snapshot(params);
  std::size_t bad = 0, step = 0;
  if (log) *log << "vae_epoch,train_loss,val_mse\n";
  for (std::size_t epoch = 1; epoch <= c.vae_epochs; ++epoch) {
    auto order = shuffled(n, shuffle_base.fork(epoch));
    double total = 0;
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n; b += bs, ++step, ++batches) {
      std::span<const std::size_t> idx(order.data() + b, std::min(bs, n - b));
      ag::Var img = ag::constant(take_rows(train_img, idx));
      RngStream rng = noise_base.fork(step);
      auto enc = m.vae.encode(img, rng.normal_tensor(latent_shape(m, idx.size())));
      ag::Var loss = ag::mse_loss(m.vae.decode_raw(enc.sample), img) + nn::Vae::kl(enc) * c.vae_kl_weight;
      if (!std::isfinite(loss.item())) {
        restore(params, best_params);
        throw TrainingError("VAE loss diverged at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + "; last good parameters restored");
      }
      opt.zero_grad();
      ag::backward(loss);
      opt.step();
      total += loss.item();
    }
    const double val = reconstruction_mse(m, val_img);
    rep.train_loss.push_back(total / static_cast<double>(batches));
    rep.val_mse.push_back(val);
    if (log) *log << epoch << ',' << csv_num(rep.train_loss.back()) << ',' << csv_num(val) << '\n';
    if (val < best) {
      best = val;
      best_params = snapshot(params);
      bad = 0;
    } else if (++bad >= c.vae_patience) {
      break;
    }
  }
  restore(params, best_params);
  rep.best_val_mse = best;
  m.set_vae_trainable(!c.freeze_ldm);
  return rep;
}

Tensor sample_latents(const Model& m, const data::WindowSet& ws, std::size_t max_windows, std::size_t offset) {
  auto idx = evenly_spaced(ws.size(), max_windows, offset);
  std::vector<Tensor> parts;
  ag::NoGradGuard ng;
  for (std::size_t b = 0; b < idx.size(); b += 64) {
    std::span<const std::size_t> part(idx.data() + b, std::min<std::size_t>(64, idx.size() - b));
    Tensor img = window_images(m, ws.batch(part).X);
    parts.push_back(m.vae.encode(ag::constant(img)).mean.value());
  }
  return cat_rows(parts);
}

double calibrate_latent_scale(Model& m, const data::WindowSet& ws, std::size_t max_windows) {
  m.latent_scale = diffusion::calibrate_scale(sample_latents(m, ws, max_windows));
  return m.latent_scale;
}

FitReport fit(Model& m, const data::Splits& s, std::ostream* log) {
  FitReport rep;
  rep.vae = pretrain_vae(m, s.train, s.val, log);
  if (m.config().calibrate_scale) calibrate_latent_scale(m, s.train);
  rep.latent_scale = m.latent_scale;
  m.set_vae_trainable(!m.config().freeze_ldm);
  rep.train = train(m, s.train, s.val, log);
  return rep;
}

}  // namespace ldm4ts::pipeline
