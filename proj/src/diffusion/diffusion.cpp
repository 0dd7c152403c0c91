#include "ldm4ts/diffusion/diffusion.hpp"

#include <cmath>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::diffusion {

ScheduleKind parse_schedule_kind(const std::string& s) {
  if (s == "linear") return ScheduleKind::Linear;
  if (s == "scaled_linear") return ScheduleKind::ScaledLinear;
  throw ConfigError("unknown noise schedule \"" + s + "\" (expected linear or scaled_linear)");
}

std::string to_string(ScheduleKind k) { return k == ScheduleKind::Linear ? "linear" : "scaled_linear"; }

Sampler parse_sampler(const std::string& s) {
  if (s == "ddpm") return Sampler::Ddpm;
  if (s == "ddim") return Sampler::Ddim;
  throw ConfigError("unknown sampler \"" + s + "\" (expected ddpm or ddim)");
}

std::string to_string(Sampler s) { return s == Sampler::Ddpm ? "ddpm" : "ddim"; }

NoiseSchedule::NoiseSchedule(std::size_t T, double b0, double b1, ScheduleKind kind) : T_(T), kind_(kind) {
  if (T == 0) throw ConfigError("diffusion steps T must be >= 1");
  if (!(b0 > 0.0 && b0 <= b1 && b1 < 1.0)) {
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1, got " + std::to_string(b0) + ", " +
                      std::to_string(b1));
  }
  betas_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double f = T == 1 ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    if (kind == ScheduleKind::Linear) {
      betas_[t] = t == T ? b1 : b0 + f * (b1 - b0);
    } else {
      const double r0 = std::sqrt(b0), r1 = std::sqrt(b1);
      const double r = t == T ? r1 : r0 + f * (r1 - r0);
      betas_[t] = r * r;
    }
  }
  sqrt_ab_.assign(T + 1, 1.0);
  one_minus_.assign(T + 1, 0.0);
  sqrt_om_.assign(T + 1, 0.0);
  double prod = 1.0;
  for (std::size_t t = 1; t <= T; ++t) {
    prod *= 1.0 - betas_[t];
    sqrt_ab_[t] = std::sqrt(prod);
    one_minus_[t] = 1.0 - sqrt_ab_[t] * sqrt_ab_[t];
    sqrt_om_[t] = std::sqrt(one_minus_[t]);
  }
}

std::size_t NoiseSchedule::check(std::size_t t, std::size_t lo) const {
  if (t < lo || t > T_) {
    throw IndexError("timestep " + std::to_string(t) + " outside [" + std::to_string(lo) + ", " +
                     std::to_string(T_) + "]");
  }
  return t;
}

Tensor per_item(const std::vector<double>& v, std::size_t rank) {
  Shape s(rank, 1);
  s[0] = v.size();
  return Tensor(s, v);
}

namespace {

void same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
}

std::vector<double> coeffs(const std::vector<std::size_t>& t, const std::function<double(std::size_t)>& f) {
  std::vector<double> c(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) c[i] = f(t[i]);
  return c;
}

void check_batch(const ag::Var& z, const std::vector<std::size_t>& t) {
  if (z.rank() == 0 || z.dim(0) != t.size()) {
    throw DimensionError("timestep count " + std::to_string(t.size()) + " does not match batch of " +
                         shape_str(z.shape()));
  }
}

}  // namespace

Tensor forward_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& s) {
  same_shape(z0, eps, "forward_sample");
  if (t < 1) throw IndexError("forward_sample needs t >= 1");
  const double a = s.sqrt_alpha_bar(t), b = s.sqrt_one_minus_alpha_bar(t);
  Tensor out(z0.shape());
  for (std::size_t i = 0; i < z0.numel(); ++i) out[i] = a * z0[i] + b * eps[i];
  return out;
}

ag::Var forward_sample(const ag::Var& z0, const std::vector<std::size_t>& t, const ag::Var& eps,
                       const NoiseSchedule& s) {
  check_batch(z0, t);
  for (auto ti : t)
    if (ti < 1) throw IndexError("forward_sample needs t >= 1");
  const auto a = ag::constant(per_item(coeffs(t, [&](std::size_t x) { return s.sqrt_alpha_bar(x); }), z0.rank()));
  const auto b =
      ag::constant(per_item(coeffs(t, [&](std::size_t x) { return s.sqrt_one_minus_alpha_bar(x); }), z0.rank()));
  return a * z0 + b * eps;
}

Tensor predict_z0(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s) {
  same_shape(z_t, eps_hat, "predict_z0");
  const double a = s.sqrt_alpha_bar(t), b = s.sqrt_one_minus_alpha_bar(t);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < z_t.numel(); ++i) out[i] = (z_t[i] - b * eps_hat[i]) / a;
  return out;
}

ag::Var predict_z0(const ag::Var& z_t, const std::vector<std::size_t>& t, const ag::Var& eps_hat,
                   const NoiseSchedule& s) {
  check_batch(z_t, t);
  const auto inv_a =
      ag::constant(per_item(coeffs(t, [&](std::size_t x) { return 1.0 / s.sqrt_alpha_bar(x); }), z_t.rank()));
  const auto b =
      ag::constant(per_item(coeffs(t, [&](std::size_t x) { return s.sqrt_one_minus_alpha_bar(x); }), z_t.rank()));
  return (z_t - b * eps_hat) * inv_a;
}

double ddpm_sigma(std::size_t t, const NoiseSchedule& s) {
  if (t == 1) return 0.0;
  return std::sqrt(s.one_minus_alpha_bar(t - 1) / s.one_minus_alpha_bar(t) * s.beta(t));
}

Tensor ddpm_mean(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s) {
  same_shape(z_t, eps_hat, "ddpm_step");
  const double inv = 1.0 / std::sqrt(s.alpha(t));
  const double c = s.beta(t) / s.sqrt_one_minus_alpha_bar(t);
  Tensor out(z_t.shape());
  for (std::size_t i = 0; i < z_t.numel(); ++i) out[i] = inv * (z_t[i] - c * eps_hat[i]);
  return out;
}

Tensor ddpm_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s, const Tensor& xi) {
  Tensor out = ddpm_mean(z_t, t, eps_hat, s);
  const double sigma = ddpm_sigma(t, s);
  if (sigma == 0.0) return out;
  same_shape(z_t, xi, "ddpm_step noise");
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] += sigma * xi[i];
  return out;
}

Tensor ddpm_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s, RngStream& rng) {
  if (t == 1) return ddpm_mean(z_t, t, eps_hat, s);
  return ddpm_step(z_t, t, eps_hat, s, rng.normal_tensor(z_t.shape()));
}

Tensor ddim_step(const Tensor& z_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& s) {
  if (t_prev >= t || t > s.T()) {
    throw IndexError("ddim_step needs 0 <= t_prev < t <= T, got t=" + std::to_string(t) +
                     ", t_prev=" + std::to_string(t_prev));
  }
  Tensor out = predict_z0(z_t, t, eps_hat, s);
  const double a = s.sqrt_alpha_bar(t_prev), b = s.sqrt_one_minus_alpha_bar(t_prev);
  if (t_prev == 0) return out;
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a * out[i] + b * eps_hat[i];
  return out;
}

std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t steps) {
  if (steps == 0 || steps > T) {
    throw ConfigError("sampling steps must be in [1, " + std::to_string(T) + "], got " + std::to_string(steps));
  }
  const std::size_t stride = (T + steps - 1) / steps;
  std::vector<std::size_t> ts;
  for (std::size_t t = T; t > 0 && ts.size() < steps; t = t > stride ? t - stride : 0) ts.push_back(t);
  return ts;
}

Tensor sample_loop(const Shape& shape, const EpsFn& eps_fn, const NoiseSchedule& s, Sampler sampler,
                   std::size_t steps, RngStream& rng) {
  ag::NoGradGuard ng;
  Tensor z = rng.normal_tensor(shape);
  if (sampler == Sampler::Ddim) {
    const auto ts = ddim_timesteps(s.T(), steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::size_t t_prev = i + 1 < ts.size() ? ts[i + 1] : 0;
      z = ddim_step(z, ts[i], t_prev, eps_fn(z, ts[i]), s);
    }
    return z;
  }
  for (std::size_t t = s.T(); t >= 1; --t) z = ddpm_step(z, t, eps_fn(z, t), s, rng);
  return z;
}

DiffusionDraw draw_noise(const Shape& shape, const NoiseSchedule& s, RngStream& rng) {
  DiffusionDraw d;
  d.t.resize(shape.at(0));
  for (auto& t : d.t) t = static_cast<std::size_t>(rng.uniform_int(1, static_cast<std::int64_t>(s.T())));
  d.eps = rng.normal_tensor(shape);
  return d;
}

ag::Var diffusion_loss(const ag::Var& z0, const EpsVarFn& eps_fn, const NoiseSchedule& s, const DiffusionDraw& d) {
  const ag::Var eps = ag::constant(d.eps);
  const ag::Var z_t = forward_sample(z0, d.t, eps, s);
  return ag::mse_loss(eps_fn(z_t, d.t), eps);
}

ag::Var diffusion_loss(const ag::Var& z0, const EpsVarFn& eps_fn, const NoiseSchedule& s, RngStream& rng) {
  return diffusion_loss(z0, eps_fn, s, draw_noise(z0.shape(), s, rng));
}

double calibrate_scale(const Tensor& latents) {
  if (latents.numel() < 2) throw CalibrationError("scale calibration needs at least 2 latent values");
  const double n = static_cast<double>(latents.numel());
  const double mu = latents.sum() / n;
  double var = 0.0;
  for (double v : latents.data()) var += (v - mu) * (v - mu);
  var /= n;
  if (!(var > 0.0) || !std::isfinite(var)) throw CalibrationError("latent sample has zero or non-finite variance");
  return 1.0 / std::sqrt(var);
}

}  // namespace ldm4ts::diffusion
