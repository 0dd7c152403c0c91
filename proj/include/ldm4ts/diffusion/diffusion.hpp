#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ldm4ts/numerics/ops.hpp"
#include "ldm4ts/numerics/rng.hpp"

namespace ldm4ts::diffusion {

enum class ScheduleKind { Linear, ScaledLinear };
enum class Sampler { Ddpm, Ddim };

ScheduleKind parse_schedule_kind(const std::string& s);
std::string to_string(ScheduleKind k);
Sampler parse_sampler(const std::string& s);
std::string to_string(Sampler s);

// Indexed by timestep t in 1..T; index 0 holds the t = 0 convention
// (alpha_bar = 1). alpha_bar(t) is defined as sqrt_ab(t)^2 so that
// alpha_bar + (1 - alpha_bar) == 1 holds for the stored values.
class NoiseSchedule {
 public:
  NoiseSchedule(std::size_t T, double beta_start, double beta_end, ScheduleKind kind);

  std::size_t T() const { return T_; }
  ScheduleKind kind() const { return kind_; }
  double beta(std::size_t t) const { return betas_.at(check(t, 1)); }
  double alpha(std::size_t t) const { return 1.0 - beta(t); }
  double sqrt_alpha_bar(std::size_t t) const { return sqrt_ab_.at(check(t, 0)); }
  double alpha_bar(std::size_t t) const { return sqrt_alpha_bar(t) * sqrt_alpha_bar(t); }
  double one_minus_alpha_bar(std::size_t t) const { return one_minus_.at(check(t, 0)); }
  double sqrt_one_minus_alpha_bar(std::size_t t) const { return sqrt_om_.at(check(t, 0)); }

 private:
  std::size_t check(std::size_t t, std::size_t lo) const;

  std::size_t T_;
  ScheduleKind kind_;
  std::vector<double> betas_, sqrt_ab_, one_minus_, sqrt_om_;
};

// Per-item coefficient tensor [B, 1, ..., 1] matching rank `rank`.
Tensor per_item(const std::vector<double>& v, std::size_t rank);

Tensor forward_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& s);
ag::Var forward_sample(const ag::Var& z0, const std::vector<std::size_t>& t, const ag::Var& eps,
                       const NoiseSchedule& s);

Tensor predict_z0(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s);
ag::Var predict_z0(const ag::Var& z_t, const std::vector<std::size_t>& t, const ag::Var& eps_hat,
                   const NoiseSchedule& s);

// Posterior standard deviation of the ancestral step; zero at t = 1.
double ddpm_sigma(std::size_t t, const NoiseSchedule& s);
Tensor ddpm_mean(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s);
Tensor ddpm_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s, const Tensor& xi);
Tensor ddpm_step(const Tensor& z_t, std::size_t t, const Tensor& eps_hat, const NoiseSchedule& s, RngStream& rng);
Tensor ddim_step(const Tensor& z_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& s);

// Descending DDIM timesteps with stride ceil(T / steps); the step after the
// last entry goes to 0.
std::vector<std::size_t> ddim_timesteps(std::size_t T, std::size_t steps);

// eps_fn(z_t, t) -> predicted noise. The condition is bound by the caller.
using EpsFn = std::function<Tensor(const Tensor& z_t, std::size_t t)>;
Tensor sample_loop(const Shape& shape, const EpsFn& eps_fn, const NoiseSchedule& s, Sampler sampler,
                   std::size_t steps, RngStream& rng);

// eps_fn(z_t, t per item) -> predicted noise with gradients.
using EpsVarFn = std::function<ag::Var(const ag::Var& z_t, const std::vector<std::size_t>& t)>;

struct DiffusionDraw {
  std::vector<std::size_t> t;
  Tensor eps;
};
DiffusionDraw draw_noise(const Shape& shape, const NoiseSchedule& s, RngStream& rng);

// Mean squared error between the drawn noise and eps_fn(z_t, t).
ag::Var diffusion_loss(const ag::Var& z0, const EpsVarFn& eps_fn, const NoiseSchedule& s, RngStream& rng);
ag::Var diffusion_loss(const ag::Var& z0, const EpsVarFn& eps_fn, const NoiseSchedule& s, const DiffusionDraw& d);

// s = 1 / std over all latent entries.
double calibrate_scale(const Tensor& latents);

}  // namespace ldm4ts::diffusion
