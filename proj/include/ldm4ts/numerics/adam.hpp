#pragma once

#include <cstdint>
#include <vector>

#include "ldm4ts/numerics/autograd.hpp"

namespace ldm4ts {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Bias-corrected Adam over a fixed parameter list. Moments start at zero and
// grads are cleared after every step.
class Adam {
 public:
  Adam() = default;
  Adam(std::vector<ag::Var> params, AdamConfig cfg);

  // Throws OptimizerError naming the first parameter with a non-finite grad;
  // no parameter is touched in that case.
  void step();
  void zero_grad();

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

  const std::vector<ag::Var>& params() const { return params_; }
  std::vector<Tensor>& first_moments() { return m_; }
  std::vector<Tensor>& second_moments() { return v_; }

 private:
  std::vector<ag::Var> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace ldm4ts
