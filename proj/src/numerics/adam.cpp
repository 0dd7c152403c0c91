#include "ldm4ts/numerics/adam.hpp"

#include <cmath>

#include "ldm4ts/errors.hpp"

namespace ldm4ts {

Adam::Adam(std::vector<ag::Var> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

void Adam::step() {
  for (const auto& p : params_) {
    if (p.has_grad() && !p.node()->grad.all_finite()) {
      throw OptimizerError("non-finite gradient for parameter '" + p.name() + "'");
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    ag::Var& p = params_[i];
    if (!p.has_grad()) continue;
    const double* g = p.node()->grad.ptr();
    double* w = p.mutable_value().ptr();
    double* m = m_[i].ptr();
    double* v = v_[i].ptr();
    for (std::size_t k = 0, n = p.numel(); k < n; ++k) {
      m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
      v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
      const double mh = m[k] / bc1;
      const double vh = v[k] / bc2;
      w[k] -= cfg_.lr * mh / (std::sqrt(vh) + cfg_.eps);
    }
  }
  zero_grad();
}

}  // namespace ldm4ts
