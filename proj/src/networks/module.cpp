#include "ldm4ts/networks/module.hpp"

#include <cmath>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/ops.hpp"

namespace ldm4ts::nn {

std::vector<ag::Var> Module::parameters() const {
  std::vector<ag::Var> out = params_;
  for (const Module* c : children_) {
    auto sub = c->parameters();
    out.insert(out.end(), sub.begin(), sub.end());
  }
  return out;
}

void Module::set_trainable(bool on) {
  for (auto& p : parameters()) {
    ag::Var v = p;
    v.set_trainable(on);
  }
}

ag::Var Module::add_param(const Scope& s, const std::string& leaf, Tensor value) {
  params_.push_back(ag::Var::parameter(std::move(value), s.name(leaf)));
  return params_.back();
}

Linear::Linear(const Scope& s, std::size_t in, std::size_t out, bool with_bias, Init init) {
  Tensor w({in, out});
  if (init == Init::TruncNormal) {
    w = s.rng("weight").truncated_normal_tensor({in, out}, 0.02);
  } else if (init == Init::Uniform) {
    const double k = 1.0 / std::sqrt(static_cast<double>(in));
    w = s.rng("weight").uniform_tensor({in, out}, -k, k);
  }
  weight = add_param(s, "weight", std::move(w));
  if (with_bias) bias = add_param(s, "bias", Tensor({out}));
}

Conv2d::Conv2d(const Scope& s, std::size_t in, std::size_t out, std::size_t k, std::size_t stride_,
               std::size_t pad_, bool zero_bias)
    : stride(stride_), pad(pad_) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in * k * k));
  weight = add_param(s, "weight", s.rng("weight").uniform_tensor({out, in, k, k}, -bound, bound));
  bias = add_param(s, "bias", zero_bias ? Tensor({out}) : s.rng("bias").uniform_tensor({out}, -bound, bound));
}

ag::Var Conv2d::operator()(const ag::Var& x) const { return ag::conv2d(x, weight, bias, stride, pad); }

LayerNorm::LayerNorm(const Scope& s, std::size_t dim) {
  gamma = add_param(s, "gamma", Tensor({dim}, 1.0));
  beta = add_param(s, "beta", Tensor({dim}));
}

ag::Var LayerNorm::operator()(const ag::Var& x) const { return ag::layer_norm(x, gamma, beta); }

std::size_t default_groups(std::size_t channels) {
  for (std::size_t g = 8; g > 1; --g)
    if (channels % g == 0 && channels / g >= 2) return g;
  return 1;
}

GroupNorm::GroupNorm(const Scope& s, std::size_t channels, std::size_t groups_)
    : groups(groups_ == 0 ? default_groups(channels) : groups_) {
  gamma = add_param(s, "gamma", Tensor({channels}, 1.0));
  beta = add_param(s, "beta", Tensor({channels}));
}

ag::Var GroupNorm::operator()(const ag::Var& x) const { return ag::group_norm(x, groups, gamma, beta); }

MultiHeadAttention::MultiHeadAttention(const Scope& s, std::size_t d, std::size_t h, std::size_t q_dim,
                                       std::size_t kv_dim)
    : wq(s / "q", q_dim, d), wk(s / "k", kv_dim, d), wv(s / "v", kv_dim, d), wo(s / "o", d, d),
      d_model(d), heads(h) {
  if (h == 0 || d % h != 0) {
    throw ConfigError("attention heads (" + std::to_string(h) + ") must divide model width " + std::to_string(d));
  }
  add_child(wq);
  add_child(wk);
  add_child(wv);
  add_child(wo);
}

ag::Var MultiHeadAttention::operator()(const ag::Var& q, const ag::Var& kv, Tensor* weights) const {
  if (q.rank() != 3 || kv.rank() != 3 || q.dim(0) != kv.dim(0)) {
    throw DimensionError("attention expects [B, N, dim] inputs, got " + shape_str(q.shape()) + " and " +
                         shape_str(kv.shape()));
  }
  const std::size_t B = q.dim(0), nq = q.dim(1), nk = kv.dim(1), dh = d_model / heads;
  auto split = [&](const ag::Var& x, std::size_t n) {
    return ag::permute(ag::reshape(x, {B, n, heads, dh}), {0, 2, 1, 3});  // [B, h, n, dh]
  };
  ag::Var Q = split(wq(q), nq);
  ag::Var Kt = ag::permute(ag::reshape(wk(kv), {B, nk, heads, dh}), {0, 2, 3, 1});  // [B, h, dh, nk]
  ag::Var V = split(wv(kv), nk);
  ag::Var A = ag::softmax(ag::matmul(Q, Kt) * (1.0 / std::sqrt(static_cast<double>(dh))));
  if (weights) *weights = A.value();
  ag::Var O = ag::reshape(ag::permute(ag::matmul(A, V), {0, 2, 1, 3}), {B, nq, d_model});
  return wo(O);
}

}  // namespace ldm4ts::nn
