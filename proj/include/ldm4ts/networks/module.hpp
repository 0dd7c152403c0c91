#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ldm4ts/numerics/ops.hpp"
#include "ldm4ts/numerics/rng.hpp"

namespace ldm4ts::nn {

// Naming and seeding context: parameter "path.leaf" is initialized from
// RngStream(seed, "path.leaf"), so values do not depend on build order.
struct Scope {
  std::uint64_t seed = 0;
  std::string path;

  Scope operator/(const std::string& child) const { return {seed, path.empty() ? child : path + "." + child}; }
  std::string name(const std::string& leaf) const { return path.empty() ? leaf : path + "." + leaf; }
  RngStream rng(const std::string& leaf) const { return RngStream(seed, name(leaf)); }
};

class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  // Own parameters first, then children in registration order.
  std::vector<ag::Var> parameters() const;
  void set_trainable(bool on);

 protected:
  ag::Var add_param(const Scope& s, const std::string& leaf, Tensor value);
  void add_child(Module& child) { children_.push_back(&child); }

 private:
  std::vector<ag::Var> params_;
  std::vector<Module*> children_;
};

enum class Init { TruncNormal, Uniform, Zero };

// y = x W + b with W stored [in, out].
class Linear : public Module {
 public:
  Linear(const Scope& s, std::size_t in, std::size_t out, bool bias = true, Init init = Init::TruncNormal);
  ag::Var operator()(const ag::Var& x) const { return ag::linear(x, weight, bias); }

  ag::Var weight, bias;
};

class Conv2d : public Module {
 public:
  // Weights and bias uniform in +-1/sqrt(fan_in) unless zero_bias.
  Conv2d(const Scope& s, std::size_t in, std::size_t out, std::size_t k, std::size_t stride = 1,
         std::size_t pad = 0, bool zero_bias = false);
  ag::Var operator()(const ag::Var& x) const;

  ag::Var weight, bias;
  std::size_t stride, pad;
};

class LayerNorm : public Module {
 public:
  LayerNorm(const Scope& s, std::size_t dim);
  ag::Var operator()(const ag::Var& x) const;

  ag::Var gamma, beta;
};

class GroupNorm : public Module {
 public:
  GroupNorm(const Scope& s, std::size_t channels, std::size_t groups = 0);  // 0: auto
  ag::Var operator()(const ag::Var& x) const;

  ag::Var gamma, beta;
  std::size_t groups;
};

// Largest group count <= 8 dividing `channels` with at least two channels
// per group; one-channel groups would erase per-channel additive inputs
// such as the timestep embedding.
std::size_t default_groups(std::size_t channels);

// Scaled dot-product attention with `heads` heads over model width d.
class MultiHeadAttention : public Module {
 public:
  MultiHeadAttention(const Scope& s, std::size_t d_model, std::size_t heads, std::size_t q_dim,
                     std::size_t kv_dim);
  // q: [B, Nq, q_dim], kv: [B, Nk, kv_dim] -> [B, Nq, d_model]. When weights
  // is non-null it receives the attention probabilities [B, heads, Nq, Nk].
  ag::Var operator()(const ag::Var& q, const ag::Var& kv, Tensor* weights = nullptr) const;

  Linear wq, wk, wv, wo;
  std::size_t d_model, heads;
};

}  // namespace ldm4ts::nn
