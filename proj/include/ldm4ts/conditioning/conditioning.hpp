#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ldm4ts/networks/module.hpp"
#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::cond {

// Hann taper 0.5 (1 - cos(2 pi t / (L - 1))).
std::vector<double> hann_window(std::size_t L);

// B x L x D -> B x 2DL: per feature, taper and take the full DFT; all real
// parts (feature-major) followed by all imaginary parts.
Tensor fft_encode(const Tensor& X);

struct PromptConfig {
  std::string description = "hourly multivariate sensor series";
  std::size_t seq_len = 96;
  std::size_t pred_len = 96;
};

struct PromptStats {
  double min = 0, max = 0, median = 0;
  std::string trend;  // upward, downward or flat
  std::vector<std::size_t> lags;
};

struct PromptText {
  std::string text;
  PromptStats stats;
};

// Shortest round-trip decimal, formatted the way Python's repr prints floats.
std::string python_float(double v);

PromptStats prompt_stats(std::span<const double> window, std::size_t L, std::size_t D);
std::string render_prompt(const PromptStats& s, const PromptConfig& cfg);
std::vector<PromptText> generate_prompt(const Tensor& X, const PromptConfig& cfg);

inline constexpr std::size_t kHashBins = 1024;
inline constexpr std::size_t kTokenDim = 768;

std::vector<std::string> tokenize(std::string_view text);
std::size_t token_bin(std::string_view token);
// B x kHashBins token counts.
Tensor hash_counts(const std::vector<std::string>& prompts);

// Stand-in text encoder: hashed token counts, a frozen random projection to
// kTokenDim, mean pooling, then a trainable Linear -> LayerNorm -> ReLU.
class TextEncoder : public nn::Module {
 public:
  TextEncoder(const nn::Scope& s, std::size_t d_model);

  // Mean-pooled frozen token features, B x kTokenDim.
  Tensor pooled(const std::vector<std::string>& prompts) const;
  ag::Var project(const ag::Var& pooled) const;
  ag::Var operator()(const std::vector<std::string>& prompts) const;

  const Tensor& frozen() const { return table_; }

  nn::Linear proj;
  nn::LayerNorm norm;

 private:
  Tensor table_;  // kHashBins x kTokenDim
};

struct FusionConfig {
  std::size_t d_model = 256;
  std::size_t freq_dim = 0;
  std::size_t heads = 8;
  std::size_t latent_channels = 4;
  bool uses_latent = true;
};

// c_m: a query token from MLP([c_text; c_freq]) attending over the latent
// positions of z. Without the latent the MLP output is returned directly.
class ConditionFusion : public nn::Module {
 public:
  ConditionFusion(const nn::Scope& s, const FusionConfig& cfg);

  ag::Var query(const ag::Var& c_text, const ag::Var& c_freq) const;
  // z: B x C x h x w. weights receives B x heads x 1 x hw.
  ag::Var operator()(const ag::Var& c_text, const ag::Var& c_freq, const ag::Var& z,
                     Tensor* weights = nullptr) const;

  FusionConfig cfg;
  nn::Linear fc1, fc2;
  nn::MultiHeadAttention attn;
};

}  // namespace ldm4ts::cond
