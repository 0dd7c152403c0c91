#include <cctype>

#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/ops.hpp"
#include "ldm4ts/numerics/rng.hpp"

namespace ldm4ts::cond {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

std::size_t token_bin(std::string_view token) { return fnv1a64(token) % kHashBins; }

Tensor hash_counts(const std::vector<std::string>& prompts) {
  Tensor c({prompts.size(), kHashBins});
  for (std::size_t b = 0; b < prompts.size(); ++b) {
    const auto toks = tokenize(prompts[b]);
    if (toks.empty()) throw ValidationError("empty prompt at batch index " + std::to_string(b));
    for (const auto& t : toks) c[b * kHashBins + token_bin(t)] += 1.0;
  }
  return c;
}

TextEncoder::TextEncoder(const nn::Scope& s, std::size_t d_model)
    : proj(s / "proj", kTokenDim, d_model), norm(s / "norm", d_model),
      table_(s.rng("frozen_table").normal_tensor({kHashBins, kTokenDim})) {
  add_child(proj);
  add_child(norm);
}

Tensor TextEncoder::pooled(const std::vector<std::string>& prompts) const {
  Tensor c = hash_counts(prompts);
  const std::size_t B = prompts.size();
  Tensor out({B, kTokenDim});
  for (std::size_t b = 0; b < B; ++b) {
    double n = 0;
    for (std::size_t k = 0; k < kHashBins; ++k) n += c[b * kHashBins + k];
    for (std::size_t k = 0; k < kHashBins; ++k) {
      const double w = c[b * kHashBins + k];
      if (w == 0.0) continue;
      const double* row = table_.ptr() + k * kTokenDim;
      double* o = out.ptr() + b * kTokenDim;
      for (std::size_t j = 0; j < kTokenDim; ++j) o[j] += w * row[j];
    }
    for (std::size_t j = 0; j < kTokenDim; ++j) out[b * kTokenDim + j] /= n;
  }
  return out;
}

ag::Var TextEncoder::project(const ag::Var& pooled) const { return ag::relu(norm(proj(pooled))); }

ag::Var TextEncoder::operator()(const std::vector<std::string>& prompts) const {
  return project(ag::constant(pooled(prompts)));
}

}  // namespace ldm4ts::cond
