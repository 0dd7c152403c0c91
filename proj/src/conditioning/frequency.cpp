#include <cmath>
#include <numbers>

#include "ldm4ts/conditioning/conditioning.hpp"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/fft.hpp"

namespace ldm4ts::cond {

std::vector<double> hann_window(std::size_t L) {
  if (L < 2) throw ConfigError("Hann window needs L >= 2, got " + std::to_string(L));
  std::vector<double> w(L);
  const double den = static_cast<double>(L - 1);
  for (std::size_t t = 0; t < L; ++t) w[t] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * static_cast<double>(t) / den));
  return w;
}

Tensor fft_encode(const Tensor& X) {
  if (X.rank() != 3) throw DimensionError("fft_encode expects B x L x D, got " + shape_str(X.shape()));
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  const auto w = hann_window(L);
  Tensor out({B, 2 * D * L});
  std::vector<double> x(L);
  for (std::size_t b = 0; b < B; ++b) {
    double* row = out.ptr() + b * 2 * D * L;
    for (std::size_t d = 0; d < D; ++d) {
      for (std::size_t t = 0; t < L; ++t) x[t] = X[(b * L + t) * D + d] * w[t];
      const Spectrum s = fft_full(x);
      for (std::size_t k = 0; k < L; ++k) {
        row[d * L + k] = s.re[k];
        row[D * L + d * L + k] = s.im[k];
      }
    }
  }
  return out;
}

}  // namespace ldm4ts::cond
