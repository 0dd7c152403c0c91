#pragma once

#include <complex>
#include <span>
#include <vector>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts {

struct Spectrum {
  Tensor re;
  Tensor im;
};

// Full complex DFT X_k = sum_t x_t exp(-2 pi i k t / L) of a real signal.
// Radix-2 for power-of-two lengths, Bluestein chirp-z otherwise.
Spectrum fft_full(std::span<const double> x);
Spectrum fft_full(const Tensor& x);

// In-place complex transform; inverse applies the 1/n factor.
void fft_inplace(std::vector<std::complex<double>>& a, bool inverse = false);

}  // namespace ldm4ts
