#include "ldm4ts/numerics/fft.hpp"

#include <cmath>
#include <numbers>

#include "ldm4ts/errors.hpp"

namespace ldm4ts {

namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n && !(n & (n - 1)); }

void radix2(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * std::numbers::pi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
    const std::size_t half = len / 2;
    // Twiddles evaluated directly rather than by repeated multiplication.
    std::vector<cd> w(half);
    for (std::size_t k = 0; k < half; ++k) {
      w[k] = cd(std::cos(ang * static_cast<double>(k)), std::sin(ang * static_cast<double>(k)));
    }
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w[k];
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
  if (inverse) {
    for (auto& v : a) v /= static_cast<double>(n);
  }
}

void bluestein(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  const double sign = inverse ? 1.0 : -1.0;
  std::vector<cd> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    // k^2 mod 2n keeps the angle argument small for long inputs.
    const auto k2 = static_cast<double>((k * k) % (2 * n));
    const double ang = sign * std::numbers::pi * k2 / static_cast<double>(n);
    chirp[k] = cd(std::cos(ang), std::sin(ang));
  }
  std::vector<cd> u(m), v(m);
  for (std::size_t k = 0; k < n; ++k) u[k] = a[k] * chirp[k];
  v[0] = std::conj(chirp[0]);
  for (std::size_t k = 1; k < n; ++k) {
    v[k] = std::conj(chirp[k]);
    v[m - k] = std::conj(chirp[k]);
  }
  radix2(u, false);
  radix2(v, false);
  for (std::size_t i = 0; i < m; ++i) u[i] *= v[i];
  radix2(u, true);
  for (std::size_t k = 0; k < n; ++k) a[k] = u[k] * chirp[k];
  if (inverse) {
    for (auto& x : a) x /= static_cast<double>(n);
  }
}

}  // namespace

void fft_inplace(std::vector<cd>& a, bool inverse) {
  if (a.empty()) throw DimensionError("fft of empty input");
  if (a.size() == 1) return;
  if (is_pow2(a.size())) {
    radix2(a, inverse);
  } else {
    bluestein(a, inverse);
  }
}

Spectrum fft_full(std::span<const double> x) {
  if (x.empty()) throw DimensionError("fft_full: empty input");
  std::vector<cd> a(x.begin(), x.end());
  fft_inplace(a, false);
  Spectrum s{Tensor({x.size()}), Tensor({x.size()})};
  for (std::size_t k = 0; k < a.size(); ++k) {
    s.re[k] = a[k].real();
    s.im[k] = a[k].imag();
  }
  return s;
}

Spectrum fft_full(const Tensor& x) { return fft_full(x.data()); }

}  // namespace ldm4ts
