#pragma once

#include <cstddef>
#include <vector>

#include "ldm4ts/numerics/autograd.hpp"

// Differentiable primitives. Binary elementwise ops follow numpy
// broadcasting over right-aligned axes.
namespace ldm4ts::ag {

Var constant(Tensor t);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var neg(const Var& a);
Var scale(const Var& a, double c);
Var add_scalar(const Var& a, double c);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }
inline Var operator-(const Var& a) { return neg(a); }
inline Var operator*(const Var& a, double c) { return scale(a, c); }
inline Var operator*(double c, const Var& a) { return scale(a, c); }
inline Var operator+(const Var& a, double c) { return add_scalar(a, c); }
inline Var operator-(const Var& a, double c) { return add_scalar(a, -c); }

Var square(const Var& a);
Var sqrt(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
Var sin(const Var& a);
Var cos(const Var& a);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var relu(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);  // tanh approximation
Var clamp(const Var& a, double lo, double hi);

Var sum(const Var& a);
Var mean(const Var& a);
Var sum_axis(const Var& a, std::size_t axis, bool keepdim = false);
Var mean_axis(const Var& a, std::size_t axis, bool keepdim = false);

// a: [..., M, K]. b: [K, N] (shared) or [..., K, N] with equal leading axes.
Var matmul(const Var& a, const Var& b);
// x: [..., in], w: [in, out], b: [out] or undefined.
Var linear(const Var& x, const Var& w, const Var& b);

Var reshape(const Var& a, Shape shape);
Var permute(const Var& a, const std::vector<std::size_t>& perm);
Var transpose(const Var& a, std::size_t d0, std::size_t d1);
Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len);
Var concat(const std::vector<Var>& parts, std::size_t axis);
Var detach(const Var& a);

Var softmax(const Var& a);  // over last axis
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// x: [B, C, H, W]; gamma/beta: [C].
Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta,
               double eps = 1e-5);
// x: [B, C, H, W], w: [O, C, kh, kw], b: [O] or undefined.
Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad);
Var upsample_nearest2x(const Var& x);
Var resize_bilinear(const Var& x, std::size_t h, std::size_t w);

Var mse_loss(const Var& pred, const Var& target);

// Full DFT over the last axis, output [..., 2, L] (re, im). Not differentiable:
// back-propagating through it raises CapabilityError.
Var fft_real(const Var& x);

}  // namespace ldm4ts::ag
