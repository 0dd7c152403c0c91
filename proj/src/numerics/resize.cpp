#include "ldm4ts/numerics/resize.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "ldm4ts/errors.hpp"

namespace ldm4ts {

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double w;  // weight of hi
};

std::vector<Tap> taps(std::size_t in, std::size_t out) {
  std::vector<Tap> t(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    t[i] = {lo, hi, src - static_cast<double>(lo)};
  }
  return t;
}

void check_dims(const Tensor& img, std::size_t h, std::size_t w) {
  if (img.rank() < 2) throw DimensionError("bilinear_resize needs at least 2 axes");
  if (img.shape()[img.rank() - 2] == 0 || img.shape()[img.rank() - 1] == 0 || h == 0 || w == 0) {
    throw DimensionError("bilinear_resize: zero-sized dimension");
  }
}

}  // namespace

Tensor bilinear_resize(const Tensor& img, std::size_t out_h, std::size_t out_w) {
  check_dims(img, out_h, out_w);
  const std::size_t r = img.shape()[img.rank() - 2];
  const std::size_t c = img.shape()[img.rank() - 1];
  const std::size_t batch = img.numel() / (r * c);
  Shape out_shape = img.shape();
  out_shape[out_shape.size() - 2] = out_h;
  out_shape[out_shape.size() - 1] = out_w;
  if (r == out_h && c == out_w) return img.reshaped(out_shape);

  const auto ty = taps(r, out_h);
  const auto tx = taps(c, out_w);
  Tensor out(out_shape);
  const double* src = img.ptr();
  double* dst = out.ptr();
  for (std::size_t b = 0; b < batch; ++b) {
    const double* s = src + b * r * c;
    double* d = dst + b * out_h * out_w;
    for (std::size_t i = 0; i < out_h; ++i) {
      const Tap& y = ty[i];
      for (std::size_t j = 0; j < out_w; ++j) {
        const Tap& x = tx[j];
        const double top = s[y.lo * c + x.lo] * (1.0 - x.w) + s[y.lo * c + x.hi] * x.w;
        const double bot = s[y.hi * c + x.lo] * (1.0 - x.w) + s[y.hi * c + x.hi] * x.w;
        d[i * out_w + j] = top * (1.0 - y.w) + bot * y.w;
      }
    }
  }
  return out;
}

Tensor bilinear_resize_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  check_dims(grad_out, in_h, in_w);
  const std::size_t oh = grad_out.shape()[grad_out.rank() - 2];
  const std::size_t ow = grad_out.shape()[grad_out.rank() - 1];
  const std::size_t batch = grad_out.numel() / (oh * ow);
  Shape in_shape = grad_out.shape();
  in_shape[in_shape.size() - 2] = in_h;
  in_shape[in_shape.size() - 1] = in_w;
  if (oh == in_h && ow == in_w) return grad_out.reshaped(in_shape);

  const auto ty = taps(in_h, oh);
  const auto tx = taps(in_w, ow);
  Tensor g(in_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    const double* go = grad_out.ptr() + b * oh * ow;
    double* gi = g.ptr() + b * in_h * in_w;
    for (std::size_t i = 0; i < oh; ++i) {
      const Tap& y = ty[i];
      for (std::size_t j = 0; j < ow; ++j) {
        const Tap& x = tx[j];
        const double v = go[i * ow + j];
        gi[y.lo * in_w + x.lo] += v * (1.0 - y.w) * (1.0 - x.w);
        gi[y.lo * in_w + x.hi] += v * (1.0 - y.w) * x.w;
        gi[y.hi * in_w + x.lo] += v * y.w * (1.0 - x.w);
        gi[y.hi * in_w + x.hi] += v * y.w * x.w;
      }
    }
  }
  return g;
}

}  // namespace ldm4ts
