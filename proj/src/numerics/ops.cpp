#include "ldm4ts/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/fft.hpp"
#include "ldm4ts/numerics/gemm.hpp"
#include "ldm4ts/numerics/resize.hpp"

namespace ldm4ts::ag {

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // per output axis, 0 where broadcast
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

Broadcast broadcast(const Shape& a, const Shape& b) {
  const std::size_t r = std::max(a.size(), b.size());
  Broadcast bc;
  bc.out.assign(r, 1);
  bc.stride_a.assign(r, 0);
  bc.stride_b.assign(r, 0);
  const auto sa = strides_of(a);
  const auto sb = strides_of(b);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t ia = i + a.size() >= r ? i + a.size() - r : SIZE_MAX;
    const std::size_t ib = i + b.size() >= r ? i + b.size() - r : SIZE_MAX;
    const std::size_t da = ia == SIZE_MAX ? 1 : a[ia];
    const std::size_t db = ib == SIZE_MAX ? 1 : b[ib];
    if (da != db && da != 1 && db != 1) {
      throw DimensionError("cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    bc.out[i] = std::max(da, db);
    if (da == db && da == 0) bc.out[i] = 0;
    bc.stride_a[i] = (ia == SIZE_MAX || da == 1) ? 0 : sa[ia];
    bc.stride_b[i] = (ib == SIZE_MAX || db == 1) ? 0 : sb[ib];
  }
  return bc;
}

// Calls f(out_index, a_offset, b_offset) over the broadcast output.
template <class F>
void for_each_bcast(const Broadcast& bc, F&& f) {
  const std::size_t n = shape_numel(bc.out);
  const std::size_t r = bc.out.size();
  if (n == 0) return;
  std::vector<std::size_t> idx(r, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t o = 0; o < n; ++o) {
    f(o, ia, ib);
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      ia += bc.stride_a[ax];
      ib += bc.stride_b[ax];
      if (idx[ax] < bc.out[ax]) break;
      ia -= bc.stride_a[ax] * idx[ax];
      ib -= bc.stride_b[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <class Fwd, class Da, class Db>
Var binary(const Var& a, const Var& b, const char* name, Fwd fwd, Da da, Db db) {
  const Tensor& va = a.value();
  const Tensor& vb = b.value();
  const bool same = va.shape() == vb.shape();
  Broadcast bc = same ? Broadcast{va.shape(), {}, {}} : broadcast(va.shape(), vb.shape());
  Tensor out(bc.out);
  const double* pa = va.ptr();
  const double* pb = vb.ptr();
  double* po = out.ptr();
  if (same) {
    for (std::size_t i = 0, n = out.numel(); i < n; ++i) po[i] = fwd(pa[i], pb[i]);
  } else {
    for_each_bcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { po[o] = fwd(pa[i], pb[j]); });
  }
  return make_result(std::move(out), {a, b}, name, [bc, same, da, db](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    const double* g = self.grad.ptr();
    const double* x = na.value.ptr();
    const double* y = nb.value.ptr();
    const double* z = self.value.ptr();
    if (na.requires_grad) {
      double* ga = na.grad_buffer().ptr();
      if (same) {
        for (std::size_t i = 0, n = self.value.numel(); i < n; ++i) ga[i] += g[i] * da(x[i], y[i], z[i]);
      } else {
        for_each_bcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { ga[i] += g[o] * da(x[i], y[j], z[o]); });
      }
    }
    if (nb.requires_grad) {
      double* gb = nb.grad_buffer().ptr();
      if (same) {
        for (std::size_t i = 0, n = self.value.numel(); i < n; ++i) gb[i] += g[i] * db(x[i], y[i], z[i]);
      } else {
        for_each_bcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { gb[j] += g[o] * db(x[i], y[j], z[o]); });
      }
    }
  });
}

// Unary elementwise op; d(x, y) is dy/dx given input x and output y.
template <class Fwd, class D>
Var unary(const Var& a, const char* name, Fwd fwd, D d) {
  const Tensor& va = a.value();
  Tensor out(va.shape());
  const double* pa = va.ptr();
  double* po = out.ptr();
  for (std::size_t i = 0, n = out.numel(); i < n; ++i) po[i] = fwd(pa[i]);
  return make_result(std::move(out), {a}, name, [d](Node& self) {
    Node& na = *self.inputs[0];
    if (!na.requires_grad) return;
    double* ga = na.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    const double* x = na.value.ptr();
    const double* y = self.value.ptr();
    for (std::size_t i = 0, n = self.value.numel(); i < n; ++i) ga[i] += g[i] * d(x[i], y[i]);
  });
}

Tensor permute_tensor(const Tensor& t, const std::vector<std::size_t>& perm) {
  const Shape& in = t.shape();
  const std::size_t r = in.size();
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = in[perm[i]];
  const auto in_strides = strides_of(in);
  std::vector<std::size_t> step(r);
  for (std::size_t i = 0; i < r; ++i) step[i] = in_strides[perm[i]];
  Tensor out(out_shape);
  const std::size_t n = out.numel();
  if (n == 0) return out;
  std::vector<std::size_t> idx(r, 0);
  std::size_t off = 0;
  const double* src = t.ptr();
  double* dst = out.ptr();
  for (std::size_t o = 0; o < n; ++o) {
    dst[o] = src[off];
    for (std::size_t ax = r; ax-- > 0;) {
      ++idx[ax];
      off += step[ax];
      if (idx[ax] < out_shape[ax]) break;
      off -= step[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
  return out;
}

void check_axis(const Var& a, std::size_t axis, const char* op) {
  if (axis >= a.rank()) {
    throw DimensionError(std::string(op) + ": axis out of range for " + shape_str(a.shape()));
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit r{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void im2col(const double* x, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            double* cols) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        double* row = cols + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            row[oy * wo + ox] = (iy >= 0 && iy < static_cast<std::ptrdiff_t>(h) && ix >= 0 &&
                                 ix < static_cast<std::ptrdiff_t>(w))
                                    ? x[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)]
                                    : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t c, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo,
            double* gx) {
  for (std::size_t ci = 0; ci < c; ++ci) {
    for (std::size_t ky = 0; ky < kh; ++ky) {
      for (std::size_t kx = 0; kx < kw; ++kx) {
        const double* row = cols + ((ci * kh + ky) * kw + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w)) continue;
            gx[(ci * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Var constant(Tensor t) { return Var(std::move(t), false); }

Var add(const Var& a, const Var& b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Var sub(const Var& a, const Var& b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Var mul(const Var& a, const Var& b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Var div(const Var& a, const Var& b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double x, double y, double) { return -x / (y * y); });
}

Var neg(const Var& a) {
  return unary(a, "neg", [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Var scale(const Var& a, double c) {
  return unary(a, "scale", [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(const Var& a, double c) {
  return unary(a, "add_scalar", [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sqrt(const Var& a) {
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sin(const Var& a) {
  return unary(a, "sin", [](double x) { return std::sin(x); }, [](double x, double) { return std::cos(x); });
}

Var cos(const Var& a) {
  return unary(a, "cos", [](double x) { return std::cos(x); }, [](double x, double) { return -std::sin(x); });
}

Var tanh(const Var& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var silu(const Var& a) {
  return unary(
      a, "silu", [](double x) { return x / (1.0 + std::exp(-x)); },
      [](double x, double) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 + x * (1.0 - s));
      });
}

Var gelu(const Var& a) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double k = 0.044715;
  return unary(
      a, "gelu", [](double x) { return 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x))); },
      [](double x, double) {
        const double t = std::tanh(c * (x + k * x * x * x));
        return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * c * (1.0 + 3.0 * k * x * x);
      });
}

Var clamp(const Var& a, double lo, double hi) {
  return unary(
      a, "clamp", [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Var sum(const Var& a) {
  Tensor out = Tensor::scalar(a.value().sum());
  return make_result(std::move(out), {a}, "sum", [](Node& self) {
    Node& na = *self.inputs[0];
    if (!na.requires_grad) return;
    const double g = self.grad[0];
    double* ga = na.grad_buffer().ptr();
    for (std::size_t i = 0, n = na.value.numel(); i < n; ++i) ga[i] += g;
  });
}

Var mean(const Var& a) {
  if (a.numel() == 0) throw DimensionError("mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Var sum_axis(const Var& a, std::size_t axis, bool keepdim) {
  check_axis(a, axis, "sum_axis");
  const auto sp = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  Tensor out(out_shape);
  const double* x = a.value().ptr();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t k = 0; k < sp.n; ++k)
      for (std::size_t i = 0; i < sp.inner; ++i) out[o * sp.inner + i] += x[(o * sp.n + k) * sp.inner + i];
  return make_result(std::move(out), {a}, "sum_axis", [sp](Node& self) {
    Node& na = *self.inputs[0];
    if (!na.requires_grad) return;
    double* ga = na.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t k = 0; k < sp.n; ++k)
        for (std::size_t i = 0; i < sp.inner; ++i) ga[(o * sp.n + k) * sp.inner + i] += g[o * sp.inner + i];
  });
}

Var mean_axis(const Var& a, std::size_t axis, bool keepdim) {
  check_axis(a, axis, "mean_axis");
  return scale(sum_axis(a, axis, keepdim), 1.0 / static_cast<double>(a.dim(axis)));
}

Var matmul(const Var& a, const Var& b) {
  if (a.rank() < 2 || b.rank() < 2) throw DimensionError("matmul needs rank >= 2 operands");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  const std::size_t k = sa.back();
  if (sb[sb.size() - 2] != k) {
    throw DimensionError("matmul inner dimension mismatch: " + shape_str(sa) + " @ " + shape_str(sb));
  }
  const std::size_t n = sb.back();
  if (sb.size() == 2) {
    const std::size_t rows = a.numel() / k;
    Shape out_shape = sa;
    out_shape.back() = n;
    Tensor out(out_shape);
    gemm(a.value().ptr(), b.value().ptr(), out.ptr(), rows, k, n, false, false, false);
    return make_result(std::move(out), {a, b}, "matmul", [rows, k, n](Node& self) {
      Node& na = *self.inputs[0];
      Node& nb = *self.inputs[1];
      if (na.requires_grad) gemm(self.grad.ptr(), nb.value.ptr(), na.grad_buffer().ptr(), rows, n, k, false, true, true);
      if (nb.requires_grad) gemm(na.value.ptr(), self.grad.ptr(), nb.grad_buffer().ptr(), k, rows, n, true, false, true);
    });
  }
  if (sa.size() != sb.size() || !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
    throw DimensionError("batched matmul leading axes differ: " + shape_str(sa) + " @ " + shape_str(sb));
  }
  const std::size_t m = sa[sa.size() - 2];
  const std::size_t batch = a.numel() / (m * k);
  Shape out_shape = sa;
  out_shape.back() = n;
  Tensor out(out_shape);
  for (std::size_t i = 0; i < batch; ++i) {
    gemm(a.value().ptr() + i * m * k, b.value().ptr() + i * k * n, out.ptr() + i * m * n, m, k, n,
         false, false, false);
  }
  return make_result(std::move(out), {a, b}, "bmm", [batch, m, k, n](Node& self) {
    Node& na = *self.inputs[0];
    Node& nb = *self.inputs[1];
    for (std::size_t i = 0; i < batch; ++i) {
      const double* g = self.grad.ptr() + i * m * n;
      if (na.requires_grad)
        gemm(g, nb.value.ptr() + i * k * n, na.grad_buffer().ptr() + i * m * k, m, n, k, false, true, true);
      if (nb.requires_grad)
        gemm(na.value.ptr() + i * m * k, g, nb.grad_buffer().ptr() + i * k * n, k, m, n, true, false, true);
    }
  });
}

Var linear(const Var& x, const Var& w, const Var& b) {
  if (w.rank() != 2 || x.rank() < 1 || x.shape().back() != w.dim(0)) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(w.shape()));
  }
  const std::size_t in = w.dim(0);
  const std::size_t outf = w.dim(1);
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != outf) throw DimensionError("linear: bias size mismatch");
  const std::size_t rows = x.numel() / in;
  Shape out_shape = x.shape();
  out_shape.back() = outf;
  Tensor out(out_shape);
  gemm(x.value().ptr(), w.value().ptr(), out.ptr(), rows, in, outf, false, false, false);
  if (has_bias) {
    const double* pb = b.value().ptr();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < outf; ++j) out[r * outf + j] += pb[j];
  }
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), "linear", [rows, in, outf](Node& self) {
    Node& nx = *self.inputs[0];
    Node& nw = *self.inputs[1];
    const double* g = self.grad.ptr();
    if (nx.requires_grad) gemm(g, nw.value.ptr(), nx.grad_buffer().ptr(), rows, outf, in, false, true, true);
    if (nw.requires_grad) gemm(nx.value.ptr(), g, nw.grad_buffer().ptr(), in, rows, outf, true, false, true);
    if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
      double* gb = self.inputs[2]->grad_buffer().ptr();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < outf; ++j) gb[j] += g[r * outf + j];
    }
  });
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return make_result(std::move(out), {a}, "reshape", [](Node& self) {
    self.inputs[0]->accumulate(self.grad);
  });
}

Var permute(const Var& a, const std::vector<std::size_t>& perm) {
  if (perm.size() != a.rank()) throw DimensionError("permute: rank mismatch");
  std::vector<std::size_t> inv(perm.size());
  std::vector<bool> used(perm.size(), false);
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= perm.size() || used[perm[i]]) throw DimensionError("permute: invalid permutation");
    used[perm[i]] = true;
    inv[perm[i]] = i;
  }
  return make_result(permute_tensor(a.value(), perm), {a}, "permute", [inv](Node& self) {
    self.inputs[0]->accumulate(permute_tensor(self.grad, inv));
  });
}

Var transpose(const Var& a, std::size_t d0, std::size_t d1) {
  std::vector<std::size_t> perm(a.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  if (d0 >= perm.size() || d1 >= perm.size()) throw DimensionError("transpose: axis out of range");
  std::swap(perm[d0], perm[d1]);
  return permute(a, perm);
}

Var slice(const Var& a, std::size_t axis, std::size_t start, std::size_t len) {
  check_axis(a, axis, "slice");
  if (start + len > a.dim(axis)) throw IndexError("slice out of range on " + shape_str(a.shape()));
  const auto sp = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape[axis] = len;
  Tensor out(out_shape);
  const double* x = a.value().ptr();
  for (std::size_t o = 0; o < sp.outer; ++o)
    std::copy_n(x + (o * sp.n + start) * sp.inner, len * sp.inner, out.ptr() + o * len * sp.inner);
  return make_result(std::move(out), {a}, "slice", [sp, start, len](Node& self) {
    Node& na = *self.inputs[0];
    if (!na.requires_grad) return;
    double* ga = na.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t i = 0; i < len * sp.inner; ++i) ga[(o * sp.n + start) * sp.inner + i] += g[o * len * sp.inner + i];
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat of nothing");
  Shape out_shape = parts[0].shape();
  if (axis >= out_shape.size()) throw DimensionError("concat: axis out of range");
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw DimensionError("concat: rank mismatch");
    total += s[axis];
    s[axis] = out_shape[axis];
    if (s != out_shape) throw DimensionError("concat: shape mismatch " + shape_str(p.shape()));
  }
  out_shape[axis] = total;
  const auto sp = split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t n = p.dim(axis);
    offsets.push_back(off);
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(p.value().ptr() + o * n * sp.inner, n * sp.inner, out.ptr() + (o * total + off) * sp.inner);
    off += n;
  }
  return make_result(std::move(out), parts, "concat", [sp, total, offsets, axis](Node& self) {
    const double* g = self.grad.ptr();
    for (std::size_t pi = 0; pi < self.inputs.size(); ++pi) {
      Node& np = *self.inputs[pi];
      if (!np.requires_grad) continue;
      const std::size_t n = np.value.shape()[axis];
      double* gp = np.grad_buffer().ptr();
      for (std::size_t o = 0; o < sp.outer; ++o)
        for (std::size_t i = 0; i < n * sp.inner; ++i) gp[o * n * sp.inner + i] += g[(o * total + offsets[pi]) * sp.inner + i];
    }
  });
}

Var detach(const Var& a) { return Var(a.value(), false); }

Var softmax(const Var& a) {
  if (a.rank() < 1) throw DimensionError("softmax of scalar-less tensor");
  const std::size_t n = a.shape().back();
  const std::size_t rows = a.numel() / n;
  Tensor out(a.shape());
  const double* x = a.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * n;
    double* yr = out.ptr() + r * n;
    const double mx = *std::max_element(xr, xr + n);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += (yr[j] = std::exp(xr[j] - mx));
    for (std::size_t j = 0; j < n; ++j) yr[j] /= s;
  }
  return make_result(std::move(out), {a}, "softmax", [rows, n](Node& self) {
    Node& na = *self.inputs[0];
    if (!na.requires_grad) return;
    double* ga = na.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    const double* y = self.value.ptr();
    for (std::size_t r = 0; r < rows; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[r * n + j] * y[r * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[r * n + j] += y[r * n + j] * (g[r * n + j] - dot);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d) throw DimensionError("layer_norm: affine size mismatch");
  const std::size_t rows = x.numel() / d;
  Tensor xhat(x.shape());
  std::vector<double> inv_std(rows);
  Tensor out(x.shape());
  const double* px = x.value().ptr();
  const double* pg = gamma.value().ptr();
  const double* pb = beta.value().ptr();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * inv_std[r];
      xhat[r * d + j] = h;
      out[r * d + j] = pg[j] * h + pb[j];
    }
  }
  return make_result(std::move(out), {x, gamma, beta}, "layer_norm",
                     [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& ng = *self.inputs[1];
                       Node& nb = *self.inputs[2];
                       const double* g = self.grad.ptr();
                       const double* pg = ng.value.ptr();
                       if (ng.requires_grad || nb.requires_grad) {
                         double* gg = ng.requires_grad ? ng.grad_buffer().ptr() : nullptr;
                         double* gb = nb.requires_grad ? nb.grad_buffer().ptr() : nullptr;
                         for (std::size_t r = 0; r < rows; ++r)
                           for (std::size_t j = 0; j < d; ++j) {
                             if (gg) gg[j] += g[r * d + j] * xhat[r * d + j];
                             if (gb) gb[j] += g[r * d + j];
                           }
                       }
                       if (!nx.requires_grad) return;
                       double* gx = nx.grad_buffer().ptr();
                       for (std::size_t r = 0; r < rows; ++r) {
                         double m1 = 0.0, m2 = 0.0;
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gh = g[r * d + j] * pg[j];
                           m1 += gh;
                           m2 += gh * xhat[r * d + j];
                         }
                         m1 /= static_cast<double>(d);
                         m2 /= static_cast<double>(d);
                         for (std::size_t j = 0; j < d; ++j) {
                           const double gh = g[r * d + j] * pg[j];
                           gx[r * d + j] += inv_std[r] * (gh - m1 - xhat[r * d + j] * m2);
                         }
                       }
                     });
}

Var group_norm(const Var& x, std::size_t groups, const Var& gamma, const Var& beta, double eps) {
  if (x.rank() != 4) throw DimensionError("group_norm expects [B, C, H, W]");
  const std::size_t bsz = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (groups == 0 || c % groups != 0) throw ConfigError("group_norm: groups must divide channels");
  if (gamma.numel() != c || beta.numel() != c) throw DimensionError("group_norm: affine size mismatch");
  const std::size_t cpg = c / groups;
  const std::size_t gsize = cpg * hw;
  Tensor xhat(x.shape());
  std::vector<double> inv_std(bsz * groups);
  Tensor out(x.shape());
  const double* px = x.value().ptr();
  const double* pg = gamma.value().ptr();
  const double* pb = beta.value().ptr();
  for (std::size_t b = 0; b < bsz; ++b) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (b * c + g * cpg) * hw;
      double mu = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) mu += px[base + i];
      mu /= static_cast<double>(gsize);
      double var = 0.0;
      for (std::size_t i = 0; i < gsize; ++i) var += (px[base + i] - mu) * (px[base + i] - mu);
      var /= static_cast<double>(gsize);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[b * groups + g] = is;
      for (std::size_t i = 0; i < gsize; ++i) {
        const std::size_t ch = g * cpg + i / hw;
        const double h = (px[base + i] - mu) * is;
        xhat[base + i] = h;
        out[base + i] = pg[ch] * h + pb[ch];
      }
    }
  }
  return make_result(
      std::move(out), {x, gamma, beta}, "group_norm",
      [xhat = std::move(xhat), inv_std = std::move(inv_std), bsz, c, hw, groups, cpg, gsize](Node& self) {
        Node& nx = *self.inputs[0];
        Node& ng = *self.inputs[1];
        Node& nb = *self.inputs[2];
        const double* g = self.grad.ptr();
        const double* pg = ng.value.ptr();
        if (ng.requires_grad || nb.requires_grad) {
          double* gg = ng.requires_grad ? ng.grad_buffer().ptr() : nullptr;
          double* gb = nb.requires_grad ? nb.grad_buffer().ptr() : nullptr;
          for (std::size_t b = 0; b < bsz; ++b)
            for (std::size_t ch = 0; ch < c; ++ch)
              for (std::size_t i = 0; i < hw; ++i) {
                const std::size_t k = (b * c + ch) * hw + i;
                if (gg) gg[ch] += g[k] * xhat[k];
                if (gb) gb[ch] += g[k];
              }
        }
        if (!nx.requires_grad) return;
        double* gx = nx.grad_buffer().ptr();
        for (std::size_t b = 0; b < bsz; ++b) {
          for (std::size_t gr = 0; gr < groups; ++gr) {
            const std::size_t base = (b * c + gr * cpg) * hw;
            double m1 = 0.0, m2 = 0.0;
            for (std::size_t i = 0; i < gsize; ++i) {
              const double gh = g[base + i] * pg[gr * cpg + i / hw];
              m1 += gh;
              m2 += gh * xhat[base + i];
            }
            m1 /= static_cast<double>(gsize);
            m2 /= static_cast<double>(gsize);
            const double is = inv_std[b * groups + gr];
            for (std::size_t i = 0; i < gsize; ++i) {
              const double gh = g[base + i] * pg[gr * cpg + i / hw];
              gx[base + i] += is * (gh - m1 - xhat[base + i] * m2);
            }
          }
        }
      });
}

Var conv2d(const Var& x, const Var& w, const Var& b, std::size_t stride, std::size_t pad) {
  if (x.rank() != 4 || w.rank() != 4) throw DimensionError("conv2d expects 4-D input and weight");
  const std::size_t bsz = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != c) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(x.shape()) + " weight " +
                         shape_str(w.shape()));
  }
  if (stride == 0 || h + 2 * pad < kh || wd + 2 * pad < kw) throw DimensionError("conv2d: invalid geometry");
  const bool has_bias = b.defined();
  if (has_bias && b.numel() != o) throw DimensionError("conv2d: bias size mismatch");
  const std::size_t ho = (h + 2 * pad - kh) / stride + 1;
  const std::size_t wo = (wd + 2 * pad - kw) / stride + 1;
  const std::size_t ckk = c * kh * kw;
  const std::size_t hwo = ho * wo;
  const bool pointwise = kh == 1 && kw == 1 && stride == 1 && pad == 0;
  Tensor out({bsz, o, ho, wo});
  std::vector<double> cols(pointwise ? 0 : ckk * hwo);
  for (std::size_t n = 0; n < bsz; ++n) {
    const double* xn = x.value().ptr() + n * c * h * wd;
    const double* src = xn;
    if (!pointwise) {
      im2col(xn, c, h, wd, kh, kw, stride, pad, ho, wo, cols.data());
      src = cols.data();
    }
    double* on = out.ptr() + n * o * hwo;
    gemm(w.value().ptr(), src, on, o, ckk, hwo, false, false, false);
    if (has_bias) {
      for (std::size_t oc = 0; oc < o; ++oc) {
        const double bv = b.value()[oc];
        for (std::size_t i = 0; i < hwo; ++i) on[oc * hwo + i] += bv;
      }
    }
  }
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return make_result(std::move(out), std::move(inputs), "conv2d",
                     [=](Node& self) {
                       Node& nx = *self.inputs[0];
                       Node& nw = *self.inputs[1];
                       std::vector<double> col(pointwise ? 0 : ckk * hwo);
                       std::vector<double> gcol(pointwise ? 0 : ckk * hwo);
                       for (std::size_t n = 0; n < bsz; ++n) {
                         const double* g = self.grad.ptr() + n * o * hwo;
                         const double* xn = nx.value.ptr() + n * c * h * wd;
                         if (nw.requires_grad) {
                           const double* src = xn;
                           if (!pointwise) {
                             im2col(xn, c, h, wd, kh, kw, stride, pad, ho, wo, col.data());
                             src = col.data();
                           }
                           gemm(g, src, nw.grad_buffer().ptr(), o, hwo, ckk, false, true, true);
                         }
                         if (nx.requires_grad) {
                           double* gx = nx.grad_buffer().ptr() + n * c * h * wd;
                           if (pointwise) {
                             gemm(nw.value.ptr(), g, gx, ckk, o, hwo, true, false, true);
                           } else {
                             gemm(nw.value.ptr(), g, gcol.data(), ckk, o, hwo, true, false, false);
                             col2im(gcol.data(), c, h, wd, kh, kw, stride, pad, ho, wo, gx);
                           }
                         }
                       }
                       if (self.inputs.size() > 2 && self.inputs[2]->requires_grad) {
                         double* gb = self.inputs[2]->grad_buffer().ptr();
                         const double* g = self.grad.ptr();
                         for (std::size_t n = 0; n < bsz; ++n)
                           for (std::size_t oc = 0; oc < o; ++oc)
                             for (std::size_t i = 0; i < hwo; ++i) gb[oc] += g[(n * o + oc) * hwo + i];
                       }
                     });
}

Var upsample_nearest2x(const Var& x) {
  if (x.rank() != 4) throw DimensionError("upsample expects [B, C, H, W]");
  const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
  Tensor out({x.dim(0), x.dim(1), 2 * h, 2 * w});
  const double* px = x.value().ptr();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t i = 0; i < 2 * h; ++i)
      for (std::size_t j = 0; j < 2 * w; ++j) out[(p * 2 * h + i) * 2 * w + j] = px[(p * h + i / 2) * w + j / 2];
  return make_result(std::move(out), {x}, "upsample", [planes, h, w](Node& self) {
    Node& nx = *self.inputs[0];
    if (!nx.requires_grad) return;
    double* gx = nx.grad_buffer().ptr();
    const double* g = self.grad.ptr();
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < 2 * h; ++i)
        for (std::size_t j = 0; j < 2 * w; ++j) gx[(p * h + i / 2) * w + j / 2] += g[(p * 2 * h + i) * 2 * w + j];
  });
}

Var resize_bilinear(const Var& x, std::size_t h, std::size_t w) {
  const std::size_t in_h = x.shape()[x.rank() - 2];
  const std::size_t in_w = x.shape()[x.rank() - 1];
  return make_result(bilinear_resize(x.value(), h, w), {x}, "resize", [in_h, in_w](Node& self) {
    self.inputs[0]->accumulate(bilinear_resize_adjoint(self.grad, in_h, in_w));
  });
}

Var mse_loss(const Var& pred, const Var& target) {
  if (pred.shape() != target.shape()) {
    throw DimensionError("mse_loss shape mismatch: " + shape_str(pred.shape()) + " vs " +
                         shape_str(target.shape()));
  }
  return mean(square(sub(pred, target)));
}

Var fft_real(const Var& x) {
  if (x.rank() < 1 || x.shape().back() == 0) throw DimensionError("fft_real: empty input");
  const std::size_t len = x.shape().back();
  const std::size_t rows = x.numel() / len;
  Shape out_shape(x.shape().begin(), x.shape().end() - 1);
  out_shape.push_back(2);
  out_shape.push_back(len);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto s = fft_full(std::span<const double>(x.value().ptr() + r * len, len));
    std::copy_n(s.re.ptr(), len, out.ptr() + r * 2 * len);
    std::copy_n(s.im.ptr(), len, out.ptr() + r * 2 * len + len);
  }
  return make_result(std::move(out), {x}, "fft", [](Node&) {
    throw CapabilityError("fft is not a differentiable primitive");
  });
}

}  // namespace ldm4ts::ag
