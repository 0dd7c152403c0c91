#include "ldm4ts/vision/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/parallel.hpp"
#include "ldm4ts/numerics/resize.hpp"

namespace ldm4ts::vision {

namespace {

struct Dims {
  std::size_t B, L, D;
};

Dims window_dims(const Tensor& X) {
  if (X.rank() != 3 || X.numel() == 0) {
    throw DimensionError("expected a non-empty B x L x D window tensor, got " + shape_str(X.shape()));
  }
  return {X.dim(0), X.dim(1), X.dim(2)};
}

std::vector<double> column(const Tensor& X, std::size_t b, std::size_t d) {
  const std::size_t L = X.dim(1), D = X.dim(2);
  std::vector<double> x(L);
  for (std::size_t t = 0; t < L; ++t) x[t] = X[(b * L + t) * D + d];
  return x;
}

void check_image_size(const VisionConfig& cfg) {
  if (cfg.height == 0 || cfg.width == 0) throw ConfigError("image size must be positive");
}

}  // namespace

std::vector<double> minmax_normalize(std::span<const double> x, double eps) {
  if (x.empty()) return {};
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  const double mn = *lo, den = *hi - *lo + eps;
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - mn) / den;
  return out;
}

Tensor seg_grid(std::span<const double> x, std::size_t period) {
  if (period == 0) throw ConfigError("period must be >= 1");
  const std::size_t L = x.size();
  const std::size_t pad = (period - L % period) % period;
  const std::size_t rows = (L + pad) / period;
  Tensor g({rows, period});
  std::copy(x.begin(), x.end(), g.ptr() + pad);
  return g;
}

Tensor seg_encode(const Tensor& X, const VisionConfig& cfg) {
  const auto [B, L, D] = window_dims(X);
  check_image_size(cfg);
  Tensor out({B, cfg.height, cfg.width});
  const std::size_t hw = cfg.height * cfg.width;
  parallel_for(B, [&](std::size_t b) {
    for (std::size_t d = 0; d < D; ++d) {
      Tensor img = bilinear_resize(seg_grid(column(X, b, d), cfg.period), cfg.height, cfg.width);
      const auto psi = minmax_normalize(img.data(), cfg.eps);
      for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] += psi[i];
    }
    for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] /= static_cast<double>(D);
  });
  return out;
}

Tensor gaf_matrix(std::span<const double> window, std::size_t L, std::size_t D, const VisionConfig& cfg) {
  if (window.size() != L * D || L == 0) throw DimensionError("gaf_matrix: window size mismatch");
  Tensor G({L, L});
  std::vector<double> x(L), theta(L);
  for (std::size_t d = 0; d < D; ++d) {
    for (std::size_t t = 0; t < L; ++t) x[t] = window[t * D + d];
    const auto xt = minmax_normalize(x, cfg.eps);
    for (std::size_t t = 0; t < L; ++t) theta[t] = std::acos(std::clamp(xt[t], 0.0, 1.0));
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = 0; j < L; ++j)
        G[i * L + j] += cfg.gaf == GafVariant::Summation ? std::cos(theta[i] + theta[j])
                                                         : std::cos(theta[i] - theta[j]);
  }
  for (auto& v : G.vec()) v /= static_cast<double>(D);
  return G;
}

Tensor gaf_encode(const Tensor& X, const VisionConfig& cfg) {
  const auto [B, L, D] = window_dims(X);
  check_image_size(cfg);
  const std::size_t hw = cfg.height * cfg.width;
  Tensor out({B, cfg.height, cfg.width});
  parallel_for(B, [&](std::size_t b) {
    Tensor G = gaf_matrix(std::span<const double>(X.ptr() + b * L * D, L * D), L, D, cfg);
    Tensor img = bilinear_resize(G, cfg.height, cfg.width);
    for (std::size_t i = 0; i < hw; ++i) out[b * hw + i] = (img[i] + 1.0) * 0.5;
  });
  return out;
}

Tensor rp_matrix(std::span<const double> window, std::size_t L, std::size_t D, const VisionConfig& cfg) {
  if (window.size() != L * D || L == 0) throw DimensionError("rp_matrix: window size mismatch");
  std::size_t m = 1, tau = 1;
  if (cfg.rp == RpVariant::Heaviside) {
    m = cfg.rp_embed;
    tau = cfg.rp_delay;
    if (m == 0 || tau == 0 || (m - 1) * tau >= L) {
      throw ConfigError("recurrence embedding m=" + std::to_string(m) + ", tau=" + std::to_string(tau) +
                        " does not fit a window of length " + std::to_string(L));
    }
  }
  const std::size_t n = L - (m - 1) * tau;
  Tensor dist2({n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < m; ++k)
        for (std::size_t d = 0; d < D; ++d) {
          const double e = window[(i + k * tau) * D + d] - window[(j + k * tau) * D + d];
          s += e * e;
        }
      dist2[i * n + j] = dist2[j * n + i] = s;
    }
  Tensor R({n, n});
  if (cfg.rp == RpVariant::Gaussian) {
    // Floor at the smallest normal double so far-apart points stay inside (0, 1].
    for (std::size_t i = 0; i < n * n; ++i)
      R[i] = std::max(std::exp(-0.5 * dist2[i]), std::numeric_limits<double>::min());
    return R;
  }
  double eps_rp = cfg.rp_threshold;
  if (eps_rp < 0) {
    std::vector<double> d;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) d.push_back(std::sqrt(dist2[i * n + j]));
    if (d.empty()) {
      eps_rp = 0.0;
    } else {
      std::sort(d.begin(), d.end());
      const std::size_t h = d.size() / 2;
      eps_rp = d.size() % 2 ? d[h] : 0.5 * (d[h - 1] + d[h]);
    }
  }
  for (std::size_t i = 0; i < n * n; ++i) R[i] = std::sqrt(dist2[i]) <= eps_rp ? 1.0 : 0.0;
  return R;
}

Tensor rp_encode(const Tensor& X, const VisionConfig& cfg) {
  const auto [B, L, D] = window_dims(X);
  check_image_size(cfg);
  const std::size_t hw = cfg.height * cfg.width;
  Tensor out({B, cfg.height, cfg.width});
  parallel_for(B, [&](std::size_t b) {
    Tensor R = rp_matrix(std::span<const double>(X.ptr() + b * L * D, L * D), L, D, cfg);
    Tensor img = bilinear_resize(R, cfg.height, cfg.width);
    std::copy_n(img.ptr(), hw, out.ptr() + b * hw);
  });
  return out;
}

Tensor compose_image(const Tensor& seg, const Tensor& gaf, const Tensor& rp) {
  if (seg.rank() != 3 || seg.shape() != gaf.shape() || seg.shape() != rp.shape()) {
    throw DimensionError("compose_image: channel shapes differ or are not B x H x W");
  }
  const std::size_t B = seg.dim(0), hw = seg.dim(1) * seg.dim(2);
  Tensor out({B, 3, seg.dim(1), seg.dim(2)});
  const Tensor* ch[3] = {&seg, &gaf, &rp};
  constexpr double slack = 1e-12;
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const double v = (*ch[c])[b * hw + i];
        if (!(v >= -slack && v <= 1.0 + slack)) {
          throw InvariantError("image pixel out of [0, 1]: channel " + std::to_string(c) + " value " +
                               std::to_string(v));
        }
        out[(b * 3 + c) * hw + i] = std::clamp(v, 0.0, 1.0);
      }
  return out;
}

Tensor encode_images(const Tensor& X, const VisionConfig& cfg) {
  return compose_image(seg_encode(X, cfg), gaf_encode(X, cfg), rp_encode(X, cfg));
}

double period_objective(std::span<const double> x, std::size_t k) {
  if (k == 0 || x.size() < 2 * k) {
    throw ConfigError("period candidate " + std::to_string(k) + " needs at least " + std::to_string(2 * k) +
                      " points");
  }
  const std::size_t rows = x.size() / k;
  const std::size_t off = x.size() - rows * k;
  auto at = [&](std::size_t r, std::size_t c) { return x[off + r * k + c]; };
  double total = 0.0;
  for (std::size_t j = 0; j + 1 < k; ++j) {
    double ma = 0, mb = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      ma += at(r, j);
      mb += at(r, j + 1);
    }
    ma /= static_cast<double>(rows);
    mb /= static_cast<double>(rows);
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double a = at(r, j) - ma, b = at(r, j + 1) - mb;
      sab += a * b;
      saa += a * a;
      sbb += b * b;
    }
    if (saa > 0 && sbb > 0) total += sab / std::sqrt(saa * sbb);
  }
  return total;
}

std::size_t select_period(std::span<const double> x, std::vector<std::size_t> candidates) {
  if (candidates.empty()) throw ConfigError("select_period: empty candidate set");
  std::sort(candidates.begin(), candidates.end());
  if (candidates.size() == 1) {
    if (candidates[0] == 0) throw ConfigError("select_period: candidates must be positive");
    return candidates[0];
  }
  std::size_t best = candidates.front();
  double best_v = period_objective(x, best);
  for (std::size_t i = 1; i < candidates.size(); ++i) {
    const double v = period_objective(x, candidates[i]);
    if (v > best_v) {
      best_v = v;
      best = candidates[i];
    }
  }
  return best;
}

}  // namespace ldm4ts::vision
