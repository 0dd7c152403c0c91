#include "ldm4ts/data/normalize.hpp"

#include <algorithm>
#include <cmath>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::data {

Normalized instance_normalize(const Tensor& X, double norm_const) {
  if (X.rank() != 3) throw DimensionError("instance_normalize expects B x L x D, got " + shape_str(X.shape()));
  if (!(norm_const > 0)) throw ConfigError("norm_const must be positive");
  const std::size_t B = X.dim(0), L = X.dim(1), D = X.dim(2);
  Normalized out{Tensor(X.shape()), {Tensor({B, 1, D}), Tensor({B, 1, D}), norm_const}};
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t d = 0; d < D; ++d) {
      double mu = 0.0;
      for (std::size_t t = 0; t < L; ++t) mu += X[(b * L + t) * D + d];
      mu /= static_cast<double>(L);
      double var = 0.0;
      for (std::size_t t = 0; t < L; ++t) {
        const double e = X[(b * L + t) * D + d] - mu;
        var += e * e;
      }
      const double sd = std::max(std::sqrt(var / static_cast<double>(L)), kStdevFloor);
      out.stats.means[b * D + d] = mu;
      out.stats.stdev[b * D + d] = sd;
      const double div = sd * norm_const;
      for (std::size_t t = 0; t < L; ++t) out.X[(b * L + t) * D + d] = (X[(b * L + t) * D + d] - mu) / div;
    }
  }
  return out;
}

Tensor denormalize(const Tensor& Y, const NormStats& stats) {
  if (Y.rank() != 3 || Y.dim(0) != stats.means.dim(0) || Y.dim(2) != stats.means.dim(2)) {
    throw DimensionError("denormalize shape " + shape_str(Y.shape()) + " vs stats " + shape_str(stats.means.shape()));
  }
  const std::size_t B = Y.dim(0), H = Y.dim(1), D = Y.dim(2);
  Tensor out(Y.shape());
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t t = 0; t < H; ++t)
      for (std::size_t d = 0; d < D; ++d) {
        const std::size_t k = (b * H + t) * D + d;
        out[k] = Y[k] * (stats.stdev[b * D + d] * stats.norm_const) + stats.means[b * D + d];
      }
  return out;
}

}  // namespace ldm4ts::data
