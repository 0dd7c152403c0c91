#include "ldm4ts/data/metrics.hpp"

#include <cmath>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::data {

Metrics compute_metrics(const Tensor& Y, const Tensor& Y_hat) {
  if (Y.shape() != Y_hat.shape()) {
    throw DimensionError("metrics shape mismatch: " + shape_str(Y.shape()) + " vs " + shape_str(Y_hat.shape()));
  }
  if (Y.numel() == 0) throw DimensionError("metrics over empty tensors");
  Metrics m;
  for (std::size_t i = 0; i < Y.numel(); ++i) {
    const double e = Y_hat[i] - Y[i];
    m.mse += e * e;
    m.mae += std::abs(e);
  }
  m.mse /= static_cast<double>(Y.numel());
  m.mae /= static_cast<double>(Y.numel());
  return m;
}

}  // namespace ldm4ts::data
