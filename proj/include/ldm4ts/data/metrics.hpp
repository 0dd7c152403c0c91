#pragma once

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::data {

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

// Means over every element; shapes must match exactly.
Metrics compute_metrics(const Tensor& Y, const Tensor& Y_hat);

}  // namespace ldm4ts::data
