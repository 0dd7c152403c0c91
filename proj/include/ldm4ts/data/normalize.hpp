#pragma once

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::data {

inline constexpr double kStdevFloor = 1e-5;

struct NormStats {
  Tensor means;  // B x 1 x D
  Tensor stdev;  // B x 1 x D, population std floored at kStdevFloor
  double norm_const = 1.0;
};

struct Normalized {
  Tensor X;
  NormStats stats;
};

// Per-instance, per-feature standardization over the time axis of B x L x D.
// The divisor is stdev * norm_const.
Normalized instance_normalize(const Tensor& X, double norm_const = 1.0);
Tensor denormalize(const Tensor& Y, const NormStats& stats);

}  // namespace ldm4ts::data
