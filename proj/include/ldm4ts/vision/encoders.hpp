#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::vision {

enum class RpVariant { Gaussian, Heaviside };
enum class GafVariant { Summation, Difference };

struct VisionConfig {
  std::size_t period = 24;
  std::size_t height = 64;
  std::size_t width = 64;
  double eps = 1e-8;
  GafVariant gaf = GafVariant::Summation;
  RpVariant rp = RpVariant::Gaussian;
  std::size_t rp_embed = 1;
  std::size_t rp_delay = 1;
  double rp_threshold = -1.0;  // negative: median pairwise distance
};

// (x - min) / (max - min + eps).
std::vector<double> minmax_normalize(std::span<const double> x, double eps = 1e-8);

// Left zero-padded period grid ((L + p) / T) x T, row i holding period i.
Tensor seg_grid(std::span<const double> x, std::size_t period);

// Channel encoders over B x L x D windows, each returning B x height x width
// with values in [0, 1].
Tensor seg_encode(const Tensor& X, const VisionConfig& cfg);
Tensor gaf_encode(const Tensor& X, const VisionConfig& cfg);
Tensor rp_encode(const Tensor& X, const VisionConfig& cfg);

// Pre-resize matrices for one window (L x D row-major). GAF is the
// feature-average in [-1, 1]; RP is L' x L' with L' = L - (m-1)*tau.
Tensor gaf_matrix(std::span<const double> window, std::size_t L, std::size_t D, const VisionConfig& cfg);
Tensor rp_matrix(std::span<const double> window, std::size_t L, std::size_t D, const VisionConfig& cfg);

// Stacks [SEG; GAF; RP] into B x 3 x H x W. Values within 1e-12 of the unit
// interval are clamped onto it; anything further out raises InvariantError.
Tensor compose_image(const Tensor& seg, const Tensor& gaf, const Tensor& rp);

// All three channels of X (B x L x D).
Tensor encode_images(const Tensor& X, const VisionConfig& cfg);

// Adjacent-column Pearson correlation summed over the grid built from the
// last floor(L / k) full periods; constant columns contribute 0.
double period_objective(std::span<const double> x, std::size_t k);
// Argmax of period_objective; ties go to the smallest candidate.
std::size_t select_period(std::span<const double> x, std::vector<std::size_t> candidates);

}  // namespace ldm4ts::vision
