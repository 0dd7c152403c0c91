#pragma once

#include <cstddef>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts {

// Half-pixel-center bilinear resample over the two trailing axes. Output
// pixel i samples source coordinate (i + 0.5) * r / H - 0.5, clamped to the
// valid range. Leading axes are treated as a batch.
Tensor bilinear_resize(const Tensor& img, std::size_t out_h, std::size_t out_w);

// Adjoint of bilinear_resize: scatters an output-space gradient back onto
// the (in_h, in_w) source grid.
Tensor bilinear_resize_adjoint(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

}  // namespace ldm4ts
