#pragma once

#include <span>
#include <vector>

#include "ldm4ts/numerics/ops.hpp"
#include "ldm4ts/pipeline/pipeline.hpp"

namespace ldm4ts::pipeline {

// Rows of axis 0, in the order given.
Tensor take_rows(const Tensor& t, std::span<const std::size_t> idx);
Tensor cat_rows(const std::vector<Tensor>& parts);
// First h steps of a B x H x D tensor.
Tensor prefix_steps(const Tensor& Y, std::size_t h);
// Three-channel images of raw windows under the model's vision settings.
Tensor window_images(const Model& m, const Tensor& X);
ag::Var denormalize(const ag::Var& y, const data::NormStats& st);

}  // namespace ldm4ts::pipeline
