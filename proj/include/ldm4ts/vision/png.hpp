#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::vision {

// round-half-up of 255 * p, p clamped to [0, 1].
std::uint8_t quantize(double p);

// 8-bit PNG (color type 0 for channels == 1, 2 for channels == 3) from
// interleaved samples, filter 0 on every row, zlib level 6.
std::vector<std::uint8_t> encode_png(const std::vector<std::uint8_t>& pixels, std::size_t width,
                                     std::size_t height, std::size_t channels);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Writes, per batch item i, {split}_{index}_rgb.png (R=SEG, G=GAF, B=RP) and
// {split}_{index}_{seg,gaf,rp}.png grayscale files (unless grayscale is off),
// index = first_index + i.
// Returns the written paths.
std::vector<std::string> export_png(const Tensor& images, const std::string& dir, const std::string& split,
                                    std::size_t first_index = 0, bool grayscale = true);

}  // namespace ldm4ts::vision
