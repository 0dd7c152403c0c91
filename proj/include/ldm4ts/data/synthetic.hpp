#pragma once

#include <cstdint>
#include <string>

#include "ldm4ts/data/series.hpp"

namespace ldm4ts::data {

// Hourly ISO-8601 timestamps starting 2016-07-01 00:00:00.
std::string hourly_timestamp(std::size_t i);

// Feature d is sin(2*pi*t/24 + a_d) + 0.6*sin(2*pi*t/(24*sqrt(3)) + b_d) plus
// Gaussian noise with std `noise`. The two periods are incommensurate.
SeriesFrame synthetic_sinusoids(std::size_t rows, std::size_t dims, std::uint64_t seed,
                                double noise = 0.05);

}  // namespace ldm4ts::data
