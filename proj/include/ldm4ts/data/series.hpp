#pragma once

#include <cstddef>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts::data {

struct SeriesFrame {
  std::vector<std::string> timestamps;
  Tensor values;  // N x D
  std::vector<std::string> features;
  std::string frequency;

  std::size_t rows() const { return timestamps.size(); }
  std::size_t dims() const { return features.size(); }
};

// Header row required with "date" first; the remaining columns must parse as
// finite numbers. Timestamps must increase strictly (lexicographic order,
// which is chronological for fixed-width ISO-8601). Rows in parse errors are
// counted from 1 at the first data row.
SeriesFrame load_csv(const std::string& path, std::optional<std::size_t> expected_dims = {});
SeriesFrame parse_csv(std::istream& in, const std::string& source,
                      std::optional<std::size_t> expected_dims = {});

// Per-feature standardization fitted on a row prefix (the training split).
struct StandardScaler {
  std::vector<double> mean;
  std::vector<double> scale;

  static StandardScaler fit(const Tensor& values, std::size_t rows);
  Tensor transform(const Tensor& values) const;
  Tensor inverse(const Tensor& values) const;  // any shape with trailing D
};

}  // namespace ldm4ts::data
