#include "ldm4ts/data/series.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ldm4ts/errors.hpp"

namespace ldm4ts::data {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t p = line.find(',', start);
    out.push_back(trim(line.substr(start, p == std::string_view::npos ? std::string_view::npos : p - start)));
    if (p == std::string_view::npos) break;
    start = p + 1;
  }
  return out;
}

}  // namespace

SeriesFrame parse_csv(std::istream& in, const std::string& source,
                      std::optional<std::size_t> expected_dims) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError(source + ": empty file, header row missing");
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_commas(line);
  if (header.empty() || header[0] != "date") {
    throw FormatError(source + ": header must start with a \"date\" column");
  }
  if (header.size() < 2) throw FormatError(source + ": no value columns in header");
  SeriesFrame f;
  for (std::size_t i = 1; i < header.size(); ++i) f.features.emplace_back(header[i]);
  const std::size_t d = f.features.size();
  if (expected_dims && *expected_dims != d) {
    throw ValidationError(source + ": expected " + std::to_string(*expected_dims) +
                          " value columns, found " + std::to_string(d));
  }
  std::vector<double> vals;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto cells = split_commas(line);
    if (cells.size() != d + 1) {
      throw FormatError(source + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " cells, header has " + std::to_string(d + 1));
    }
    std::string ts(cells[0]);
    if (!f.timestamps.empty() && !(f.timestamps.back() < ts)) {
      throw ValidationError(source + ": timestamps not strictly increasing at row " + std::to_string(row) +
                            " (" + ts + ")");
    }
    f.timestamps.push_back(std::move(ts));
    for (std::size_t c = 0; c < d; ++c) {
      const std::string_view cell = cells[c + 1];
      double v = 0.0;
      const char* end = cell.data() + cell.size();
      auto [ptr, ec] = std::from_chars(cell.data(), end, v);
      if (cell.empty() || ec != std::errc() || ptr != end || !std::isfinite(v)) {
        throw ParseError(source + ": non-numeric value \"" + std::string(cell) + "\" at row " +
                         std::to_string(row) + ", column \"" + f.features[c] + "\"");
      }
      vals.push_back(v);
    }
  }
  if (row == 0) throw FormatError(source + ": no data rows");
  f.values = Tensor({row, d}, std::move(vals));
  return f;
}

SeriesFrame load_csv(const std::string& path, std::optional<std::size_t> expected_dims) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return parse_csv(in, path, expected_dims);
}

StandardScaler StandardScaler::fit(const Tensor& values, std::size_t rows) {
  const std::size_t d = values.dim(1);
  if (rows == 0 || rows > values.dim(0)) throw ValidationError("scaler fit rows out of range");
  StandardScaler s;
  s.mean.assign(d, 0.0);
  s.scale.assign(d, 0.0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) s.mean[c] += values[r * d + c];
  for (auto& m : s.mean) m /= static_cast<double>(rows);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < d; ++c) {
      const double e = values[r * d + c] - s.mean[c];
      s.scale[c] += e * e;
    }
  for (auto& v : s.scale) {
    v = std::sqrt(v / static_cast<double>(rows));
    if (v == 0.0) v = 1.0;
  }
  return s;
}

Tensor StandardScaler::transform(const Tensor& values) const {
  Tensor out = values;
  const std::size_t d = mean.size();
  if (values.shape().back() != d) throw DimensionError("scaler feature count mismatch");
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (out[i] - mean[i % d]) / scale[i % d];
  return out;
}

Tensor StandardScaler::inverse(const Tensor& values) const {
  Tensor out = values;
  const std::size_t d = mean.size();
  if (values.shape().back() != d) throw DimensionError("scaler feature count mismatch");
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] * scale[i % d] + mean[i % d];
  return out;
}

}  // namespace ldm4ts::data
