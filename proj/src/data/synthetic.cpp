#include "ldm4ts/data/synthetic.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "ldm4ts/numerics/rng.hpp"

namespace ldm4ts::data {

std::string hourly_timestamp(std::size_t i) {
  // Civil-from-days (proleptic Gregorian), days counted from 1970-01-01.
  const long long base = 16983;  // 2016-07-01
  long long z = base + static_cast<long long>(i / 24) + 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const long long doe = z - era * 146097;
  const long long yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  long long y = yoe + era * 400;
  const long long doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const long long mp = (5 * doy + 2) / 153;
  const long long d = doy - (153 * mp + 2) / 5 + 1;
  const long long m = mp < 10 ? mp + 3 : mp - 9;
  if (m <= 2) ++y;
  char buf[96];
  std::snprintf(buf, sizeof buf, "%04lld-%02lld-%02lld %02zu:00:00", y, m, d, i % 24);
  return buf;
}

SeriesFrame synthetic_sinusoids(std::size_t rows, std::size_t dims, std::uint64_t seed, double noise) {
  SeriesFrame f;
  f.frequency = "1h";
  RngStream rng(seed, "synthetic");
  const double w1 = 2.0 * std::numbers::pi / 24.0;
  const double w2 = 2.0 * std::numbers::pi / (24.0 * std::sqrt(3.0));
  f.values = Tensor({rows, dims});
  for (std::size_t d = 0; d < dims; ++d) f.features.push_back("x" + std::to_string(d));
  for (std::size_t t = 0; t < rows; ++t) {
    f.timestamps.push_back(hourly_timestamp(t));
    for (std::size_t d = 0; d < dims; ++d) {
      const double a = 0.9 * static_cast<double>(d), b = 1.7 * static_cast<double>(d) + 0.3;
      const double tt = static_cast<double>(t);
      f.values[t * dims + d] = std::sin(w1 * tt + a) + 0.6 * std::sin(w2 * tt + b) + noise * rng.normal();
    }
  }
  return f;
}

}  // namespace ldm4ts::data
