#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "ldm4ts/numerics/tensor.hpp"

namespace ldm4ts {

std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);

// Counter-based random stream keyed by (seed, label). Draw k of the stream
// depends only on (seed, label, k), so independent labels never interfere
// and replays are bit-identical on every platform with IEEE doubles.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::string label);

  std::uint64_t seed() const { return seed_; }
  const std::string& label() const { return label_; }
  std::uint64_t counter() const { return counter_; }

  // Derive an independent child stream, e.g. per epoch or per batch.
  RngStream fork(std::string_view sublabel) const;
  RngStream fork(std::uint64_t index) const;

  std::uint64_t next_u64();
  // Uniform in (0, 1].
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller.
  double normal();

  Tensor normal_tensor(const Shape& shape, double stddev = 1.0);
  Tensor uniform_tensor(const Shape& shape, double lo, double hi);
  // Normal resampled until |x| <= 2*stddev.
  Tensor truncated_normal_tensor(const Shape& shape, double stddev);

 private:
  std::uint64_t seed_;
  std::string label_;
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace ldm4ts
