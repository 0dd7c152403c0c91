#include <png.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>

#include "doctest.h"
#include "ldm4ts/errors.hpp"
#include "ldm4ts/numerics/rng.hpp"
#include "ldm4ts/vision/encoders.hpp"
#include "ldm4ts/vision/png.hpp"

using namespace ldm4ts;
using namespace ldm4ts::vision;

namespace {

Tensor window(const std::vector<double>& x) {
  return Tensor({1, x.size(), 1}, x);
}

VisionConfig native(std::size_t rows, std::size_t period) {
  VisionConfig c;
  c.period = period;
  c.height = rows;
  c.width = period;
  return c;
}

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

// Independent oracle for the period objective.
double objective_oracle(const std::vector<double>& x, std::size_t k) {
  const std::size_t n = x.size() / k;
  const std::size_t start = x.size() - n * k;
  double total = 0;
  for (std::size_t j = 0; j + 1 < k; ++j) {
    std::vector<double> a, b;
    for (std::size_t r = 0; r < n; ++r) {
      a.push_back(x[start + r * k + j]);
      b.push_back(x[start + r * k + j + 1]);
    }
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
    double c = 0, va = 0, vb = 0;
    for (std::size_t r = 0; r < n; ++r) {
      c += (a[r] - ma) * (b[r] - mb);
      va += (a[r] - ma) * (a[r] - ma);
      vb += (b[r] - mb) * (b[r] - mb);
    }
    if (va > 0 && vb > 0) total += c / std::sqrt(va) / std::sqrt(vb);
  }
  return total;
}

}  // namespace

TEST_CASE("minmax normalization") {
  auto a = minmax_normalize(std::vector<double>{0, 5, 10});
  CHECK(a[0] == 0.0);
  CHECK(std::abs(a[1] - 0.5) < 1e-8);
  CHECK(std::abs(a[2] - 1.0) < 1e-8);
  CHECK(a[2] < 1.0);
  for (double v : minmax_normalize(std::vector<double>{7, 7, 7})) CHECK(v == 0.0);
  RngStream rng(1, "mm");
  auto x = rng.normal_tensor({33}).vec();
  auto y = minmax_normalize(x);
  const double lo = *std::min_element(x.begin(), x.end()), hi = *std::max_element(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == (x[i] - lo) / (hi - lo + 1e-8));
}

TEST_CASE("seg encoding") {
  Tensor s = seg_encode(window({0, 1, 2, 3}), native(2, 2));
  const double den = 3.0 + 1e-8;
  CHECK(s[0] == 0.0);
  CHECK(s[1] == 1.0 / den);
  CHECK(s[2] == 2.0 / den);
  CHECK(s[3] == 3.0 / den);

  Tensor g = seg_grid(std::vector<double>{1, 2, 3, 4, 5}, 2);
  CHECK(g.shape() == Shape{3, 2});
  CHECK(g.vec() == std::vector<double>{0, 1, 2, 3, 4, 5});

  // Period-24 sinusoid: every grid row identical, columns constant.
  std::vector<double> x(96);
  for (std::size_t t = 0; t < 96; ++t) x[t] = std::sin(2 * std::numbers::pi * static_cast<double>(t) / 24.0);
  Tensor img = seg_encode(window(x), native(4, 24));
  auto psi = minmax_normalize(x);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 24; ++c) {
      CHECK(img[r * 24 + c] == psi[r * 24 + c]);
      CHECK(std::abs(img[r * 24 + c] - img[c]) < 1e-12);
    }
}

TEST_CASE("gaf encoding") {
  VisionConfig c = native(3, 3);
  Tensor flat = gaf_encode(window({4, 4, 4}), c);
  for (double v : flat.data()) CHECK(v == 0.0);

  VisionConfig c2 = native(2, 2);
  Tensor G = gaf_matrix(std::vector<double>{-3, 9}, 2, 1, c2);
  CHECK(std::abs(G[0] - (-1)) < 1e-4);
  CHECK(std::abs(G[1]) < 1e-4);
  CHECK(std::abs(G[2]) < 1e-4);
  CHECK(std::abs(G[3] - 1) < 1e-4);

  RngStream rng(2, "gaf");
  auto x = rng.normal_tensor({8}).vec();
  auto xt = minmax_normalize(x);
  Tensor M = gaf_matrix(x, 8, 1, native(8, 8));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) CHECK(std::abs(M[i * 8 + j] - std::cos(std::acos(xt[i]) + std::acos(xt[j]))) < 1e-10);

  VisionConfig d = native(8, 8);
  d.gaf = GafVariant::Difference;
  Tensor Md = gaf_matrix(x, 8, 1, d);
  for (std::size_t i = 0; i < 8; ++i) CHECK(std::abs(Md[i * 8 + i] - 1.0) < 1e-12);
}

TEST_CASE("rp encoding") {
  VisionConfig c = native(4, 4);
  Tensor same({1, 4, 2}, 0.7);
  Tensor ones = rp_matrix(same.data(), 4, 2, c);
  for (double v : ones.data()) CHECK(v == 1.0);
  Tensor two({1, 2, 2}, std::vector<double>{0, 0, 1, 1});
  Tensor R = rp_matrix(two.data(), 2, 2, native(2, 2));
  CHECK(R[1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  CHECK(std::abs(R[1] - 0.3679) < 1e-4);

  RngStream rng(3, "rp");
  Tensor w = rng.normal_tensor({8, 3});
  Tensor Rw = rp_matrix(w.data(), 8, 3, native(8, 8));
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double s = 0;
      for (std::size_t d = 0; d < 3; ++d) s += (w[i * 3 + d] - w[j * 3 + d]) * (w[i * 3 + d] - w[j * 3 + d]);
      CHECK(std::abs(Rw[i * 8 + j] - std::exp(-s / 2)) < 1e-12);
    }
}

TEST_CASE("rp heaviside variant") {
  RngStream rng(4, "rph");
  Tensor w = rng.normal_tensor({20, 2});
  VisionConfig c = native(20, 20);
  c.rp = RpVariant::Heaviside;
  c.rp_embed = 3;
  c.rp_delay = 2;
  Tensor R = rp_matrix(w.data(), 20, 2, c);
  CHECK(R.shape() == Shape{16, 16});
  std::size_t ones = 0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) {
      CHECK((R[i * 16 + j] == 0.0 || R[i * 16 + j] == 1.0));
      CHECK(R[i * 16 + j] == R[j * 16 + i]);
      ones += R[i * 16 + j] == 1.0;
    }
  // Median threshold: about half the off-diagonal pairs recur.
  CHECK(ones >= 16 + 120);
  CHECK(ones <= 16 + 2 * 121);
  c.rp_embed = 11;
  CHECK_THROWS_AS(rp_matrix(w.data(), 20, 2, c), ConfigError);
}

TEST_CASE("compose image") {
  Tensor a({1, 64, 64}, 0.2), b({1, 64, 64}, 0.5), r({1, 64, 64}, 0.8);
  Tensor img = compose_image(a, b, r);
  CHECK(img.shape() == Shape{1, 3, 64, 64});
  CHECK(img.at({0, 0, 3, 4}) == 0.2);
  CHECK(img.at({0, 1, 63, 0}) == 0.5);
  CHECK(img.at({0, 2, 10, 10}) == 0.8);
  RngStream rng(5, "compose");
  Tensor g = rng.uniform_tensor({2, 8, 8}, 0, 1);
  Tensor im2 = compose_image(Tensor({2, 8, 8}), g, Tensor({2, 8, 8}));
  for (std::size_t bi = 0; bi < 2; ++bi)
    for (std::size_t i = 0; i < 64; ++i) CHECK(im2[(bi * 3 + 1) * 64 + i] == g[bi * 64 + i]);
  Tensor bad({1, 64, 64}, 1.1);
  CHECK_THROWS_AS(compose_image(a, bad, r), InvariantError);
  CHECK_THROWS_AS(compose_image(a, Tensor({1, 32, 32}), r), DimensionError);
}

TEST_CASE("encoders are deterministic and in range") {
  RngStream rng(6, "enc");
  Tensor X = rng.normal_tensor({3, 96, 4});
  VisionConfig c;
  Tensor a = encode_images(X, c), b = encode_images(X, c);
  CHECK(a == b);
  CHECK(a.shape() == Shape{3, 3, 64, 64});
  CHECK(a.min() >= 0.0);
  CHECK(a.max() <= 1.0);
}

TEST_CASE("select period") {
  std::vector<double> flat(12, 3.0);
  CHECK(select_period(flat, {3, 2}) == 2);
  CHECK(select_period(flat, {7}) == 7);
  CHECK_THROWS_AS(select_period(flat, {}), ConfigError);

  RngStream rng(0, "period");
  std::vector<double> x(240);
  for (std::size_t t = 0; t < 240; ++t)
    x[t] = std::sin(2 * std::numbers::pi * static_cast<double>(t) / 24.0) + 0.05 * rng.normal();
  std::vector<std::size_t> cands{6, 8, 12, 24};
  std::size_t best = cands[0];
  double bv = objective_oracle(x, best);
  for (std::size_t k : cands) {
    const double v = objective_oracle(x, k);
    CHECK(std::abs(v - period_objective(x, k)) < 1e-10);
    if (v > bv) {
      bv = v;
      best = k;
    }
  }
  CHECK(select_period(x, cands) == best);
}

TEST_CASE("png quantization and export") {
  CHECK(quantize(0.0) == 0);
  CHECK(quantize(1.0) == 255);
  CHECK(quantize(0.5) == 128);

  const auto dir = std::filesystem::temp_directory_path() / "ldm4ts_png_test";
  std::filesystem::remove_all(dir);
  RngStream rng(7, "png");
  Tensor img = rng.uniform_tensor({2, 3, 16, 12}, 0, 1);
  auto paths = export_png(img, dir.string(), "train", 5);
  CHECK(paths.size() == 8);
  CHECK(std::filesystem::exists(dir / "train_5_rgb.png"));
  CHECK(std::filesystem::exists(dir / "train_6_rp.png"));

  for (const auto& p : paths) {
    png_image im{};
    im.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_file(&im, p.c_str()));
    const bool rgb = p.find("_rgb") != std::string::npos;
    im.format = rgb ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(im));
    REQUIRE(png_image_finish_read(&im, nullptr, buf.data(), 0, nullptr));
    CHECK(im.width == 12);
    CHECK(im.height == 16);
    // Decoded samples equal the quantized tensor.
    const std::size_t b = p.find("train_6") != std::string::npos ? 1 : 0;
    if (p.find("_gaf") != std::string::npos)
      for (std::size_t i = 0; i < 192; ++i) CHECK(buf[i] == quantize(img[(b * 3 + 1) * 192 + i]));
    // Re-encoding the independently decoded pixels reproduces the file.
    CHECK(encode_png(buf, 12, 16, rgb ? 3 : 1) == read_bytes(p));
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(export_png(img, "/proc/forbidden/dir", "x"), IoError);
}
